#include <doctest.h>

#include <set>

#include "tndve/error.hpp"
#include "tndve/simulation.hpp"

using namespace tndve;

TEST_CASE("philox known answers") {
  // Random123 kat_vectors for philox4x32_10.
  auto r = philox4x32_10({0u, 0u, 0u, 0u}, {0u, 0u});
  CHECK(r == PhiloxCounter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  r = philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  CHECK(r == PhiloxCounter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  r = philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  CHECK(r == PhiloxCounter{0xd16cfe09u, 0x94fdcceb, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("uniform mapping stays inside the open interval") {
  CHECK(to_unit(0u) > 0.0);
  CHECK(to_unit(0xffffffffu) < 1.0);
}

TEST_CASE("stream keys separate cells") {
  std::set<PhiloxKey> keys;
  for (std::uint64_t s = 0; s < 3; ++s)
    for (std::uint64_t g = 0; g < 4; ++g)
      for (std::uint64_t r = 0; r < 50; ++r) keys.insert(stream_key(kDefaultSeed, s, g, r));
  CHECK(keys.size() == 3u * 4u * 50u);
  CHECK(stream_key(1, 2, 3, 4) == stream_key(1, 2, 3, 4));
}

TEST_CASE("default parameter tables") {
  const auto b = default_binary_params(Setting::binary);
  CHECK(b.p_u == 0.5);
  CHECK(b.p_0z == 0.2);
  CHECK(b.p_uz == 0.4);
  CHECK(b.p_0a == 0.2);
  CHECK(b.p_ua == 0.4);
  CHECK(b.eta_0y == std::log(0.01));
  CHECK(b.eta_uy == std::log(0.5));
  CHECK(b.p_0w == 0.02);
  CHECK(b.p_uw == 0.02);
  CHECK(b.p_0d == 0.02);
  CHECK(b.p_ud == -0.015);
  CHECK(b.p_ys == 0.1);
  CHECK(b.p_uys == 0.4);
  auto nr = default_binary_params(Setting::binary_nonrare);
  CHECK(nr.eta_0y == std::log(0.2));
  nr.eta_0y = b.eta_0y;
  CHECK(nr == b);

  const auto c = default_continuous_params(Setting::continuous);
  CHECK(c.mu_0a == -1.0);
  CHECK(c.mu_ua == -1.0);
  CHECK(c.mu_xa == 0.25);
  CHECK(c.mu_uz == 4.0);
  CHECK(c.sigma_z == 0.25);
  CHECK(c.mu_0y == std::log(0.01));
  CHECK(c.mu_uy == -2.0);
  CHECK(c.mu_uw == 2.0);
  CHECK(c.mu_uxs == 1.0);
  CHECK(default_continuous_params(Setting::continuous_nonrare).mu_0y == std::log(0.2));
  CHECK_THROWS_AS(parse_setting("weekly"), ConfigError);
  CHECK(parse_setting("binary-nonrare") == Setting::binary_nonrare);
}

TEST_CASE("parameter validation") {
  auto b = default_binary_params();
  b.p_ud = -0.5;
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b = default_binary_params();
  b.eta_0y = 0.0;  // risk exp(0) at U = 0, A = 0 is fine, exp(beta0 + ...) too
  CHECK_NOTHROW(b.validate());
  b.beta0 = 0.5;
  CHECK_THROWS_AS(b.validate(), ConfigError);
  auto c = default_continuous_params();
  c.sigma_w = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = default_continuous_params();
  c.mu_0y = 0.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("binary generator keeps exactly the selected population members") {
  const auto p = default_binary_params();
  const PhiloxKey key = stream_key(5, 1, 0, 0);
  const std::int64_t n = 100'000;
  const auto s = generate_binary_sample(p, n, key);
  Eigen::Index row = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto m = draw_binary_member(p, key, static_cast<std::uint64_t>(i));
    if (!m.s) continue;
    REQUIRE(row < s.n());
    CHECK(std::max({m.y, m.d, m.w}) == 1);
    CHECK(s.a()(row) == m.a);
    CHECK(s.y()(row) == m.y);
    CHECK(s.z()(row, 0) == m.z);
    CHECK(s.w()(row, 0) == m.w);
    ++row;
  }
  CHECK(row == s.n());
  CHECK(s.x().cols() == 0);
}

TEST_CASE("continuous generator keeps exactly the selected population members") {
  const auto p = default_continuous_params();
  const PhiloxKey key = stream_key(5, 2, 0, 0);
  const std::int64_t n = 100'000;
  const auto s = generate_continuous_sample(p, n, key);
  Eigen::Index row = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto m = draw_continuous_member(p, key, static_cast<std::uint64_t>(i));
    if (!m.s) continue;
    REQUIRE(row < s.n());
    CHECK(std::max(m.y, m.d) == 1);
    CHECK(s.a()(row) == m.a);
    CHECK(s.y()(row) == m.y);
    CHECK(s.z()(row, 0) == m.z);
    CHECK(s.w()(row, 0) == m.w);
    CHECK(s.x()(row, 0) == m.x);
    ++row;
  }
  CHECK(row == s.n());
}

TEST_CASE("generators are deterministic") {
  const auto a = generate_binary_sample(default_binary_params(), 50'000, std::uint64_t{9});
  const auto b = generate_binary_sample(default_binary_params(), 50'000, std::uint64_t{9});
  const auto c = generate_binary_sample(default_binary_params(), 50'000, std::uint64_t{10});
  CHECK(a.a() == b.a());
  CHECK(a.y() == b.y());
  CHECK(a.z() == b.z());
  CHECK(a.w() == b.w());
  CHECK((a.n() != c.n() || a.z() != c.z()));
  const auto d = generate_continuous_sample(default_continuous_params(), 50'000, std::uint64_t{9});
  const auto e = generate_continuous_sample(default_continuous_params(), 50'000, std::uint64_t{9});
  CHECK(d.z() == e.z());
  CHECK(d.x() == e.x());
}

TEST_CASE("zero selection is an error") {
  auto p = default_binary_params();
  p.p_ys = 0.0;
  p.p_uys = 0.0;
  CHECK_THROWS_AS(generate_binary_sample(p, 10'000, std::uint64_t{1}), DegenerateDataError);
  CHECK_THROWS_AS(generate_binary_sample(default_binary_params(), 0, std::uint64_t{1}), ConfigError);
}

TEST_CASE("analytic population quantities") {
  auto p = default_binary_params();
  // Risk with everyone unvaccinated: 0.01 (0.5 + 0.5 * 0.5).
  CHECK(counterfactual_prevalence(p, 0) == doctest::Approx(0.0075).epsilon(1e-14));
  double prev = 1.0;
  for (double b : {0.0, std::log(0.7), std::log(0.5), std::log(0.2)}) {
    p.beta0 = b;
    const double now = population_prevalence(p, 1);
    CHECK(now < prev);
    prev = now;
  }
  auto c = default_continuous_params();
  prev = 1.0;
  for (double b : {0.0, std::log(0.7), std::log(0.5), std::log(0.2)}) {
    c.beta0 = b;
    const double now = population_prevalence(c, 1);
    CHECK(now < prev);
    prev = now;
  }
  // E[exp(-2U - X/4)] / 100 factorises over U and X.
  const double closed = 0.01 * (1.0 - std::exp(-2.0)) / 2.0 * (1.0 - std::exp(-0.25)) / 0.25;
  CHECK(counterfactual_prevalence(c, 0) == doctest::Approx(closed).epsilon(1e-12));
}

TEST_CASE("selected sample size matches the analytic selection probability") {
  const std::int64_t n = kDeskPopulation;
  for (int rep = 0; rep < 3; ++rep) {
    const auto bp = default_binary_params();
    const double pb = selection_probability(bp);
    const auto sb = generate_binary_sample(bp, n, stream_key(3, 1, 0, rep));
    CHECK(std::fabs(sb.n() - n * pb) < 4.0 * std::sqrt(n * pb * (1 - pb)));
    const auto cp = default_continuous_params();
    const double pc = selection_probability(cp);
    const auto sc = generate_continuous_sample(cp, n, stream_key(3, 2, 0, rep));
    CHECK(std::fabs(sc.n() - n * pc) < 4.0 * std::sqrt(n * pc * (1 - pc)));
  }
}

TEST_CASE("population prevalence matches simulated members") {
  const auto p = default_binary_params();
  const PhiloxKey key = stream_key(8, 1, 0, 0);
  const int n = 2'000'000;
  double cases[2] = {0, 0}, total[2] = {0, 0};
  for (int i = 0; i < n; ++i) {
    const auto m = draw_binary_member(p, key, static_cast<std::uint64_t>(i));
    total[m.a] += 1;
    cases[m.a] += m.y;
  }
  for (int a = 0; a <= 1; ++a) {
    const double pi = population_prevalence(p, a);
    CHECK(std::fabs(cases[a] / total[a] - pi) < 4.0 * std::sqrt(pi * (1 - pi) / total[a]));
  }
}

TEST_CASE("scenario config") {
  const auto doc = ConfigDocument::parse(R"(
[scenario]
name = "small"
setting = "continuous"
population_size = 20000
replications = 3
seed = 11
estimators = ["nc", "logistic"]
risk_ratios = [0.5, 1.0]
threads = 2

[dgp]
mu_uz = 3.5

[bridge]
moment = ["1", "W", "A", "X", "A*W"]
)");
  const auto c = ScenarioConfig::from_config(doc);
  CHECK(c.name == "small");
  CHECK(c.setting == Setting::continuous);
  CHECK(c.population_size == 20000);
  CHECK(c.replications == 3);
  CHECK(c.seed == 11u);
  CHECK(c.estimators == std::vector<EstimatorKind>{EstimatorKind::nc, EstimatorKind::logistic});
  REQUIRE(c.beta_grid.size() == 2);
  CHECK(c.beta_grid[0] == std::log(0.5));
  CHECK(c.beta_grid[1] == 0.0);
  CHECK(c.continuous.mu_uz == 3.5);
  CHECK(c.moment.size() == 5);

  CHECK_THROWS_AS(ScenarioConfig::from_config(ConfigDocument::parse("[scenario]\nsetting = \"binary\"\nfoo = 1\n")),
                  ConfigError);
  CHECK_THROWS_AS(ScenarioConfig::from_config(ConfigDocument::parse("[scenario]\nreplications = 3\n")), ConfigError);
  CHECK_THROWS_AS(
      ScenarioConfig::from_config(ConfigDocument::parse("[scenario]\nsetting = \"binary\"\nreplications = 0\n")),
      ConfigError);
  CHECK_THROWS_AS(ScenarioConfig::from_config(ConfigDocument::parse("[scenario]\nsetting = \"binary\"\n[dgp]\nmu_uz = 1\n")),
                  ConfigError);
  auto bad = ScenarioConfig::defaults(Setting::binary);
  bad.estimators = {EstimatorKind::nc, EstimatorKind::nc};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ScenarioConfig::defaults(Setting::binary);
  bad.alpha_level = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_NOTHROW(ScenarioConfig::defaults(Setting::continuous_nonrare).validate());
}

TEST_CASE("single replication summary") {
  auto c = ScenarioConfig::defaults(Setting::binary);
  c.population_size = 200'000;
  c.replications = 1;
  c.beta_grid = {std::log(0.5)};
  const auto s = run_monte_carlo(c);
  REQUIRE(s.rows.size() == 3);
  REQUIRE(s.replications.size() == 3);
  for (const auto& rep : s.replications) {
    REQUIRE(rep.ok);
    const auto& row = s.row(rep.estimator, std::log(0.5));
    CHECK(row.mean_bias == rep.beta_hat - std::log(0.5));
    CHECK((row.coverage == 0.0 || row.coverage == 1.0));
    CHECK(std::isnan(row.sd));
    CHECK(row.n_mean == rep.n);
  }
}

TEST_CASE("summaries do not depend on the thread count") {
  auto c = ScenarioConfig::defaults(Setting::continuous);
  c.population_size = 100'000;
  c.replications = 4;
  c.beta_grid = {std::log(0.5), 0.0};
  c.threads = 1;
  const auto one = run_monte_carlo(c);
  c.threads = 4;
  const auto four = run_monte_carlo(c);
  CHECK(summary_csv(one) == summary_csv(four));
  CHECK(replications_csv(one) == replications_csv(four));
  CHECK(summary_csv(one).rfind("estimator,beta0_true,mean_bias,sd,mean_se,coverage,n_mean,failures\n", 0) == 0);
  for (const auto& row : one.rows) {
    CHECK(row.coverage >= 0.0);
    CHECK(row.coverage <= 1.0);
    CHECK(row.n_mean > 0.0);
  }
  CHECK(panel_tables(one).find("coverage") != std::string::npos);
}
