#include <doctest.h>

#include <random>

#include "tndve/error.hpp"
#include "tndve/estimators.hpp"
#include "tndve/simulation.hpp"

using namespace tndve;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// 10 vaccinated and 10 unvaccinated cases plus some controls.
TndSample balanced_cases() {
  std::string csv = "A,Y,Z,W\n";
  for (int i = 0; i < 10; ++i) csv += "1,1,0,0\n0,1,1,1\n";
  for (int i = 0; i < 15; ++i) csv += "1,0,1,0\n0,0,0,1\n";
  return parse_csv(csv, binary_sample_roles());
}

TndSample two_by_two(int a1y1, int a1y0, int a0y1, int a0y0) {
  std::vector<TndRecord> rs;
  auto add = [&rs](int a, int y, int k) {
    for (int i = 0; i < k; ++i) rs.push_back(TndRecord{a, y, {double(i % 2)}, {double((i / 2) % 2)}, {}});
  };
  add(1, 1, a1y1);
  add(1, 0, a1y0);
  add(0, 1, a0y1);
  add(0, 0, a0y0);
  return TndSample::from_records(binary_sample_roles(), rs);
}

BridgeFit saturated_fit(const TndSample& s) {
  return fit_bridge_moment(s, BridgeSpec::saturated(s), MomentSpec::interactions(s));
}

BridgeFit constant_fit(const TndSample& s, double value) {
  BridgeFit f;
  f.spec = BridgeSpec::custom(FeatureMap::parse({"1"}));
  f.moment = MomentSpec::custom(FeatureMap::parse({"1"}));
  f.roles = s.roles();
  f.tau_hat = VectorXd::Constant(1, value);
  return f;
}

void check_report_invariants(const EstimateReport& r) {
  CHECK(r.ve_hat == 1.0 - std::exp(r.beta_hat));
  CHECK(r.ci_lower <= r.ve_hat);
  CHECK(r.ve_hat <= r.ci_upper);
  CHECK((r.vcov - r.vcov.transpose()).norm() == 0.0);
  CHECK((r.vcov.diagonal().array() >= 0.0).all());
}

// Binary model with a binary covariate X that modifies the effect:
// beta0 = log 0.5 when X = 0 and log 0.7 when X = 1.
TndSample stratified_sample(std::uint64_t seed) {
  BinaryDgpParams p0 = default_binary_params(), p1 = default_binary_params();
  p0.beta0 = std::log(0.5);
  p1.beta0 = std::log(0.7);
  const auto s0 = generate_binary_sample(p0, kDeskPopulation, stream_key(seed, 7, 0, 0));
  const auto s1 = generate_binary_sample(p1, kDeskPopulation, stream_key(seed, 7, 1, 0));
  const Eigen::Index n = s0.n() + s1.n();
  VectorXd a(n), y(n);
  MatrixXd z(n, 1), w(n, 1), x(n, 1);
  a << s0.a(), s1.a();
  y << s0.y(), s1.y();
  z << s0.z(), s1.z();
  w << s0.w(), s1.w();
  x << VectorXd::Zero(s0.n()), VectorXd::Ones(s1.n());
  return TndSample(VariableRoles{"A", "Y", {"Z"}, {"W"}, {"X"}, {}}, a, y, z, w, x);
}

}  // namespace

TEST_CASE("wald_ci") {
  auto ci = wald_ci(0.0, 0.0, 0.05);
  CHECK(ci.first == 0.0);
  CHECK(ci.second == 0.0);
  ci = wald_ci(std::log(0.5), 0.01, 0.05);
  const double z = 1.959963984540054;
  CHECK(std::fabs(ci.first - (1.0 - 0.5 * std::exp(z * 0.1))) < 1e-12);
  CHECK(std::fabs(ci.second - (1.0 - 0.5 * std::exp(-z * 0.1))) < 1e-12);
  CHECK(ci.first == doctest::Approx(0.3918).epsilon(1e-4));
  CHECK(ci.second == doctest::Approx(0.5889).epsilon(1e-4));
  CHECK_THROWS_AS(wald_ci(0.0, -1e-3, 0.05), PreconditionError);
  CHECK_THROWS_AS(wald_ci(0.0, 1.0, 1.5), PreconditionError);
  CHECK(std::fabs(normal_quantile(0.975) - z) < 1e-10);
}

TEST_CASE("balanced unit weights give a null effect") {
  const auto s = balanced_cases();
  const auto r = estimate_ve_fixed_weights(s, VectorXd::Ones(s.n()));
  CHECK(r.beta_hat == 0.0);
  CHECK(r.ve_hat == 0.0);
  check_report_invariants(r);

  // Unit table and constant-one fit give the same point estimate.
  CategoricalBridgeTable ones{{0.0, 1.0}, VectorXd::Ones(2), VectorXd::Ones(2)};
  const auto oracle = estimate_ve_oracle(s, ones);
  const auto nc = estimate_ve_nc(s, constant_fit(s, 1.0));
  CHECK(oracle.beta_hat == nc.beta_hat);
  CHECK(oracle.ve_hat == nc.ve_hat);
  CHECK(oracle.scale_label() == nc.scale_label());
}

TEST_CASE("scaling invariances of the closed form") {
  std::mt19937_64 gen(41);
  std::uniform_real_distribution<double> unif(0.1, 3.0);
  std::bernoulli_distribution coin(0.5);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 50;
    VectorXd a(n), y(n), q(n), c(n);
    for (int i = 0; i < n; ++i) {
      a(i) = i % 2;
      y(i) = i % 4 < 2 ? 1.0 : double(coin(gen));
      q(i) = unif(gen);
      c(i) = unif(gen);
    }
    const double k = unif(gen) * 10.0;
    const double beta = closed_form_beta(a, y, q, c);
    CHECK(std::fabs(closed_form_beta(a, y, q, k * c) - beta) <= 1e-12);
    CHECK(std::fabs(closed_form_beta(a, y, k * q, c) - beta) <= 1e-12);
    // Arm relabelling.
    const VectorXd flipped = VectorXd::Ones(n) - a;
    CHECK(std::fabs(closed_form_beta(flipped, y, q, c) + beta) <= 1e-12);
  }
}

TEST_CASE("arm relabelling on a simulated sample with the true bridge") {
  const auto p = default_binary_params();
  const auto s = generate_binary_sample(p, kDeskPopulation, std::uint64_t{51});
  const auto t = oracle_bridge_binary(p);
  const CategoricalBridgeTable swapped{t.levels_z, t.q1, t.q0};
  const auto r = estimate_ve_oracle(s, t);
  const auto rf = estimate_ve_oracle(s.with_flipped_treatment(), swapped);
  CHECK(std::fabs(r.beta_hat + rf.beta_hat) <= 1e-12);
  // The fitted saturated bridge swaps its arms as well.
  const auto nc = estimate_ve_nc(s, saturated_fit(s));
  const auto sf = s.with_flipped_treatment();
  const auto ncf = estimate_ve_nc(sf, saturated_fit(sf));
  CHECK(std::fabs(nc.beta_hat + ncf.beta_hat) < 1e-8);
  CHECK(nc.se == doctest::Approx(ncf.se).epsilon(1e-5));
}

TEST_CASE("q scaling leaves the fixed-weight estimator unchanged") {
  const auto p = default_binary_params();
  const auto s = generate_binary_sample(p, 200'000, std::uint64_t{52});
  const VectorXd q = bridge_weights(oracle_bridge_binary(p), s);
  const auto r1 = estimate_ve_fixed_weights(s, q);
  const auto r2 = estimate_ve_fixed_weights(s, 3.5 * q);
  CHECK(std::fabs(r1.beta_hat - r2.beta_hat) <= 1e-12);
  CHECK(r1.se == doctest::Approx(r2.se).epsilon(1e-6));
}

TEST_CASE("closed form agrees with root finding on the risk-ratio equation") {
  const auto s = generate_continuous_sample(default_continuous_params(), kDeskPopulation, std::uint64_t{53});
  const auto fit = fit_bridge_moment(s, BridgeSpec::logistic_gaussian(s.roles()), MomentSpec::linear(s));
  const BridgeMomentSystem bms(s, fit.spec, fit.moment);
  const VectorXd q = bms.weights(fit.tau_hat);
  const VectorXd c = VectorXd::Ones(s.n());
  EstimatingSystem sys;
  sys.param_dim = sys.moment_dim = 1;
  sys.n = s.n();
  sys.per_record = [&](const VectorXd& b) -> MatrixXd { return risk_ratio_moment(s.a(), s.y(), q, c, b(0)); };
  const auto root = solve_root(sys, VectorXd::Zero(1));
  const auto r = estimate_ve_nc(s, fit);
  CHECK(std::fabs(root.theta_hat(0) - r.beta_hat) < 1e-8);
  check_report_invariants(r);
}

TEST_CASE("conditional estimator with an intercept-only model equals the marginal estimator") {
  const auto s = generate_binary_sample(default_binary_params(), kDeskPopulation, std::uint64_t{54});
  const auto fit = saturated_fit(s);
  const auto marginal = estimate_ve_nc(s, fit);
  const auto cond = estimate_ve_conditional(s, fit, BetaModelSpec::intercept_only(), CFunctionSpec::constant_one());
  CHECK(std::fabs(cond.beta_hat - marginal.beta_hat) < 1e-8);
  CHECK(cond.se == doctest::Approx(marginal.se).epsilon(1e-5));
  check_report_invariants(cond);
  TndRecord any = s.record(0);
  CHECK(cond.ve_at(any, s.roles()) == doctest::Approx(cond.ve_hat).epsilon(1e-14));
}

TEST_CASE("conditional estimator recovers stratum effects") {
  const auto s = stratified_sample(61);
  const auto fit = saturated_fit(s);
  const auto r = estimate_ve_conditional(s, fit, BetaModelSpec::covariates(s));
  REQUIRE(r.alpha_hat.size() == 2);
  const double truth[2] = {std::log(0.5), std::log(0.7) - std::log(0.5)};
  for (int j = 0; j < 2; ++j) CHECK(std::fabs(r.alpha_hat(j) - truth[j]) < 3.0 * std::sqrt(r.vcov(j, j)));
  TndRecord rec{0, 0, {0.0}, {0.0}, {1.0}};
  CHECK(r.ve_at(rec, s.roles()) == doctest::Approx(1.0 - std::exp(r.alpha_hat.sum())).epsilon(1e-14));
}

TEST_CASE("conditional estimator preconditions") {
  const auto s0 = generate_binary_sample(default_binary_params(), 200'000, std::uint64_t{62});
  std::vector<TndRecord> rs;
  for (Eigen::Index i = 0; i < s0.n(); ++i) {
    auto r = s0.record(i);
    r.x = {0.0};
    rs.push_back(r);
  }
  const auto s = TndSample::from_records(VariableRoles{"A", "Y", {"Z"}, {"W"}, {"X"}, {}}, rs);
  const auto fit = saturated_fit(s);
  CHECK_THROWS_AS(estimate_ve_conditional(s, fit, BetaModelSpec::intercept_only(),
                                          CFunctionSpec::custom(FeatureMap::parse({"X"}))),
                  PreconditionError);
  CHECK_THROWS_AS(estimate_ve_conditional(s, fit, BetaModelSpec::covariates(s)), IdentifiabilityError);
  CHECK_THROWS_AS(estimate_ve_conditional(s, fit, BetaModelSpec::intercept_only(), CFunctionSpec::covariate_vector(s)),
                  PreconditionError);
}

TEST_CASE("logistic baseline") {
  const auto s = two_by_two(10, 40, 20, 30);
  const auto r = estimate_ve_logistic(s, FeatureMap({Term{}}));
  CHECK(std::fabs(r.beta_hat - std::log(10.0 * 30.0 / (40.0 * 20.0))) < 1e-10);
  CHECK(r.scale == EffectScale::odds_ratio);
  CHECK(r.scale_label() == "odds-ratio");
  check_report_invariants(r);
  const auto balanced = estimate_ve_logistic(two_by_two(25, 25, 25, 25), FeatureMap({Term{}}));
  CHECK(std::fabs(balanced.beta_hat) < 1e-12);
}

TEST_CASE("degenerate weighted counts are errors") {
  const auto s = two_by_two(0, 10, 10, 10);
  CHECK_THROWS_AS(estimate_ve_fixed_weights(s, VectorXd::Ones(s.n())), DegenerateDataError);
  const auto ok = balanced_cases();
  CHECK_THROWS_AS(estimate_ve_fixed_weights(ok, VectorXd::Zero(ok.n())), DegenerateDataError);
}

TEST_CASE("bridge fitted on other roles is rejected") {
  const auto s = balanced_cases();
  auto fit = constant_fit(s, 1.0);
  fit.roles.nce = {"Q"};
  CHECK_THROWS_AS(estimate_ve_nc(s, fit), PreconditionError);
}

TEST_CASE("risk-ratio moment is mean zero at the truth with the true bridge") {
  const auto p = [] {
    auto q = default_binary_params();
    q.beta0 = std::log(0.5);
    return q;
  }();
  const auto t = oracle_bridge_binary(p);
  const int reps = 40;
  std::vector<double> means;
  for (int r = 0; r < reps; ++r) {
    const auto s = generate_binary_sample(p, kDeskPopulation, stream_key(71, 0, 0, r));
    const VectorXd v = risk_ratio_moment(s.a(), s.y(), bridge_weights(t, s), VectorXd::Ones(s.n()), p.beta0);
    means.push_back(v.mean());
  }
  double m = 0.0, ss = 0.0;
  for (double v : means) m += v / reps;
  for (double v : means) ss += (v - m) * (v - m);
  const double se = std::sqrt(ss / (reps - 1) / reps);
  CHECK(std::fabs(m) < 3.0 * se);
}

TEST_CASE("report JSON") {
  const auto s = balanced_cases();
  const auto j = to_json(estimate_ve_nc(s, constant_fit(s, 1.0)));
  CHECK(j.at("schema_version") == kReportSchemaVersion);
  CHECK(j.at("estimator") == "nc");
  CHECK(j.at("vcov").size() == 2);
  CHECK(format_report(estimate_ve_nc(s, constant_fit(s, 1.0))).find("VE") != std::string::npos);
}
