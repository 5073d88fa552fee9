#include "tndve/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>

#include "tndve/error.hpp"
#include "tndve/textio.hpp"

namespace tndve {

namespace {

struct Columns {
  std::vector<double> a, y, z, w, x;

  void reserve(std::size_t n) {
    a.reserve(n);
    y.reserve(n);
    z.reserve(n);
    w.reserve(n);
  }
};

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void check_population(std::int64_t n) {
  if (n < 1) throw ConfigError("population size must be at least 1");
}

[[noreturn]] void zero_selection() {
  throw DegenerateDataError("zero-selection: no population member was selected into the study");
}

std::uint64_t scenario_stream(Setting s) { return static_cast<std::uint64_t>(s) + 1; }

struct ReplicationSample {
  std::optional<TndSample> sample;
  std::string error;
};

}  // namespace

VariableRoles binary_sample_roles() { return VariableRoles{"A", "Y", {"Z"}, {"W"}, {}, {}}; }

VariableRoles continuous_sample_roles() { return VariableRoles{"A", "Y", {"Z"}, {"W"}, {"X"}, {}}; }

// Uniform layout: block 0 = (U, A, Y, S), block 1 = (W, D, Z, unused).
BinaryPopulationRecord draw_binary_member(const BinaryDgpParams& p, PhiloxKey key, std::uint64_t index) {
  const auto b0 = record_block(key, index, 0);
  const auto b1 = record_block(key, index, 1);
  BinaryPopulationRecord r{};
  r.u = b0[0] < p.p_u;
  r.a = b0[1] < p.prob_a(r.u);
  r.y = b0[2] < p.prob_y(r.a, r.u);
  r.w = b1[0] < p.prob_w(r.u);
  r.d = b1[1] < p.prob_d(r.u);
  r.z = b1[2] < p.prob_z(r.u);
  r.s = (r.y || r.d || r.w) && b0[3] < p.prob_s(r.u);
  return r;
}

// Uniform layout: block 0 = (U, X, A, S), block 1 = (Y, D, two Box-Muller
// uniforms for Z and W).
ContinuousPopulationRecord draw_continuous_member(const ContinuousDgpParams& p, PhiloxKey key,
                                                  std::uint64_t index) {
  const auto b0 = record_block(key, index, 0);
  const auto b1 = record_block(key, index, 1);
  ContinuousPopulationRecord r{};
  r.u = b0[0];
  r.x = b0[1];
  r.a = b0[2] < p.prob_a(r.u, r.x);
  r.y = b1[0] < p.prob_y(r.a, r.u, r.x);
  r.d = b1[1] < p.prob_d(r.u, r.x);
  r.s = (r.y || r.d) && b0[3] < p.prob_s(r.u, r.x);
  const double radius = std::sqrt(-2.0 * std::log(b1[2]));
  const double angle = 2.0 * std::numbers::pi * b1[3];
  r.z = p.mu_0z + p.mu_az * r.a + p.mu_xz * r.x + p.mu_uz * r.u + p.sigma_z * radius * std::cos(angle);
  r.w = p.mu_0w + p.mu_xw * r.x + p.mu_uw * r.u + p.sigma_w * radius * std::sin(angle);
  return r;
}

TndSample generate_binary_sample(const BinaryDgpParams& p, std::int64_t population_size, PhiloxKey key) {
  p.validate();
  check_population(population_size);
  Columns c;
  c.reserve(static_cast<std::size_t>(population_size / 50 + 16));
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(population_size); ++i) {
    // Same decisions as draw_binary_member, skipping block 1 for members
    // whose selection draw already fails.
    const auto b0 = record_block(key, i, 0);
    const int u = b0[0] < p.p_u;
    if (!(b0[3] < p.prob_s(u))) continue;
    const int a = b0[1] < p.prob_a(u);
    const int y = b0[2] < p.prob_y(a, u);
    const auto b1 = record_block(key, i, 1);
    const int w = b1[0] < p.prob_w(u);
    const int d = b1[1] < p.prob_d(u);
    if (!(y || d || w)) continue;
    c.a.push_back(a);
    c.y.push_back(y);
    c.w.push_back(w);
    c.z.push_back(b1[2] < p.prob_z(u));
  }
  if (c.a.empty()) zero_selection();
  const auto n = static_cast<Eigen::Index>(c.a.size());
  return TndSample(binary_sample_roles(), to_vector(c.a), to_vector(c.y), to_vector(c.z), to_vector(c.w),
                   Eigen::MatrixXd(n, 0));
}

TndSample generate_continuous_sample(const ContinuousDgpParams& p, std::int64_t population_size, PhiloxKey key) {
  p.validate();
  check_population(population_size);
  Columns c;
  c.reserve(static_cast<std::size_t>(population_size / 50 + 16));
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(population_size); ++i) {
    const auto b0 = record_block(key, i, 0);
    const double u = b0[0], x = b0[1];
    if (!(b0[3] < p.prob_s(u, x))) continue;
    const int a = b0[2] < p.prob_a(u, x);
    const auto b1 = record_block(key, i, 1);
    const int y = b1[0] < p.prob_y(a, u, x);
    const int d = b1[1] < p.prob_d(u, x);
    if (!(y || d)) continue;
    const double radius = std::sqrt(-2.0 * std::log(b1[2]));
    const double angle = 2.0 * std::numbers::pi * b1[3];
    c.a.push_back(a);
    c.y.push_back(y);
    c.x.push_back(x);
    c.z.push_back(p.mu_0z + p.mu_az * a + p.mu_xz * x + p.mu_uz * u + p.sigma_z * radius * std::cos(angle));
    c.w.push_back(p.mu_0w + p.mu_xw * x + p.mu_uw * u + p.sigma_w * radius * std::sin(angle));
  }
  if (c.a.empty()) zero_selection();
  return TndSample(continuous_sample_roles(), to_vector(c.a), to_vector(c.y), to_vector(c.z), to_vector(c.w),
                   to_vector(c.x));
}

TndSample generate_binary_sample(const BinaryDgpParams& params, std::int64_t population_size, std::uint64_t seed) {
  return generate_binary_sample(params, population_size, stream_key(seed, 0, 0, 0));
}

TndSample generate_continuous_sample(const ContinuousDgpParams& params, std::int64_t population_size,
                                     std::uint64_t seed) {
  return generate_continuous_sample(params, population_size, stream_key(seed, 0, 0, 0));
}

IdentityCheck continuous_bridge_identity(const ContinuousDgpParams& p, const ContinuousBridgeParams& bridge,
                                         double u, double x, int a, std::int64_t draws, std::uint64_t seed) {
  if (draws < 2) throw PreconditionError("identity check needs at least two draws");
  const PhiloxKey key = stream_key(seed, 0x1D, static_cast<std::uint64_t>(a), 0);
  const double mean_z = p.mu_0z + p.mu_az * a + p.mu_xz * x + p.mu_uz * u;
  const Eigen::VectorXd xv = Eigen::VectorXd::Constant(1, x);
  double sum = 0.0, sum_sq = 0.0;
  for (std::int64_t i = 0; i < draws; i += 2) {
    const auto b = record_block(key, static_cast<std::uint64_t>(i / 2), 0);
    const double radius = std::sqrt(-2.0 * std::log(b[0]));
    const double angle = 2.0 * std::numbers::pi * b[1];
    for (double g : {std::cos(angle), std::sin(angle)}) {
      const double q = eval_bridge(bridge, a, mean_z + p.sigma_z * radius * g, xv);
      sum += q;
      sum_sq += q * q;
    }
  }
  const double n = static_cast<double>(draws + (draws % 2));
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  const double pa = a ? p.prob_a(u, x) : 1.0 - p.prob_a(u, x);
  return {mean * pa - 1.0, std::sqrt(var / n) * pa};
}

std::vector<double> default_beta_grid() { return {std::log(0.2), std::log(0.5), std::log(0.7), 0.0}; }

ScenarioConfig ScenarioConfig::defaults(Setting setting) {
  ScenarioConfig c;
  c.name = std::string(to_string(setting));
  c.setting = setting;
  if (is_binary(setting)) c.binary = default_binary_params(setting);
  else c.continuous = default_continuous_params(setting);
  return c;
}

ScenarioConfig ScenarioConfig::from_config(const ConfigDocument& doc) {
  static const std::vector<std::string> known = {"name",     "setting", "population_size", "replications",
                                                 "seed",     "estimators", "beta_grid",    "risk_ratios",
                                                 "alpha",    "threads"};
  for (const auto& key : doc.keys_in("scenario"))
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown key scenario." + key);
  const auto setting_tag = doc.get_string("scenario.setting");
  if (!setting_tag) throw ConfigError("scenario.setting is required");
  ScenarioConfig c = defaults(parse_setting(*setting_tag));
  if (auto v = doc.get_string("scenario.name")) c.name = *v;
  if (auto v = doc.get_int("scenario.population_size")) c.population_size = *v;
  if (auto v = doc.get_int("scenario.replications")) {
    if (*v < 1 || *v > 1'000'000) throw ConfigError("scenario.replications must be between 1 and 1000000");
    c.replications = static_cast<int>(*v);
  }
  if (auto v = doc.get_int("scenario.seed")) c.seed = static_cast<std::uint64_t>(*v);
  if (auto v = doc.get_string_list("scenario.estimators")) {
    c.estimators.clear();
    for (const auto& e : *v) c.estimators.push_back(parse_estimator(e));
  }
  if (doc.has("scenario.beta_grid") && doc.has("scenario.risk_ratios"))
    throw ConfigError("give scenario.beta_grid or scenario.risk_ratios, not both");
  if (auto v = doc.get_double_list("scenario.beta_grid")) c.beta_grid = *v;
  if (auto v = doc.get_double_list("scenario.risk_ratios")) {
    c.beta_grid.clear();
    for (double rr : *v) {
      if (!(rr > 0.0)) throw ConfigError("scenario.risk_ratios entries must be positive");
      c.beta_grid.push_back(std::log(rr));
    }
  }
  if (auto v = doc.get_double("scenario.alpha")) c.alpha_level = *v;
  if (auto v = doc.get_int("scenario.threads")) {
    if (*v < 0 || *v > 1024) throw ConfigError("scenario.threads must be between 0 and 1024");
    c.threads = static_cast<int>(*v);
  }
  if (is_binary(c.setting)) c.binary = binary_params_from_config(doc, c.binary);
  else c.continuous = continuous_params_from_config(doc, c.continuous);
  for (const auto& key : doc.keys_in("bridge"))
    if (key != "moment") throw ConfigError("unknown key bridge." + key + " (simulation accepts bridge.moment only)");
  if (auto v = doc.get_string_list("bridge.moment")) c.moment = *v;
  c.validate();
  return c;
}

void ScenarioConfig::validate() const {
  if (population_size < 1) throw ConfigError("population size must be at least 1");
  if (replications < 1) throw ConfigError("replications must be at least 1");
  if (beta_grid.empty()) throw ConfigError("beta grid is empty");
  for (double b : beta_grid)
    if (!std::isfinite(b)) throw ConfigError("beta grid values must be finite");
  if (estimators.empty()) throw ConfigError("no estimators configured");
  for (std::size_t i = 0; i < estimators.size(); ++i) {
    if (estimators[i] == EstimatorKind::nc_conditional)
      throw ConfigError("the simulation runs nc, nc-oracle and logistic only");
    for (std::size_t j = 0; j < i; ++j)
      if (estimators[i] == estimators[j]) throw ConfigError("estimator listed twice");
  }
  if (!(alpha_level > 0.0 && alpha_level < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (threads < 0) throw ConfigError("threads must be non-negative");
  for (double b : beta_grid) {
    if (is_binary(setting)) {
      BinaryDgpParams p = binary;
      p.beta0 = b;
      p.validate();
    } else {
      ContinuousDgpParams p = continuous;
      p.beta0 = b;
      p.validate();
    }
  }
  if (!moment.empty()) FeatureMap::parse(moment);
}

const McRow& McSummary::row(EstimatorKind estimator, double beta0) const {
  for (const auto& r : rows)
    if (r.estimator == estimator && r.beta0 == beta0) return r;
  throw PreconditionError("no summary row for estimator " + std::string(to_string(estimator)));
}

namespace {

struct ReplicationContext {
  const ScenarioConfig& config;
  std::vector<std::string> moment;
  FeatureMap logistic_covariates;
};

std::vector<ReplicationResult> run_replication(const ReplicationContext& ctx, std::size_t g, int rep,
                                               std::int64_t& sample_size) {
  const ScenarioConfig& cfg = ctx.config;
  const double beta0 = cfg.beta_grid[g];
  const PhiloxKey key = stream_key(cfg.seed, scenario_stream(cfg.setting), g, static_cast<std::uint64_t>(rep));
  std::vector<ReplicationResult> out;
  for (auto e : cfg.estimators) out.push_back(ReplicationResult{e, g, rep, false, {}, 0, 0, 0, 0, false, 0});

  std::optional<TndSample> sample;
  TrueBridge truth;
  try {
    if (is_binary(cfg.setting)) {
      BinaryDgpParams p = cfg.binary;
      p.beta0 = beta0;
      sample = generate_binary_sample(p, cfg.population_size, key);
      truth = oracle_bridge_binary(p);
    } else {
      ContinuousDgpParams p = cfg.continuous;
      p.beta0 = beta0;
      sample = generate_continuous_sample(p, cfg.population_size, key);
      truth = oracle_bridge_continuous(p);
    }
  } catch (const Error& e) {
    for (auto& r : out) r.error = e.what();
    sample_size = 0;
    return out;
  }
  sample_size = sample->n();

  std::optional<BridgeFit> fit;
  std::string fit_error;
  const double ve_true = 1.0 - std::exp(beta0);
  for (auto& r : out) {
    r.n = sample->n();
    try {
      require_estimable(*sample);
      EstimateReport rep_report;
      switch (r.estimator) {
        case EstimatorKind::nc_oracle: rep_report = estimate_ve_oracle(*sample, truth, CFunctionSpec::constant_one(), cfg.alpha_level); break;
        case EstimatorKind::nc: {
          if (!fit && fit_error.empty()) {
            try {
              const BridgeSpec spec = is_binary(cfg.setting) ? BridgeSpec::saturated(*sample)
                                                             : BridgeSpec::logistic_gaussian(sample->roles());
              fit = fit_bridge_moment(*sample, spec, MomentSpec::custom(FeatureMap::parse(ctx.moment)));
            } catch (const Error& e) {
              fit_error = e.what();
            }
          }
          if (!fit) throw DegenerateDataError("bridge fit failed: " + fit_error);
          rep_report = estimate_ve_nc(*sample, *fit, CFunctionSpec::constant_one(), cfg.alpha_level);
          break;
        }
        case EstimatorKind::logistic: rep_report = estimate_ve_logistic(*sample, ctx.logistic_covariates, cfg.alpha_level); break;
        case EstimatorKind::nc_conditional: throw ConfigError("nc-conditional is not simulated");
      }
      r.ok = std::isfinite(rep_report.beta_hat) && std::isfinite(rep_report.se);
      if (!r.ok) r.error = "non-finite estimate";
      r.beta_hat = rep_report.beta_hat;
      r.se = rep_report.se;
      r.ci_lower = rep_report.ci_lower;
      r.ci_upper = rep_report.ci_upper;
      r.covered = rep_report.ci_lower <= ve_true && ve_true <= rep_report.ci_upper;
    } catch (const Error& e) {
      r.ok = false;
      r.error = std::string(to_string(e.category())) + ": " + e.what();
    }
  }
  return out;
}

}  // namespace

McSummary run_monte_carlo(const ScenarioConfig& config) {
  config.validate();
  ReplicationContext ctx{config, config.moment, {}};
  if (ctx.moment.empty())
    ctx.moment = is_binary(config.setting) ? std::vector<std::string>{"1", "W", "A", "A*W"}
                                           : std::vector<std::string>{"1", "W", "A", "X"};
  ctx.logistic_covariates = is_binary(config.setting) ? FeatureMap({Term{}})
                                                      : FeatureMap({Term{}, Term{{Factor{"X", std::nullopt}}}});

  const std::size_t grid = config.beta_grid.size();
  const auto reps = static_cast<std::size_t>(config.replications);
  const std::size_t cells = grid * reps;
  std::vector<std::vector<ReplicationResult>> results(cells);
  std::vector<std::int64_t> sizes(cells, 0);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t cell = next.fetch_add(1); cell < cells; cell = next.fetch_add(1))
      results[cell] = run_replication(ctx, cell / reps, static_cast<int>(cell % reps), sizes[cell]);
  };
  unsigned threads = config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                         : static_cast<unsigned>(config.threads);
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, cells));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  McSummary summary;
  summary.scenario = config.name;
  std::vector<std::string> too_many;
  for (std::size_t g = 0; g < grid; ++g) {
    double n_sum = 0.0;
    int n_count = 0;
    for (std::size_t r = 0; r < reps; ++r)
      if (sizes[g * reps + r] > 0) {
        n_sum += static_cast<double>(sizes[g * reps + r]);
        ++n_count;
      }
    for (std::size_t e = 0; e < config.estimators.size(); ++e) {
      McRow row;
      row.estimator = config.estimators[e];
      row.beta0 = config.beta_grid[g];
      row.n_mean = n_count ? n_sum / n_count : 0.0;
      double bias = 0.0, se = 0.0, cover = 0.0;
      std::vector<double> betas;
      for (std::size_t r = 0; r < reps; ++r) {
        const auto& res = results[g * reps + r][e];
        summary.replications.push_back(res);
        if (!res.ok) {
          ++row.failures;
          continue;
        }
        betas.push_back(res.beta_hat);
        bias += res.beta_hat - row.beta0;
        se += res.se;
        cover += res.covered ? 1.0 : 0.0;
      }
      row.successes = static_cast<int>(betas.size());
      const double k = static_cast<double>(betas.size());
      if (betas.empty()) {
        row.mean_bias = row.sd = row.mean_se = row.coverage = std::nan("");
      } else {
        row.mean_bias = bias / k;
        row.mean_se = se / k;
        row.coverage = cover / k;
        const double mean = row.mean_bias + row.beta0;
        double ss = 0.0;
        for (double b : betas) ss += (b - mean) * (b - mean);
        row.sd = betas.size() > 1 ? std::sqrt(ss / (k - 1.0)) : std::nan("");
      }
      if (row.failures > kMaxFailureFraction * static_cast<double>(reps))
        too_many.push_back(std::string(to_string(row.estimator)) + " at beta0=" + format_double(row.beta0) + " (" +
                           std::to_string(row.failures) + "/" + std::to_string(reps) + ")");
      summary.rows.push_back(row);
    }
  }
  if (!too_many.empty()) {
    std::string msg = "more than 20% of replications failed for ";
    for (std::size_t i = 0; i < too_many.size(); ++i) msg += (i ? ", " : "") + too_many[i];
    for (const auto& r : summary.replications)
      if (!r.ok) {
        msg += "; first error: " + r.error;
        break;
      }
    throw DegenerateDataError(msg);
  }
  return summary;
}

std::string summary_csv(const McSummary& s) {
  std::ostringstream os;
  os << "estimator,beta0_true,mean_bias,sd,mean_se,coverage,n_mean,failures\n";
  for (const auto& r : s.rows)
    os << to_string(r.estimator) << ',' << format_double(r.beta0) << ',' << format_double(r.mean_bias) << ','
       << format_double(r.sd) << ',' << format_double(r.mean_se) << ',' << format_double(r.coverage) << ','
       << format_double(r.n_mean) << ',' << r.failures << '\n';
  return os.str();
}

std::string replications_csv(const McSummary& s) {
  std::ostringstream os;
  os << "estimator,grid_index,replication,beta_hat,se,ci_lower,ci_upper,covered,n,status\n";
  for (const auto& r : s.replications) {
    os << to_string(r.estimator) << ',' << r.grid_index << ',' << r.replication << ',' << format_double(r.beta_hat)
       << ',' << format_double(r.se) << ',' << format_double(r.ci_lower) << ',' << format_double(r.ci_upper) << ','
       << (r.covered ? 1 : 0) << ',' << r.n << ',';
    if (r.ok) {
      os << "ok";
    } else {
      std::string e = r.error;
      std::replace(e.begin(), e.end(), '"', '\'');
      os << '"' << e << '"';
    }
    os << '\n';
  }
  return os.str();
}

nlohmann::json summary_json(const McSummary& s, const ScenarioConfig& c) {
  nlohmann::json rows = nlohmann::json::array();
  auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  for (const auto& r : s.rows)
    rows.push_back({{"estimator", std::string(to_string(r.estimator))},
                    {"beta0_true", r.beta0},
                    {"mean_bias", num(r.mean_bias)},
                    {"sd", num(r.sd)},
                    {"mean_se", num(r.mean_se)},
                    {"coverage", num(r.coverage)},
                    {"n_mean", r.n_mean},
                    {"failures", r.failures},
                    {"successes", r.successes}});
  std::vector<std::string> est;
  for (auto e : c.estimators) est.emplace_back(to_string(e));
  return {{"schema_version", kReportSchemaVersion},
          {"scenario", s.scenario},
          {"setting", std::string(to_string(c.setting))},
          {"population_size", c.population_size},
          {"replications", c.replications},
          {"seed", c.seed},
          {"alpha", c.alpha_level},
          {"estimators", est},
          {"rows", rows}};
}

std::string panel_tables(const McSummary& s) {
  std::vector<double> betas;
  std::vector<EstimatorKind> ests;
  for (const auto& r : s.rows) {
    if (std::find(betas.begin(), betas.end(), r.beta0) == betas.end()) betas.push_back(r.beta0);
    if (std::find(ests.begin(), ests.end(), r.estimator) == ests.end()) ests.push_back(r.estimator);
  }
  std::ostringstream os;
  char buf[64];
  auto table = [&](const char* title, auto value) {
    os << title << '\n';
    std::snprintf(buf, sizeof buf, "%-10s %-8s", "beta0", "RR");
    os << buf;
    for (auto e : ests) {
      std::snprintf(buf, sizeof buf, " %12s", std::string(to_string(e)).c_str());
      os << buf;
    }
    os << '\n';
    for (double b : betas) {
      std::snprintf(buf, sizeof buf, "%-10.4f %-8.3f", b, std::exp(b));
      os << buf;
      for (auto e : ests) {
        std::snprintf(buf, sizeof buf, " %12.4f", value(s.row(e, b)));
        os << buf;
      }
      os << '\n';
    }
  };
  os << "scenario: " << s.scenario << "\n\n";
  table("mean bias of log effect", [](const McRow& r) { return r.mean_bias; });
  os << '\n';
  table("interval coverage", [](const McRow& r) { return r.coverage; });
  os << '\n';
  table("mean SE / SD of estimates", [](const McRow& r) { return r.mean_se / r.sd; });
  return os.str();
}

}  // namespace tndve
