#pragma once

// Simulated test-negative studies and the Monte Carlo engine that measures
// bias, standard-error calibration and interval coverage of the estimators.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tndve/bridge.hpp"
#include "tndve/config.hpp"
#include "tndve/data.hpp"
#include "tndve/dgp.hpp"
#include "tndve/estimators.hpp"
#include "tndve/rng.hpp"

namespace tndve {

/// Every variable of one binary-model population member.
struct BinaryPopulationRecord {
  int u, z, a, y, w, d, s;
};

struct ContinuousPopulationRecord {
  double u, x;
  int a, y, d, s;
  double z, w;
};

/// Draws population member `index` of the stream `key`.
BinaryPopulationRecord draw_binary_member(const BinaryDgpParams& p, PhiloxKey key, std::uint64_t index);
ContinuousPopulationRecord draw_continuous_member(const ContinuousDgpParams& p, PhiloxKey key,
                                                  std::uint64_t index);

/// Selected (S = 1) members of a population of size N, with roles A, Y, Z, W
/// (binary) or A, Y, Z, W, X (continuous). Throws DegenerateDataError when
/// nobody is selected and ConfigError for invalid parameters.
TndSample generate_binary_sample(const BinaryDgpParams& params, std::int64_t population_size, PhiloxKey key);
TndSample generate_continuous_sample(const ContinuousDgpParams& params, std::int64_t population_size,
                                     PhiloxKey key);
TndSample generate_binary_sample(const BinaryDgpParams& params, std::int64_t population_size, std::uint64_t seed);
TndSample generate_continuous_sample(const ContinuousDgpParams& params, std::int64_t population_size,
                                     std::uint64_t seed);

VariableRoles binary_sample_roles();
VariableRoles continuous_sample_roles();

/// Monte Carlo check of the continuous bridge identity at a fixed (u, x):
/// E[q(a, Z, x) | A = a, U = u, X = x] P(A = a | u, x) - 1 and its standard error.
struct IdentityCheck {
  double deviation = 0.0;
  double standard_error = 0.0;
};
IdentityCheck continuous_bridge_identity(const ContinuousDgpParams& params, const ContinuousBridgeParams& bridge,
                                         double u, double x, int a, std::int64_t draws, std::uint64_t seed);

inline constexpr std::int64_t kDeskPopulation = 500'000;
inline constexpr int kDeskReplications = 200;
inline constexpr std::int64_t kFullPopulation = 7'000'000;
inline constexpr int kFullReplications = 1000;
inline constexpr std::uint64_t kDefaultSeed = 20240607;
inline constexpr double kMaxFailureFraction = 0.2;

std::vector<double> default_beta_grid();

struct ScenarioConfig {
  std::string name = "scenario";
  Setting setting = Setting::binary;
  BinaryDgpParams binary;
  ContinuousDgpParams continuous;
  std::int64_t population_size = kDeskPopulation;
  int replications = kDeskReplications;
  std::uint64_t seed = kDefaultSeed;
  std::vector<EstimatorKind> estimators = {EstimatorKind::nc_oracle, EstimatorKind::nc, EstimatorKind::logistic};
  std::vector<double> beta_grid = default_beta_grid();
  double alpha_level = 0.05;
  int threads = 1;  // 0 = all hardware threads
  /// m(W, A, X) used by the NC estimator; empty selects (1, W, A, WA) for
  /// binary settings and (1, W, A, X) for continuous ones.
  std::vector<std::string> moment;

  static ScenarioConfig defaults(Setting setting);
  /// `[scenario]` keys: name, setting, population_size, replications, seed,
  /// estimators, beta_grid or risk_ratios, alpha, threads; `[dgp]` parameter
  /// overrides; `[bridge]` moment.
  static ScenarioConfig from_config(const ConfigDocument& doc);

  /// Throws ConfigError on any invalid field.
  void validate() const;
};

struct ReplicationResult {
  EstimatorKind estimator;
  std::size_t grid_index = 0;
  int replication = 0;
  bool ok = false;
  std::string error;
  double beta_hat = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  bool covered = false;
  std::int64_t n = 0;
};

struct McRow {
  EstimatorKind estimator;
  double beta0 = 0.0;
  double mean_bias = 0.0;
  double sd = 0.0;       // across successful replications (n-1 denominator)
  double mean_se = 0.0;  // mean sandwich (or model) standard error
  double coverage = 0.0;
  double n_mean = 0.0;   // mean selected-sample size
  int failures = 0;
  int successes = 0;
};

struct McSummary {
  std::string scenario;
  std::vector<McRow> rows;  // grid-major, estimator order within each grid value
  std::vector<ReplicationResult> replications;

  const McRow& row(EstimatorKind estimator, double beta0) const;
};

/// Runs every (beta0, replication) cell. Results do not depend on `threads`.
/// Throws DegenerateDataError if more than 20% of an estimator's
/// replications fail at some beta0.
McSummary run_monte_carlo(const ScenarioConfig& config);

/// Fixed column order: estimator, beta0_true, mean_bias, sd, mean_se,
/// coverage, n_mean, failures.
std::string summary_csv(const McSummary& summary);
nlohmann::json summary_json(const McSummary& summary, const ScenarioConfig& config);
std::string replications_csv(const McSummary& summary);

/// Bias and coverage tables with one row per beta0 and one column per
/// estimator.
std::string panel_tables(const McSummary& summary);

}  // namespace tndve
