#pragma once

// Vaccine effectiveness estimators for test-negative samples: the negative
// control (bridge-weighted) estimator, its covariate-conditional extension,
// the oracle variant with a known bridge and the logistic regression
// baseline.

#include <Eigen/Dense>
#include <json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "tndve/bridge.hpp"
#include "tndve/data.hpp"
#include "tndve/features.hpp"

namespace tndve {

enum class EstimatorKind { nc, nc_oracle, nc_conditional, logistic };
std::string_view to_string(EstimatorKind k) noexcept;
EstimatorKind parse_estimator(std::string_view tag);

enum class EffectScale { risk_ratio, odds_ratio };

inline constexpr std::string_view kRiskRatioLabel = "risk-ratio (OR-valid under treatment-induced selection)";
inline constexpr std::string_view kOddsRatioLabel = "odds-ratio";
inline constexpr int kReportSchemaVersion = 1;

struct EstimateDiagnostics {
  int iterations = 0;                    // root finding for beta / alpha (0 for closed form)
  double residual_norm = 0.0;            // |mean V1| at the estimate
  int bridge_iterations = 0;
  double bridge_residual_norm = 0.0;
  Eigen::VectorXd bridge_moment_residuals;
  bool bridge_two_step = false;
  double weighted_cases_vaccinated = 0.0;
  double weighted_cases_unvaccinated = 0.0;
};

struct EstimateReport {
  EstimatorKind estimator = EstimatorKind::nc;
  EffectScale scale = EffectScale::risk_ratio;
  /// Log effect for marginal estimators; the first conditional coefficient
  /// (the intercept of beta(X; alpha)) for the conditional estimator.
  double beta_hat = 0.0;
  double ve_hat = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double alpha_level = 0.05;
  /// Coefficients in vcov order: beta (or alpha...) first, then tau for
  /// estimators that propagate bridge uncertainty.
  Eigen::VectorXd coef;
  std::vector<std::string> coef_labels;
  Eigen::MatrixXd vcov;
  Eigen::Index n = 0;
  Eigen::Index n_cases = 0;
  EstimateDiagnostics diagnostics;
  std::vector<std::string> notes;

  /// Conditional estimator only: the beta(X; alpha) feature map and alpha.
  std::optional<FeatureMap> beta_model;
  Eigen::VectorXd alpha_hat;

  std::string scale_label() const;
  /// VE(x) = 1 - exp(beta(x; alpha_hat)) for a record's covariates.
  double ve_at(const TndRecord& record, const VariableRoles& roles) const;
};

/// The weight function c(X).
struct CFunctionSpec {
  enum class Form { constant_one, covariate_vector, custom };
  Form form = Form::constant_one;
  FeatureMap features;

  static CFunctionSpec constant_one();
  /// (1, X...) with categorical covariates one-hot coded.
  static CFunctionSpec covariate_vector(const TndSample& sample);
  static CFunctionSpec custom(FeatureMap features);
  Eigen::Index dim() const { return form == Form::constant_one ? 1 : features.dim(); }
  Eigen::MatrixXd design(const TndSample& sample) const;
};

/// beta(X; alpha) = d(X)^T alpha.
struct BetaModelSpec {
  FeatureMap features;

  static BetaModelSpec intercept_only();
  /// (1, X...) with categorical covariates one-hot coded; `intercept = false`
  /// drops the constant.
  static BetaModelSpec covariates(const TndSample& sample, bool intercept = true);
  static BetaModelSpec custom(FeatureMap features) { return BetaModelSpec{std::move(features)}; }
  Eigen::Index dim() const { return features.dim(); }
};

/// Two-sided Wald interval for VE at level 1 - alpha_level, ordered so that
/// lower <= upper. Throws PreconditionError for a negative variance or
/// alpha_level outside (0, 1).
std::pair<double, double> wald_ci(double beta_hat, double var_beta, double alpha_level);

/// Standard normal quantile.
double normal_quantile(double p);

/// Closed-form log risk ratio log[sum c q A Y / sum c q (1-A) Y]. Throws
/// DegenerateDataError when either weighted case count is not positive.
double closed_form_beta(const Eigen::VectorXd& a, const Eigen::VectorXd& y, const Eigen::VectorXd& q,
                        const Eigen::VectorXd& c);

/// Per-record V1 = (-1)^(1-A) c q Y exp(-beta A).
Eigen::VectorXd risk_ratio_moment(const Eigen::VectorXd& a, const Eigen::VectorXd& y, const Eigen::VectorXd& q,
                                  const Eigen::VectorXd& c, double beta);

EstimateReport estimate_ve_nc(const TndSample& sample, const BridgeFit& bridge,
                              const CFunctionSpec& c = CFunctionSpec::constant_one(), double alpha_level = 0.05);

using TrueBridge = std::variant<CategoricalBridgeTable, ContinuousBridgeParams>;

/// As estimate_ve_nc with the bridge held fixed (no tau block in the sandwich).
EstimateReport estimate_ve_oracle(const TndSample& sample, const TrueBridge& bridge,
                                  const CFunctionSpec& c = CFunctionSpec::constant_one(),
                                  double alpha_level = 0.05);

/// Same estimator with externally supplied bridge weights q_i (held fixed).
EstimateReport estimate_ve_fixed_weights(const TndSample& sample, const Eigen::VectorXd& q,
                                         const CFunctionSpec& c = CFunctionSpec::constant_one(),
                                         double alpha_level = 0.05);

/// Solves mean (-1)^(1-A) c(X) q Y exp(-d(X)^T alpha A) = 0 for alpha.
/// `c` defaults to the beta-model features when not given.
EstimateReport estimate_ve_conditional(const TndSample& sample, const BridgeFit& bridge,
                                       const BetaModelSpec& beta_model,
                                       const std::optional<CFunctionSpec>& c = std::nullopt,
                                       double alpha_level = 0.05, const SolverOptions& options = {});

/// Logistic regression of Y on (A, covariate features); beta_hat is the A
/// coefficient (log odds ratio). `covariates` should include the intercept.
EstimateReport estimate_ve_logistic(const TndSample& sample, const FeatureMap& covariates,
                                    double alpha_level = 0.05);

nlohmann::json to_json(const EstimateReport& report);
/// Human-readable summary table.
std::string format_report(const EstimateReport& report);

}  // namespace tndve
