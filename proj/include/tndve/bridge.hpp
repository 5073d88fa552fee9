#pragma once

// Treatment confounding bridge functions q(A, Z, X): representation, closed
// form solutions for categorical proxies, moment-based fitting and the true
// bridges of the simulation models.

#include <Eigen/Dense>
#include <json.hpp>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tndve/data.hpp"
#include "tndve/dgp.hpp"
#include "tndve/features.hpp"
#include "tndve/solver.hpp"

namespace tndve {

enum class BridgeForm {
  saturated_categorical,  // q = h(A,Z)^T tau over all NCE cells and their A interactions
  logistic_gaussian,      // q = 1 + exp((-1)^A h(A,Z,X)^T tau)
  custom_linear,          // q = h(A,Z,X)^T tau for a user feature map
};

std::string_view to_string(BridgeForm f) noexcept;
BridgeForm parse_bridge_form(std::string_view tag);

struct BridgeSpec {
  BridgeForm form = BridgeForm::custom_linear;
  FeatureMap features;
  /// Observed levels of categorical NCE columns; evaluation outside them is a
  /// domain error. Filled for the saturated form.
  std::map<std::string, std::vector<double>> levels;

  Eigen::Index dim() const { return features.dim(); }

  /// Full factorial basis over the (categorical) NCE columns, times (1, A).
  /// Binary Z gives q = tau0 + tau1 Z + tau2 A + tau3 Z A.
  static BridgeSpec saturated(const TndSample& sample);
  /// Features (1, A, Z..., X...).
  static BridgeSpec logistic_gaussian(const VariableRoles& roles);
  static BridgeSpec custom(FeatureMap features, BridgeForm form = BridgeForm::custom_linear);

  /// q for each row of a feature design `h`, given the treatment of each row.
  Eigen::VectorXd weights(const Eigen::MatrixXd& h, const Eigen::VectorXd& a,
                          const Eigen::VectorXd& tau) const;

  bool operator==(const BridgeSpec&) const = default;
};

/// The moment function m(W, A, X).
struct MomentSpec {
  FeatureMap features;

  Eigen::Index dim() const { return features.dim(); }

  /// (1, W..., A, X...).
  static MomentSpec linear(const TndSample& sample);
  /// linear() plus A*W... and A*X... products.
  static MomentSpec interactions(const TndSample& sample);
  static MomentSpec custom(FeatureMap features) { return MomentSpec{std::move(features)}; }

  bool operator==(const MomentSpec&) const = default;
};

/// Per-record bridge moments (1-Y)[m(W,A,X) q(A,Z,X;tau) - m(W,1,X) - m(W,0,X)]
/// with the designs precomputed for one sample.
class BridgeMomentSystem {
 public:
  BridgeMomentSystem(const TndSample& sample, BridgeSpec spec, MomentSpec moment);

  Eigen::Index n() const { return a_.size(); }
  Eigen::Index tau_dim() const { return spec_.dim(); }
  Eigen::Index moment_dim() const { return moment_.dim(); }
  const BridgeSpec& spec() const { return spec_; }
  const MomentSpec& moment() const { return moment_; }

  /// q(A_i, Z_i, X_i; tau) for every record.
  Eigen::VectorXd weights(const Eigen::VectorXd& tau) const;
  /// n x moment_dim.
  Eigen::MatrixXd moments(const Eigen::VectorXd& tau) const;
  EstimatingSystem system() const;

  const Eigen::MatrixXd& bridge_design() const { return h_; }

 private:
  BridgeSpec spec_;
  MomentSpec moment_;
  Eigen::VectorXd a_;
  Eigen::MatrixXd h_;
  Eigen::MatrixXd m_controls_;  // (1-Y) m(W,A,X)
  Eigen::MatrixXd offset_;      // (1-Y) [m(W,1,X) + m(W,0,X)]
};

struct BridgeFit {
  BridgeSpec spec;
  MomentSpec moment;
  VariableRoles roles;
  Eigen::VectorXd tau_hat;
  double residual_norm = 0.0;
  Eigen::MatrixXd per_record_moments;  // n x d_m at tau_hat (empty after reload)
  int iterations = 0;
  bool two_step = false;    // over-identified: two-step GMM
  double objective = 0.0;   // GMM objective at tau_hat
};

/// Fits tau by root finding (d_m = d_tau) or two-step GMM (d_m > d_tau).
/// Throws IdentifiabilityError when d_m < d_tau or the moment Jacobian is
/// rank deficient, DegenerateDataError when an arm has no controls.
BridgeFit fit_bridge_moment(const TndSample& sample, const BridgeSpec& spec, const MomentSpec& moment,
                            const SolverOptions& options = {});

/// Sample mean of the bridge moments at fit.tau_hat.
Eigen::VectorXd moment_residuals(const BridgeFit& fit, const TndSample& sample);

/// Bridge values q(a, z) over the levels of a single categorical NCE.
struct CategoricalBridgeTable {
  std::vector<double> levels_z;
  Eigen::VectorXd q0;  // q(0, z_i)
  Eigen::VectorXd q1;  // q(1, z_i)

  const Eigen::VectorXd& slice(int a) const { return a ? q1 : q0; }
};

struct ContinuousBridgeParams {
  double tau0 = 0.0;
  double tau1 = 0.0;
  double tau2 = 0.0;
  Eigen::VectorXd tau3;  // one coefficient per covariate
};

inline constexpr double kBridgeMinRcond = 1e-10;

/// Solves P'(a) q = 1 where P'(a)[k, i] = P(Z = z_i, A = a | W = w_k, Y = 0).
/// Throws PreconditionError for a non-square matrix or entries outside
/// [0,1], IdentifiabilityError when the matrix is (near) singular.
Eigen::VectorXd solve_bridge_categorical(const Eigen::MatrixXd& p);

/// Plug-in P'(a) cells from the controls of a sample with one categorical NCE
/// and one categorical NCO with the same number of levels.
CategoricalBridgeTable empirical_bridge_table(const TndSample& sample);

/// True bridge of the binary simulation model.
CategoricalBridgeTable oracle_bridge_binary(const BinaryDgpParams& params);

/// max over (a, u) of |sum_z q(a,z) P(Z=z, A=a | U=u) - 1|.
double oracle_identity_residual(const BinaryDgpParams& params, const CategoricalBridgeTable& table);

/// True bridge of the continuous simulation model (Gaussian NCE, logistic
/// treatment). Throws IdentifiabilityError when mu_uz = 0.
ContinuousBridgeParams oracle_bridge_continuous(const ContinuousDgpParams& params);

double eval_bridge(const CategoricalBridgeTable& table, int a, double z);
double eval_bridge(const ContinuousBridgeParams& params, int a, double z, const Eigen::VectorXd& x);
double eval_bridge(const BridgeFit& fit, int a, const std::vector<double>& z, const std::vector<double>& x);

/// Bridge weights of a sample under a fixed (true) bridge. The table form
/// reads the single NCE column; the continuous form reads the single NCE and
/// every covariate.
Eigen::VectorXd bridge_weights(const CategoricalBridgeTable& table, const TndSample& sample);
Eigen::VectorXd bridge_weights(const ContinuousBridgeParams& params, const TndSample& sample);

nlohmann::json to_json(const BridgeFit& fit);
BridgeFit bridge_fit_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const CategoricalBridgeTable& table);
nlohmann::json to_json(const ContinuousBridgeParams& params);

/// Bridge and moment specs from `[bridge]` keys: form = "saturated" |
/// "logistic-gaussian" | "custom", features = [...] (custom), moment =
/// "linear" | "interactions" | [...]. Missing keys select `default_form`
/// and interactions.
struct BridgeChoice {
  BridgeSpec spec;
  MomentSpec moment;
};
BridgeChoice bridge_choice_from_config(const ConfigDocument& doc, const TndSample& sample,
                                       BridgeForm default_form = BridgeForm::saturated_categorical);

}  // namespace tndve
