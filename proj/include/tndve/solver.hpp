#pragma once

// Numerical kernel for smooth estimating equations: Newton root finding,
// Gauss-Newton GMM, central-difference Jacobians, the Moore-Penrose inverse
// and the sandwich variance of stacked estimating equations.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace tndve {

using VectorFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// A stack of per-record moment functions G_i(theta). `per_record` returns the
/// n x moment_dim matrix whose row i is G_i(theta).
struct EstimatingSystem {
  Eigen::Index param_dim = 0;
  Eigen::Index moment_dim = 0;
  Eigen::Index n = 0;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> per_record;
};

struct SolverOptions {
  double tol = 1e-10;
  int max_iter = 100;
  int max_halvings = 20;
  double jacobian_scale = std::cbrt(std::numeric_limits<double>::epsilon());
  /// Jacobians (or Gauss-Newton normal matrices) with reciprocal condition
  /// number below this are treated as singular.
  double min_rcond = 1e-10;
};

struct SolveResult {
  Eigen::VectorXd theta_hat;
  double residual_norm = 0.0;   // ||mean G(theta_hat)||_2
  double gradient_norm = 0.0;   // ||J^T W mean G||_2 (GMM only)
  double objective = 0.0;       // mean G^T W mean G (GMM only)
  int iterations = 0;
  bool converged = false;
  Eigen::MatrixXd jacobian_at_solution;  // d x p
  std::vector<double> trajectory;        // residual (or gradient) norm per iteration
};

/// Column means accumulated by pairwise summation over fixed-size blocks, so
/// the result depends only on the data and not on how rows were produced.
Eigen::VectorXd column_mean(const Eigen::MatrixXd& m);

/// Pairwise sum of a vector (same ordering rule as column_mean).
double pairwise_sum(const double* data, Eigen::Index n);

Eigen::VectorXd mean_moment(const EstimatingSystem& system, const Eigen::VectorXd& theta);

/// Newton iteration for d = p systems with a numeric Jacobian. Each step is
/// halved (up to max_halvings times) until the residual norm decreases.
/// Converged when ||mean G|| <= tol. Throws ConvergenceError (with the
/// residual trajectory) or IdentifiabilityError for a singular Jacobian.
SolveResult solve_root(const EstimatingSystem& system, const Eigen::VectorXd& init,
                       const SolverOptions& options = {});

/// Minimises mean G^T W mean G by damped Gauss-Newton. Converged when
/// ||J^T W mean G|| <= tol * max(1, ||J|| ||W mean G||), or when no damped
/// step lowers the objective and the Gauss-Newton step is below 1e-8
/// relative to theta. Throws PreconditionError if W is not symmetric
/// positive definite or d < p.
SolveResult gmm_minimize(const EstimatingSystem& system, const Eigen::MatrixXd& weight,
                         const Eigen::VectorXd& init, const SolverOptions& options = {});

/// Central differences with step h_j = scale * max(1, |x_j|).
Eigen::MatrixXd numeric_jacobian(const VectorFn& f, const Eigen::VectorXd& x,
                                 double scale = std::cbrt(std::numeric_limits<double>::epsilon()));

/// Moore-Penrose inverse by SVD; singular values below rel_cutoff * sigma_max
/// are treated as zero.
Eigen::MatrixXd pinv(const Eigen::MatrixXd& m, double rel_cutoff = 1e-12);

/// sigma_min / sigma_max (0 for an empty or zero matrix).
double reciprocal_condition(const Eigen::MatrixXd& m);

/// Empirical (1/n) covariance of the rows of `g`.
Eigen::MatrixXd empirical_covariance(const Eigen::MatrixXd& g);

/// Omega^+ Var(G_i) (Omega^+)^T / n, symmetrised. `per_record_moments` is
/// n x d evaluated at the estimate; `omega` is the d x p Jacobian of the mean
/// moment. Throws PreconditionError if omega is identically zero.
Eigen::MatrixXd sandwich_vcov(const Eigen::MatrixXd& per_record_moments,
                              const Eigen::MatrixXd& omega);

struct LogisticFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd vcov;  // inverse Fisher information at coef
  double deviance = 0.0;
  int iterations = 0;
};

inline constexpr double kSeparationBound = 30.0;

/// Logistic regression of binary y on the columns of x by iteratively
/// reweighted least squares from coef = 0, halving steps that increase the
/// deviance. Throws DegenerateDataError when a coefficient passes
/// +-kSeparationBound (separation), IdentifiabilityError for a rank-deficient
/// design and ConvergenceError after max_iter steps.
LogisticFit logistic_irls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int max_iter = 100,
                          double tol = 1e-10);

}  // namespace tndve
