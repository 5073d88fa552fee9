#include "tndve/solver.hpp"

#include <sstream>

#include "tndve/error.hpp"

namespace tndve {

namespace {

constexpr Eigen::Index kPairwiseBlock = 128;

double pairwise_strided(const double* data, Eigen::Index n, Eigen::Index stride) {
  if (n <= kPairwiseBlock) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += data[i * stride];
    return s;
  }
  const Eigen::Index half = n / 2;
  return pairwise_strided(data, half, stride) +
         pairwise_strided(data + half * stride, n - half, stride);
}

bool finite(const Eigen::VectorXd& v) { return v.allFinite(); }

std::string describe_trajectory(const std::vector<double>& t) {
  std::ostringstream os;
  os.precision(3);
  const std::size_t start = t.size() > 5 ? t.size() - 5 : 0;
  for (std::size_t i = start; i < t.size(); ++i) os << (i > start ? ", " : "") << t[i];
  return os.str();
}

}  // namespace

double pairwise_sum(const double* data, Eigen::Index n) { return pairwise_strided(data, n, 1); }

Eigen::VectorXd column_mean(const Eigen::MatrixXd& m) {
  Eigen::VectorXd out(m.cols());
  if (m.rows() == 0) return Eigen::VectorXd::Zero(m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    out(j) = pairwise_strided(m.col(j).data(), m.rows(), 1) / static_cast<double>(m.rows());
  return out;
}

Eigen::VectorXd mean_moment(const EstimatingSystem& system, const Eigen::VectorXd& theta) {
  return column_mean(system.per_record(theta));
}

Eigen::MatrixXd numeric_jacobian(const VectorFn& f, const Eigen::VectorXd& x, double scale) {
  const Eigen::VectorXd f0 = f(x);
  if (!finite(f0)) throw DomainError("numeric_jacobian: function is not finite at the point");
  Eigen::MatrixXd jac(f0.size(), x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = scale * std::max(1.0, std::fabs(x(j)));
    xp(j) = x(j) + h;
    const Eigen::VectorXd fp = f(xp);
    xp(j) = x(j) - h;
    const Eigen::VectorXd fm = f(xp);
    xp(j) = x(j);
    if (!finite(fp) || !finite(fm))
      throw DomainError("numeric_jacobian: function is not finite near the point");
    // (x+h)-(x-h) is the step actually taken after rounding.
    jac.col(j) = (fp - fm) / ((x(j) + h) - (x(j) - h));
  }
  return jac;
}

double reciprocal_condition(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0.0;
  return s(s.size() - 1) / s(0);
}

Eigen::MatrixXd pinv(const Eigen::MatrixXd& m, double rel_cutoff) {
  if (m.size() == 0) return Eigen::MatrixXd(m.cols(), m.rows());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double cutoff = rel_cutoff * (s.size() ? s(0) : 0.0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > cutoff && s(i) > 0.0) inv(i) = 1.0 / s(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Eigen::MatrixXd empirical_covariance(const Eigen::MatrixXd& g) {
  const Eigen::VectorXd mu = column_mean(g);
  const Eigen::MatrixXd centered = g.rowwise() - mu.transpose();
  return centered.transpose() * centered / static_cast<double>(g.rows());
}

Eigen::MatrixXd sandwich_vcov(const Eigen::MatrixXd& per_record_moments,
                              const Eigen::MatrixXd& omega) {
  if (omega.rows() != per_record_moments.cols())
    throw PreconditionError("sandwich_vcov: omega rows must match the moment dimension");
  if (!omega.allFinite()) throw PreconditionError("sandwich_vcov: omega is not finite");
  if ((omega.array() == 0.0).all()) throw PreconditionError("sandwich_vcov: omega is identically zero");
  const Eigen::MatrixXd omega_pinv = pinv(omega);
  const Eigen::MatrixXd var = empirical_covariance(per_record_moments);
  const Eigen::MatrixXd s = omega_pinv * var * omega_pinv.transpose() /
                            static_cast<double>(per_record_moments.rows());
  return 0.5 * (s + s.transpose());
}

SolveResult solve_root(const EstimatingSystem& system, const Eigen::VectorXd& init,
                       const SolverOptions& opt) {
  if (system.moment_dim != system.param_dim)
    throw PreconditionError("solve_root requires as many moments as parameters");
  if (init.size() != system.param_dim || !init.allFinite())
    throw PreconditionError("solve_root: initial value must be finite with the parameter dimension");

  const VectorFn gbar = [&system](const Eigen::VectorXd& t) { return mean_moment(system, t); };
  SolveResult res;
  Eigen::VectorXd theta = init;
  Eigen::VectorXd g = gbar(theta);
  if (!finite(g)) throw DomainError("solve_root: moments are not finite at the initial value");
  double norm = g.norm();
  res.trajectory.push_back(norm);

  int iter = 0;
  while (norm > opt.tol) {
    if (iter >= opt.max_iter)
      throw ConvergenceError("solve_root: no convergence after " + std::to_string(opt.max_iter) +
                                 " iterations (residual norms: " +
                                 describe_trajectory(res.trajectory) + ")",
                             res.trajectory);
    const Eigen::MatrixXd jac = numeric_jacobian(gbar, theta, opt.jacobian_scale);
    if (reciprocal_condition(jac) < opt.min_rcond)
      throw IdentifiabilityError("solve_root: moment Jacobian is singular or near-singular");
    const Eigen::VectorXd step = -jac.fullPivLu().solve(g);
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
      const Eigen::VectorXd cand = theta + t * step;
      const Eigen::VectorXd gc = gbar(cand);
      if (finite(gc) && gc.norm() < norm) {
        theta = cand;
        g = gc;
        norm = gc.norm();
        accepted = true;
        break;
      }
    }
    ++iter;
    res.trajectory.push_back(norm);
    if (!accepted)
      throw ConvergenceError("solve_root: line search failed to reduce the residual (residual norms: " +
                                 describe_trajectory(res.trajectory) + ")",
                             res.trajectory);
  }

  res.theta_hat = theta;
  res.residual_norm = norm;
  res.iterations = iter;
  res.converged = true;
  res.jacobian_at_solution = numeric_jacobian(gbar, theta, opt.jacobian_scale);
  return res;
}

SolveResult gmm_minimize(const EstimatingSystem& system, const Eigen::MatrixXd& weight,
                         const Eigen::VectorXd& init, const SolverOptions& opt) {
  const Eigen::Index d = system.moment_dim;
  if (d < system.param_dim) throw PreconditionError("gmm_minimize: fewer moments than parameters");
  if (weight.rows() != d || weight.cols() != d)
    throw PreconditionError("gmm_minimize: weight must be moment_dim x moment_dim");
  if (!weight.allFinite() ||
      (weight - weight.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + weight.cwiseAbs().maxCoeff()))
    throw PreconditionError("gmm_minimize: weight matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(weight, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() <= 0.0)
    throw PreconditionError("gmm_minimize: weight matrix must be positive definite");
  if (init.size() != system.param_dim || !init.allFinite())
    throw PreconditionError("gmm_minimize: initial value must be finite with the parameter dimension");

  const VectorFn gbar = [&system](const Eigen::VectorXd& t) { return mean_moment(system, t); };
  auto objective = [&weight](const Eigen::VectorXd& g) { return g.dot(weight * g); };

  SolveResult res;
  Eigen::VectorXd theta = init;
  Eigen::VectorXd g = gbar(theta);
  if (!finite(g)) throw DomainError("gmm_minimize: moments are not finite at the initial value");
  double obj = objective(g);
  Eigen::MatrixXd jac = numeric_jacobian(gbar, theta, opt.jacobian_scale);
  Eigen::VectorXd grad = jac.transpose() * weight * g;
  res.trajectory.push_back(grad.norm());
  // Over-identified moments do not vanish at the optimum, so the gradient
  // carries rounding noise proportional to |J| |W g|.
  auto grad_tol = [&]() { return opt.tol * std::max(1.0, jac.norm() * (weight * g).norm()); };

  int iter = 0;
  while (grad.norm() > grad_tol()) {
    if (iter >= opt.max_iter)
      throw ConvergenceError("gmm_minimize: no convergence after " + std::to_string(opt.max_iter) +
                                 " iterations (gradient norms: " +
                                 describe_trajectory(res.trajectory) + ")",
                             res.trajectory);
    const Eigen::MatrixXd normal = jac.transpose() * weight * jac;
    if (reciprocal_condition(normal) < opt.min_rcond)
      throw IdentifiabilityError("gmm_minimize: moment Jacobian is rank deficient");
    const Eigen::VectorXd step = -normal.ldlt().solve(grad);
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
      const Eigen::VectorXd cand = theta + t * step;
      const Eigen::VectorXd gc = gbar(cand);
      if (!finite(gc)) continue;
      const double oc = objective(gc);
      if (oc < obj) {
        theta = cand;
        g = gc;
        obj = oc;
        accepted = true;
        break;
      }
    }
    ++iter;
    if (!accepted) {
      // The objective cannot be lowered in floating point; accept the point if
      // the step itself is negligible relative to theta.
      if (step.norm() <= 1e-8 * (1.0 + theta.norm())) break;
      throw ConvergenceError("gmm_minimize: line search failed (gradient norms: " +
                                 describe_trajectory(res.trajectory) + ")",
                             res.trajectory);
    }
    jac = numeric_jacobian(gbar, theta, opt.jacobian_scale);
    grad = jac.transpose() * weight * g;
    res.trajectory.push_back(grad.norm());
  }

  res.theta_hat = theta;
  res.residual_norm = g.norm();
  res.gradient_norm = grad.norm();
  res.objective = obj;
  res.iterations = iter;
  res.converged = true;
  res.jacobian_at_solution = jac;
  return res;
}

namespace {

double logistic_deviance(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  // -2 log-likelihood, written to avoid log(0) for large |eta|.
  double d = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double e = eta(i);
    const double log1pexp = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    d += log1pexp - y(i) * e;
  }
  return 2.0 * d;
}

}  // namespace

LogisticFit logistic_irls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int max_iter, double tol) {
  if (x.rows() != y.size() || x.rows() == 0)
    throw PreconditionError("logistic_irls: design and outcome sizes differ or are empty");
  if (!x.allFinite()) throw PreconditionError("logistic_irls: design matrix is not finite");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y(i) != 0.0 && y(i) != 1.0) throw PreconditionError("logistic_irls: outcome must be 0/1");
  if (reciprocal_condition(x.transpose() * x) < 1e-12)
    throw IdentifiabilityError("logistic_irls: design matrix is rank deficient");

  LogisticFit fit;
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(x.cols());
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(x.rows());
  double dev = logistic_deviance(eta, y);
  std::vector<double> trajectory;
  Eigen::MatrixXd info;
  bool deviance_settled = false;

  for (int iter = 0;; ++iter) {
    const Eigen::ArrayXd prob = 1.0 / (1.0 + (-eta.array()).exp());
    const Eigen::ArrayXd w = prob * (1.0 - prob);
    const Eigen::VectorXd score = x.transpose() * (y.array() - prob).matrix();
    info = x.transpose() * (x.array().colwise() * w).matrix();
    trajectory.push_back(score.norm());
    // The design has full rank, so a collapsing information matrix means the
    // fitted probabilities are being driven to 0 or 1.
    if (reciprocal_condition(info) < 1e-14)
      throw DegenerateDataError("logistic_irls: information matrix collapses (perfect separation)");
    const Eigen::VectorXd step = info.ldlt().solve(score);
    if (deviance_settled || step.cwiseAbs().maxCoeff() <= tol * (1.0 + coef.cwiseAbs().maxCoeff())) {
      fit.iterations = iter;
      break;
    }
    if (iter >= max_iter)
      throw ConvergenceError("logistic_irls: no convergence after " + std::to_string(max_iter) + " iterations",
                             trajectory);
    double t = 1.0;
    Eigen::VectorXd cand, cand_eta;
    double cand_dev = dev;
    for (int h = 0; h <= 20; ++h, t *= 0.5) {
      cand = coef + t * step;
      cand_eta = x * cand;
      cand_dev = logistic_deviance(cand_eta, y);
      if (cand_dev <= dev + 1e-12 * (1.0 + dev)) break;
    }
    deviance_settled = std::fabs(cand_dev - dev) <= tol * tol * (1.0 + dev);
    coef = cand;
    eta = cand_eta;
    dev = cand_dev;
    if (coef.cwiseAbs().maxCoeff() > kSeparationBound)
      throw DegenerateDataError("logistic_irls: coefficient diverges past +-30 (perfect separation)");
  }
  fit.coef = coef;
  fit.deviance = dev;
  fit.vcov = info.inverse();
  fit.vcov = 0.5 * (fit.vcov + fit.vcov.transpose());
  return fit;
}

}  // namespace tndve
