#include "tndve/estimators.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "tndve/error.hpp"
#include "tndve/textio.hpp"

namespace tndve {

namespace {

Eigen::VectorXd treatment_sign1(const Eigen::VectorXd& a) {
  return (2.0 * a.array() - 1.0).matrix();  // (-1)^(1-A)
}

Eigen::Index count_cases(const TndSample& s) {
  return static_cast<Eigen::Index>((s.y().array() == 1.0).count());
}

void require_matching_roles(const BridgeFit& fit, const TndSample& sample) {
  if (!(fit.roles == sample.roles()))
    throw PreconditionError("bridge was fitted with different variable roles than the sample");
}

void check_alpha(double alpha_level) {
  if (!(alpha_level > 0.0 && alpha_level < 1.0))
    throw PreconditionError("alpha level must lie in (0, 1)");
}

Eigen::VectorXd c_vector(const CFunctionSpec& c, const TndSample& sample) {
  if (c.dim() != 1) throw PreconditionError("the marginal estimator needs a one-dimensional c(X)");
  const Eigen::VectorXd v = c.design(sample).col(0);
  if ((v.array() == 0.0).all()) throw PreconditionError("c(X) is identically zero");
  return v;
}

void fill_interval(EstimateReport& r) {
  r.ve_hat = 1.0 - std::exp(r.beta_hat);
  const double var = r.vcov(0, 0);
  r.se = std::sqrt(std::max(var, 0.0));
  const auto ci = wald_ci(r.beta_hat, std::max(var, 0.0), r.alpha_level);
  r.ci_lower = ci.first;
  r.ci_upper = ci.second;
}

void fill_bridge_diagnostics(EstimateReport& r, const BridgeFit& fit, const Eigen::MatrixXd& moments) {
  r.diagnostics.bridge_iterations = fit.iterations;
  r.diagnostics.bridge_moment_residuals = column_mean(moments);
  r.diagnostics.bridge_residual_norm = r.diagnostics.bridge_moment_residuals.norm();
  r.diagnostics.bridge_two_step = fit.two_step;
}

std::vector<std::string> tau_labels(const BridgeFit& fit) {
  std::vector<std::string> out;
  for (const auto& l : fit.spec.features.labels()) out.push_back("tau[" + l + "]");
  return out;
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

std::string_view to_string(EstimatorKind k) noexcept {
  switch (k) {
    case EstimatorKind::nc: return "nc";
    case EstimatorKind::nc_oracle: return "nc-oracle";
    case EstimatorKind::nc_conditional: return "nc-conditional";
    case EstimatorKind::logistic: return "logistic";
  }
  return "nc";
}

EstimatorKind parse_estimator(std::string_view tag) {
  if (tag == "nc") return EstimatorKind::nc;
  if (tag == "nc-oracle") return EstimatorKind::nc_oracle;
  if (tag == "nc-conditional") return EstimatorKind::nc_conditional;
  if (tag == "logistic") return EstimatorKind::logistic;
  throw ConfigError("unknown estimator '" + std::string(tag) +
                    "' (expected nc, nc-oracle, nc-conditional or logistic)");
}

std::string EstimateReport::scale_label() const {
  return std::string(scale == EffectScale::risk_ratio ? kRiskRatioLabel : kOddsRatioLabel);
}

double EstimateReport::ve_at(const TndRecord& record, const VariableRoles& roles) const {
  if (!beta_model) return ve_hat;
  return 1.0 - std::exp(beta_model->evaluate(record, roles).dot(alpha_hat));
}

CFunctionSpec CFunctionSpec::constant_one() { return CFunctionSpec{Form::constant_one, FeatureMap({Term{}})}; }

CFunctionSpec CFunctionSpec::covariate_vector(const TndSample& sample) {
  return CFunctionSpec{Form::covariate_vector, covariate_features(sample, true)};
}

CFunctionSpec CFunctionSpec::custom(FeatureMap features) { return CFunctionSpec{Form::custom, std::move(features)}; }

Eigen::MatrixXd CFunctionSpec::design(const TndSample& sample) const {
  if (form == Form::constant_one) return Eigen::MatrixXd::Ones(sample.n(), 1);
  features.require_columns_in(sample.roles().covariates, "c(X)");
  return features.design(sample);
}

BetaModelSpec BetaModelSpec::intercept_only() { return BetaModelSpec{FeatureMap({Term{}})}; }

BetaModelSpec BetaModelSpec::covariates(const TndSample& sample, bool intercept) {
  return BetaModelSpec{covariate_features(sample, intercept)};
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile needs p in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

std::pair<double, double> wald_ci(double beta_hat, double var_beta, double alpha_level) {
  if (!(var_beta >= 0.0)) throw PreconditionError("variance must be non-negative");
  check_alpha(alpha_level);
  const double half = normal_quantile(1.0 - alpha_level / 2.0) * std::sqrt(var_beta);
  const double lo = 1.0 - std::exp(beta_hat + half);
  const double hi = 1.0 - std::exp(beta_hat - half);
  return {std::min(lo, hi), std::max(lo, hi)};
}

double closed_form_beta(const Eigen::VectorXd& a, const Eigen::VectorXd& y, const Eigen::VectorXd& q,
                        const Eigen::VectorXd& c) {
  const Eigen::VectorXd w = (c.array() * q.array() * y.array()).matrix();
  const Eigen::VectorXd num_terms = (w.array() * a.array()).matrix();
  const Eigen::VectorXd den_terms = (w.array() * (1.0 - a.array())).matrix();
  const double num = pairwise_sum(num_terms.data(), num_terms.size());
  const double den = pairwise_sum(den_terms.data(), den_terms.size());
  if (!(num > 0.0) || !(den > 0.0))
    throw DegenerateDataError("weighted case count non-positive in an arm (vaccinated " + format_double(num) +
                              ", unvaccinated " + format_double(den) + ")");
  return std::log(num / den);
}

Eigen::VectorXd risk_ratio_moment(const Eigen::VectorXd& a, const Eigen::VectorXd& y, const Eigen::VectorXd& q,
                                  const Eigen::VectorXd& c, double beta) {
  return (treatment_sign1(a).array() * c.array() * q.array() * y.array() * (-beta * a.array()).exp()).matrix();
}

EstimateReport estimate_ve_nc(const TndSample& sample, const BridgeFit& bridge, const CFunctionSpec& c,
                              double alpha_level) {
  check_alpha(alpha_level);
  require_matching_roles(bridge, sample);
  const Eigen::VectorXd cv = c_vector(c, sample);
  const BridgeMomentSystem bms(sample, bridge.spec, bridge.moment);
  const Eigen::VectorXd q = bms.weights(bridge.tau_hat);
  const Eigen::VectorXd& a = sample.a();
  const Eigen::VectorXd& y = sample.y();

  EstimateReport r;
  r.estimator = EstimatorKind::nc;
  r.scale = EffectScale::risk_ratio;
  r.alpha_level = alpha_level;
  r.n = sample.n();
  r.n_cases = count_cases(sample);
  r.beta_hat = closed_form_beta(a, y, q, cv);

  const Eigen::Index dt = bms.tau_dim(), dm = bms.moment_dim();
  auto stacked = [&](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd tau = theta.tail(dt);
    Eigen::MatrixXd g(sample.n(), 1 + dm);
    g.col(0) = risk_ratio_moment(a, y, bms.weights(tau), cv, theta(0));
    g.rightCols(dm) = bms.moments(tau);
    return g;
  };
  Eigen::VectorXd theta(1 + dt);
  theta << r.beta_hat, bridge.tau_hat;
  const Eigen::MatrixXd g = stacked(theta);
  const Eigen::MatrixXd omega =
      numeric_jacobian([&](const Eigen::VectorXd& t) { return column_mean(stacked(t)); }, theta);
  r.vcov = sandwich_vcov(g, omega);
  r.coef = theta;
  r.coef_labels = {"beta"};
  for (const auto& l : tau_labels(bridge)) r.coef_labels.push_back(l);

  r.diagnostics.residual_norm = std::fabs(column_mean(g.leftCols(1))(0));
  fill_bridge_diagnostics(r, bridge, g.rightCols(dm));
  const Eigen::VectorXd w = (cv.array() * q.array() * y.array()).matrix();
  r.diagnostics.weighted_cases_vaccinated = w.dot(a);
  r.diagnostics.weighted_cases_unvaccinated = w.sum() - w.dot(a);
  fill_interval(r);
  return r;
}

EstimateReport estimate_ve_fixed_weights(const TndSample& sample, const Eigen::VectorXd& q, const CFunctionSpec& c,
                                         double alpha_level) {
  check_alpha(alpha_level);
  if (q.size() != sample.n()) throw PreconditionError("bridge weights do not match the sample size");
  const Eigen::VectorXd cv = c_vector(c, sample);
  const Eigen::VectorXd& a = sample.a();
  const Eigen::VectorXd& y = sample.y();

  EstimateReport r;
  r.estimator = EstimatorKind::nc_oracle;
  r.scale = EffectScale::risk_ratio;
  r.alpha_level = alpha_level;
  r.n = sample.n();
  r.n_cases = count_cases(sample);
  r.beta_hat = closed_form_beta(a, y, q, cv);

  auto per_record = [&](const Eigen::VectorXd& t) -> Eigen::MatrixXd { return risk_ratio_moment(a, y, q, cv, t(0)); };
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, r.beta_hat);
  const Eigen::MatrixXd g = per_record(theta);
  const Eigen::MatrixXd omega =
      numeric_jacobian([&](const Eigen::VectorXd& t) { return column_mean(per_record(t)); }, theta);
  r.vcov = sandwich_vcov(g, omega);
  r.coef = theta;
  r.coef_labels = {"beta"};
  r.diagnostics.residual_norm = std::fabs(column_mean(g)(0));
  const Eigen::VectorXd w = (cv.array() * q.array() * y.array()).matrix();
  r.diagnostics.weighted_cases_vaccinated = w.dot(a);
  r.diagnostics.weighted_cases_unvaccinated = w.sum() - w.dot(a);
  fill_interval(r);
  return r;
}

EstimateReport estimate_ve_oracle(const TndSample& sample, const TrueBridge& bridge, const CFunctionSpec& c,
                                  double alpha_level) {
  const Eigen::VectorXd q = std::visit([&sample](const auto& b) { return bridge_weights(b, sample); }, bridge);
  EstimateReport r = estimate_ve_fixed_weights(sample, q, c, alpha_level);
  r.notes.push_back("bridge held fixed at its true value; no bridge uncertainty propagated");
  return r;
}

EstimateReport estimate_ve_conditional(const TndSample& sample, const BridgeFit& bridge,
                                       const BetaModelSpec& beta_model, const std::optional<CFunctionSpec>& c_opt,
                                       double alpha_level, const SolverOptions& options) {
  check_alpha(alpha_level);
  require_matching_roles(bridge, sample);
  beta_model.features.require_columns_in(sample.roles().covariates, "beta(X) model");
  const CFunctionSpec c = c_opt ? *c_opt : CFunctionSpec::custom(beta_model.features);
  const Eigen::Index k = beta_model.dim();
  if (k == 0) throw PreconditionError("beta(X) model is empty");
  if (c.dim() != k) throw PreconditionError("dim(c) must equal dim(alpha)");
  const Eigen::MatrixXd cm = c.design(sample);
  if ((cm.array() == 0.0).all()) throw PreconditionError("c(X) is identically zero");
  const Eigen::MatrixXd bm = beta_model.features.design(sample);

  const Eigen::VectorXd& a = sample.a();
  const Eigen::VectorXd& y = sample.y();
  {
    Eigen::MatrixXd cases(count_cases(sample), k);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < sample.n(); ++i)
      if (y(i) == 1.0) cases.row(r++) = bm.row(i);
    if (cases.rows() < k || reciprocal_condition(cases.transpose() * cases) < kBridgeMinRcond)
      throw IdentifiabilityError("beta(X) design over cases does not have full column rank");
  }

  const BridgeMomentSystem bms(sample, bridge.spec, bridge.moment);
  const Eigen::VectorXd q_hat = bms.weights(bridge.tau_hat);
  auto v_moments = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& alpha) {
    const Eigen::ArrayXd scale = treatment_sign1(a).array() * q.array() * y.array() *
                                 (-(bm * alpha).array() * a.array()).exp();
    return Eigen::MatrixXd((cm.array().colwise() * scale).matrix());
  };

  EstimatingSystem sys;
  sys.param_dim = sys.moment_dim = k;
  sys.n = sample.n();
  sys.per_record = [&](const Eigen::VectorXd& alpha) { return v_moments(q_hat, alpha); };
  Eigen::VectorXd init = Eigen::VectorXd::Zero(k);
  const auto& terms = beta_model.features.terms();
  for (Eigen::Index j = 0; j < k; ++j)
    if (terms[static_cast<std::size_t>(j)].factors.empty()) {
      try {
        init(j) = closed_form_beta(a, y, q_hat, Eigen::VectorXd::Ones(sample.n()));
      } catch (const DegenerateDataError&) {
      }
      break;
    }
  const SolveResult sol = solve_root(sys, init, options);

  const Eigen::Index dt = bms.tau_dim(), dm = bms.moment_dim();
  auto stacked = [&](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd tau = theta.tail(dt);
    Eigen::MatrixXd g(sample.n(), k + dm);
    g.leftCols(k) = v_moments(bms.weights(tau), theta.head(k));
    g.rightCols(dm) = bms.moments(tau);
    return g;
  };
  Eigen::VectorXd theta(k + dt);
  theta << sol.theta_hat, bridge.tau_hat;
  const Eigen::MatrixXd g = stacked(theta);
  const Eigen::MatrixXd omega =
      numeric_jacobian([&](const Eigen::VectorXd& t) { return column_mean(stacked(t)); }, theta);

  EstimateReport r;
  r.estimator = EstimatorKind::nc_conditional;
  r.scale = EffectScale::risk_ratio;
  r.alpha_level = alpha_level;
  r.n = sample.n();
  r.n_cases = count_cases(sample);
  r.vcov = sandwich_vcov(g, omega);
  r.coef = theta;
  for (const auto& l : beta_model.features.labels()) r.coef_labels.push_back("alpha[" + l + "]");
  for (const auto& l : tau_labels(bridge)) r.coef_labels.push_back(l);
  r.alpha_hat = sol.theta_hat;
  r.beta_model = beta_model.features;
  r.beta_hat = sol.theta_hat(0);
  r.diagnostics.iterations = sol.iterations;
  r.diagnostics.residual_norm = sol.residual_norm;
  fill_bridge_diagnostics(r, bridge, g.rightCols(dm));
  r.notes.push_back("headline effect is alpha[" + beta_model.features.labels()[0] +
                    "]; use the alpha vector for VE(x)");
  fill_interval(r);
  return r;
}

EstimateReport estimate_ve_logistic(const TndSample& sample, const FeatureMap& covariates, double alpha_level) {
  check_alpha(alpha_level);
  covariates.require_columns_in(sample.roles().covariates, "logistic covariates");
  const Eigen::MatrixXd xc = covariates.design(sample);
  Eigen::MatrixXd x(sample.n(), 1 + xc.cols());
  x.col(0) = sample.a();
  x.rightCols(xc.cols()) = xc;
  const LogisticFit fit = logistic_irls(x, sample.y());

  EstimateReport r;
  r.estimator = EstimatorKind::logistic;
  r.scale = EffectScale::odds_ratio;
  r.alpha_level = alpha_level;
  r.n = sample.n();
  r.n_cases = count_cases(sample);
  r.beta_hat = fit.coef(0);
  r.coef = fit.coef;
  r.coef_labels = {"gamma[" + sample.roles().treatment + "]"};
  for (const auto& l : covariates.labels()) r.coef_labels.push_back("gamma[" + l + "]");
  r.vcov = fit.vcov;
  r.diagnostics.iterations = fit.iterations;
  r.notes.push_back("odds ratio among the tested; approximates the risk ratio only when infection is rare");
  fill_interval(r);
  return r;
}

nlohmann::json to_json(const EstimateReport& r) {
  nlohmann::json diag = {
      {"iterations", r.diagnostics.iterations},
      {"residual_norm", r.diagnostics.residual_norm},
      {"weighted_cases_vaccinated", r.diagnostics.weighted_cases_vaccinated},
      {"weighted_cases_unvaccinated", r.diagnostics.weighted_cases_unvaccinated},
  };
  if (r.estimator == EstimatorKind::nc || r.estimator == EstimatorKind::nc_conditional) {
    diag["bridge_iterations"] = r.diagnostics.bridge_iterations;
    diag["bridge_residual_norm"] = r.diagnostics.bridge_residual_norm;
    diag["bridge_moment_residuals"] = vector_json(r.diagnostics.bridge_moment_residuals);
    diag["bridge_two_step_gmm"] = r.diagnostics.bridge_two_step;
  }
  nlohmann::json out = {
      {"schema_version", kReportSchemaVersion},
      {"estimator", std::string(to_string(r.estimator))},
      {"scale", r.scale_label()},
      {"beta_hat", r.beta_hat},
      {"ve_hat", r.ve_hat},
      {"se", r.se},
      {"ci", {{"lower", r.ci_lower}, {"upper", r.ci_upper}, {"level", 1.0 - r.alpha_level}}},
      {"coef_labels", r.coef_labels},
      {"coef", vector_json(r.coef)},
      {"vcov", matrix_json(r.vcov)},
      {"n", r.n},
      {"n_cases", r.n_cases},
      {"diagnostics", diag},
      {"notes", r.notes},
  };
  if (r.beta_model) {
    out["beta_model"] = r.beta_model->labels();
    out["alpha_hat"] = vector_json(r.alpha_hat);
  }
  return out;
}

std::string format_report(const EstimateReport& r) {
  std::ostringstream os;
  char buf[160];
  os << "estimator   " << to_string(r.estimator) << '\n';
  os << "scale       " << r.scale_label() << '\n';
  os << "n           " << r.n << " (" << r.n_cases << " cases)\n";
  std::snprintf(buf, sizeof buf, "%-11s %12.6f  (se %.6f)\n", r.estimator == EstimatorKind::nc_conditional ? "alpha[0]" : "log effect",
                r.beta_hat, r.se);
  os << buf;
  std::snprintf(buf, sizeof buf, "VE          %12.6f  %g%% CI [%.6f, %.6f]\n", r.ve_hat, 100.0 * (1.0 - r.alpha_level),
                r.ci_lower, r.ci_upper);
  os << buf;
  if (r.beta_model) {
    const auto labels = r.beta_model->labels();
    for (std::size_t j = 0; j < labels.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      std::snprintf(buf, sizeof buf, "  alpha[%s] %12.6f  (se %.6f)\n", labels[j].c_str(), r.alpha_hat(jj),
                    std::sqrt(std::max(0.0, r.vcov(jj, jj))));
      os << buf;
    }
  }
  if (r.estimator == EstimatorKind::nc || r.estimator == EstimatorKind::nc_conditional) {
    std::snprintf(buf, sizeof buf, "bridge      residual norm %.3g, %d iterations%s\n", r.diagnostics.bridge_residual_norm,
                  r.diagnostics.bridge_iterations, r.diagnostics.bridge_two_step ? ", two-step GMM" : "");
    os << buf;
  }
  for (const auto& n : r.notes) os << "note        " << n << '\n';
  return os.str();
}

}  // namespace tndve
