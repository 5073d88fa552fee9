#include "tndve/bridge.hpp"

#include <algorithm>
#include <cmath>

#include "tndve/error.hpp"

namespace tndve {

namespace {

Eigen::VectorXd treatment_sign(const Eigen::VectorXd& a) {
  return (1.0 - 2.0 * a.array()).matrix();  // (-1)^A for A in {0,1}
}

bool contains(const std::vector<double>& v, double x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void check_bridge_columns(const BridgeSpec& spec, const VariableRoles& roles) {
  auto allowed = concat(concat({roles.treatment}, roles.nce), roles.covariates);
  spec.features.require_columns_in(allowed, "bridge features");
}

void check_moment_columns(const MomentSpec& m, const VariableRoles& roles) {
  auto allowed = concat(concat({roles.treatment}, roles.nco), roles.covariates);
  m.features.require_columns_in(allowed, "moment features");
}

// Starting value for the logistic-gaussian form: regress A on the features
// that do not involve A among controls. With q(a) close to 1/P(A=a|Z,X) the
// coefficients carry over with the A-terms set to zero.
Eigen::VectorXd logistic_start(const BridgeSpec& spec, const TndSample& sample) {
  const auto& roles = sample.roles();
  Eigen::VectorXd tau = Eigen::VectorXd::Zero(spec.dim());
  std::vector<Eigen::Index> free_cols;
  for (Eigen::Index k = 0; k < spec.dim(); ++k) {
    bool has_a = false;
    for (const auto& f : spec.features.terms()[static_cast<std::size_t>(k)].factors)
      has_a = has_a || f.column == roles.treatment;
    if (!has_a) free_cols.push_back(k);
  }
  if (free_cols.empty()) return tau;
  const Eigen::MatrixXd h = spec.features.design(sample);
  std::vector<Eigen::Index> controls;
  for (Eigen::Index i = 0; i < sample.n(); ++i)
    if (sample.y()(i) == 0.0) controls.push_back(i);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(controls.size()), static_cast<Eigen::Index>(free_cols.size()));
  Eigen::VectorXd a(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Eigen::Index i = controls[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = h(i, free_cols[static_cast<std::size_t>(c)]);
    a(r) = sample.a()(i);
  }
  try {
    const auto fit = logistic_irls(x, a);
    for (Eigen::Index c = 0; c < x.cols(); ++c) tau(free_cols[static_cast<std::size_t>(c)]) = fit.coef(c);
  } catch (const Error&) {
    // Fall back to tau = 0 (q = 2 everywhere).
  }
  return tau;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd json_vector(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string_view to_string(BridgeForm f) noexcept {
  switch (f) {
    case BridgeForm::saturated_categorical: return "saturated";
    case BridgeForm::logistic_gaussian: return "logistic-gaussian";
    case BridgeForm::custom_linear: return "custom";
  }
  return "custom";
}

BridgeForm parse_bridge_form(std::string_view tag) {
  if (tag == "saturated") return BridgeForm::saturated_categorical;
  if (tag == "logistic-gaussian") return BridgeForm::logistic_gaussian;
  if (tag == "custom") return BridgeForm::custom_linear;
  throw ConfigError("unknown bridge form '" + std::string(tag) +
                    "' (expected saturated, logistic-gaussian or custom)");
}

BridgeSpec BridgeSpec::saturated(const TndSample& sample) {
  const auto& roles = sample.roles();
  BridgeSpec spec;
  spec.form = BridgeForm::saturated_categorical;
  std::vector<Term> cells{Term{}};
  for (const auto& z : roles.nce) {
    const auto levels = sample.levels(z);
    if (levels.size() < 2)
      throw IdentifiabilityError("saturated bridge: NCE column " + z + " has a single level");
    spec.levels[z] = levels;
    std::vector<Term> next;
    for (const auto& cell : cells) {
      next.push_back(cell);
      for (std::size_t l = 1; l < levels.size(); ++l) {
        Term t = cell;
        t.factors.push_back({z, levels[l]});
        next.push_back(std::move(t));
      }
    }
    cells = std::move(next);
  }
  std::vector<Term> terms = cells;
  for (const auto& c : cells) terms.push_back(times_treatment(c, roles));
  spec.features = FeatureMap(std::move(terms));
  return spec;
}

BridgeSpec BridgeSpec::logistic_gaussian(const VariableRoles& roles) {
  std::vector<Term> terms{Term{}, Term{{Factor{roles.treatment, std::nullopt}}}};
  for (const auto& z : roles.nce) terms.push_back(Term{{Factor{z, std::nullopt}}});
  for (const auto& x : roles.covariates) terms.push_back(Term{{Factor{x, std::nullopt}}});
  BridgeSpec spec;
  spec.form = BridgeForm::logistic_gaussian;
  spec.features = FeatureMap(std::move(terms));
  return spec;
}

BridgeSpec BridgeSpec::custom(FeatureMap features, BridgeForm form) {
  BridgeSpec spec;
  spec.form = form == BridgeForm::saturated_categorical ? BridgeForm::custom_linear : form;
  spec.features = std::move(features);
  return spec;
}

Eigen::VectorXd BridgeSpec::weights(const Eigen::MatrixXd& h, const Eigen::VectorXd& a,
                                    const Eigen::VectorXd& tau) const {
  if (tau.size() != dim()) throw PreconditionError("bridge: tau has the wrong dimension");
  const Eigen::VectorXd lin = h * tau;
  if (form == BridgeForm::logistic_gaussian)
    return (1.0 + (treatment_sign(a).array() * lin.array()).exp()).matrix();
  return lin;
}

MomentSpec MomentSpec::linear(const TndSample& sample) {
  const auto& roles = sample.roles();
  std::vector<Term> terms{Term{}};
  const auto ws = expand_columns(sample, roles.nco);
  terms.insert(terms.end(), ws.begin(), ws.end());
  terms.push_back(Term{{Factor{roles.treatment, std::nullopt}}});
  const auto xs = expand_columns(sample, roles.covariates);
  terms.insert(terms.end(), xs.begin(), xs.end());
  return MomentSpec{FeatureMap(std::move(terms))};
}

MomentSpec MomentSpec::interactions(const TndSample& sample) {
  const auto& roles = sample.roles();
  MomentSpec m = linear(sample);
  std::vector<Term> terms = m.features.terms();
  auto add = [&](const std::vector<Term>& base) {
    for (const auto& t : base) terms.push_back(times_treatment(t, roles));
  };
  add(expand_columns(sample, roles.nco));
  add(expand_columns(sample, roles.covariates));
  return MomentSpec{FeatureMap(std::move(terms))};
}

BridgeMomentSystem::BridgeMomentSystem(const TndSample& sample, BridgeSpec spec, MomentSpec moment)
    : spec_(std::move(spec)), moment_(std::move(moment)), a_(sample.a()) {
  check_bridge_columns(spec_, sample.roles());
  check_moment_columns(moment_, sample.roles());
  if (spec_.dim() == 0) throw ConfigError("bridge feature map is empty");
  if (moment_.dim() == 0) throw ConfigError("moment feature map is empty");
  h_ = spec_.features.design(sample);
  const Eigen::ArrayXd controls = 1.0 - sample.y().array();
  m_controls_ = (moment_.features.design(sample).array().colwise() * controls).matrix();
  offset_ = ((moment_.features.design(sample, 1) + moment_.features.design(sample, 0)).array().colwise() *
             controls)
                .matrix();
}

Eigen::VectorXd BridgeMomentSystem::weights(const Eigen::VectorXd& tau) const {
  return spec_.weights(h_, a_, tau);
}

Eigen::MatrixXd BridgeMomentSystem::moments(const Eigen::VectorXd& tau) const {
  const Eigen::VectorXd q = weights(tau);
  return (m_controls_.array().colwise() * q.array()).matrix() - offset_;
}

EstimatingSystem BridgeMomentSystem::system() const {
  EstimatingSystem s;
  s.param_dim = tau_dim();
  s.moment_dim = moment_dim();
  s.n = n();
  s.per_record = [this](const Eigen::VectorXd& tau) { return moments(tau); };
  return s;
}

BridgeFit fit_bridge_moment(const TndSample& sample, const BridgeSpec& spec, const MomentSpec& moment,
                            const SolverOptions& options) {
  if (moment.dim() < spec.dim())
    throw IdentifiabilityError("bridge is under-identified: moment dimension " + std::to_string(moment.dim()) +
                               " is below the parameter dimension " + std::to_string(spec.dim()));
  bool controls[2] = {false, false};
  for (Eigen::Index i = 0; i < sample.n(); ++i)
    if (sample.y()(i) == 0.0) controls[sample.a()(i) == 1.0 ? 1 : 0] = true;
  if (!controls[0]) throw DegenerateDataError("no unvaccinated controls: bridge cannot be fitted");
  if (!controls[1]) throw DegenerateDataError("no vaccinated controls: bridge cannot be fitted");

  const BridgeMomentSystem bms(sample, spec, moment);
  const EstimatingSystem sys = bms.system();
  const Eigen::VectorXd init = spec.form == BridgeForm::logistic_gaussian
                                   ? logistic_start(spec, sample)
                                   : Eigen::VectorXd::Zero(spec.dim());

  BridgeFit fit;
  fit.spec = spec;
  fit.moment = moment;
  fit.roles = sample.roles();
  if (moment.dim() == spec.dim()) {
    const auto r = solve_root(sys, init, options);
    fit.tau_hat = r.theta_hat;
    fit.iterations = r.iterations;
  } else {
    const auto d = moment.dim();
    const auto first = gmm_minimize(sys, Eigen::MatrixXd::Identity(d, d), init, options);
    Eigen::MatrixXd s = empirical_covariance(bms.moments(first.theta_hat));
    s.diagonal().array() += 1e-8 * s.trace() / static_cast<double>(d);
    if (!(s.trace() > 0.0)) throw IdentifiabilityError("bridge moments have zero variance");
    Eigen::MatrixXd w = s.ldlt().solve(Eigen::MatrixXd::Identity(d, d));
    w = 0.5 * (w + w.transpose());
    const auto second = gmm_minimize(sys, w, first.theta_hat, options);
    fit.tau_hat = second.theta_hat;
    fit.iterations = first.iterations + second.iterations;
    fit.two_step = true;
    fit.objective = second.objective;
  }
  fit.per_record_moments = bms.moments(fit.tau_hat);
  fit.residual_norm = column_mean(fit.per_record_moments).norm();
  return fit;
}

Eigen::VectorXd moment_residuals(const BridgeFit& fit, const TndSample& sample) {
  const BridgeMomentSystem bms(sample, fit.spec, fit.moment);
  return column_mean(bms.moments(fit.tau_hat));
}

Eigen::VectorXd solve_bridge_categorical(const Eigen::MatrixXd& p) {
  if (p.rows() != p.cols() || p.rows() == 0)
    throw PreconditionError("bridge matrix must be square and non-empty");
  if (!p.allFinite() || (p.array() < 0.0).any() || (p.array() > 1.0).any())
    throw PreconditionError("bridge matrix entries must be probabilities in [0,1]");
  if (reciprocal_condition(p) < kBridgeMinRcond)
    throw IdentifiabilityError(
        "bridge matrix is singular or near-singular: no unique bridge solution exists "
        "(the NCE does not carry enough information about the confounder)");
  return p.fullPivLu().solve(Eigen::VectorXd::Ones(p.rows()));
}

CategoricalBridgeTable empirical_bridge_table(const TndSample& sample) {
  const auto& roles = sample.roles();
  if (roles.nce.size() != 1 || roles.nco.size() != 1)
    throw PreconditionError("empirical bridge table needs exactly one NCE and one NCO column");
  const auto zl = sample.levels(roles.nce[0]);
  const auto wl = sample.levels(roles.nco[0]);
  if (zl.size() != wl.size())
    throw IdentifiabilityError("NCE and NCO have different numbers of levels");
  const Eigen::Index k = static_cast<Eigen::Index>(zl.size());
  Eigen::MatrixXd counts[2] = {Eigen::MatrixXd::Zero(k, k), Eigen::MatrixXd::Zero(k, k)};
  Eigen::VectorXd w_totals = Eigen::VectorXd::Zero(k);
  const Eigen::VectorXd z = sample.z().col(0), w = sample.w().col(0);
  for (Eigen::Index i = 0; i < sample.n(); ++i) {
    if (sample.y()(i) != 0.0) continue;
    const auto wi = std::lower_bound(wl.begin(), wl.end(), w(i)) - wl.begin();
    const auto zi = std::lower_bound(zl.begin(), zl.end(), z(i)) - zl.begin();
    counts[sample.a()(i) == 1.0 ? 1 : 0](wi, zi) += 1.0;
    w_totals(wi) += 1.0;
  }
  if ((w_totals.array() == 0.0).any()) throw IdentifiabilityError("an NCO level has no controls");
  CategoricalBridgeTable t;
  t.levels_z = zl;
  for (int a = 0; a <= 1; ++a) {
    const Eigen::MatrixXd p = counts[a].array().colwise() / w_totals.array();
    (a ? t.q1 : t.q0) = solve_bridge_categorical(p);
  }
  return t;
}

CategoricalBridgeTable oracle_bridge_binary(const BinaryDgpParams& params) {
  params.validate();
  CategoricalBridgeTable t;
  t.levels_z = {0.0, 1.0};
  for (int a = 0; a <= 1; ++a) {
    Eigen::MatrixXd p(2, 2);
    for (int u = 0; u <= 1; ++u) {
      const double pa = a ? params.prob_a(u) : 1.0 - params.prob_a(u);
      p(u, 0) = pa * (1.0 - params.prob_z(u));
      p(u, 1) = pa * params.prob_z(u);
    }
    (a ? t.q1 : t.q0) = solve_bridge_categorical(p);
  }
  return t;
}

double oracle_identity_residual(const BinaryDgpParams& params, const CategoricalBridgeTable& table) {
  double worst = 0.0;
  for (int a = 0; a <= 1; ++a)
    for (int u = 0; u <= 1; ++u) {
      const double pa = a ? params.prob_a(u) : 1.0 - params.prob_a(u);
      const double s = eval_bridge(table, a, 0.0) * pa * (1.0 - params.prob_z(u)) +
                       eval_bridge(table, a, 1.0) * pa * params.prob_z(u);
      worst = std::max(worst, std::fabs(s - 1.0));
    }
  return worst;
}

ContinuousBridgeParams oracle_bridge_continuous(const ContinuousDgpParams& p) {
  if (p.mu_uz == 0.0) throw IdentifiabilityError("mu_uz = 0: the NCE carries no confounder information");
  const double r = p.mu_ua / p.mu_uz;
  const double s2 = p.sigma_z * p.sigma_z;
  ContinuousBridgeParams out;
  out.tau2 = r;
  out.tau3 = Eigen::VectorXd::Constant(1, p.mu_xa - p.mu_xz * r);
  out.tau1 = s2 * r * r - r * p.mu_az;
  out.tau0 = p.mu_0a - r * p.mu_0z - s2 * r * r / 2.0;
  return out;
}

double eval_bridge(const CategoricalBridgeTable& table, int a, double z) {
  if (a != 0 && a != 1) throw DomainError("treatment must be 0 or 1");
  const auto it = std::find(table.levels_z.begin(), table.levels_z.end(), z);
  if (it == table.levels_z.end()) throw DomainError("NCE value " + std::to_string(z) + " is not in the bridge table");
  return table.slice(a)(it - table.levels_z.begin());
}

double eval_bridge(const ContinuousBridgeParams& p, int a, double z, const Eigen::VectorXd& x) {
  if (a != 0 && a != 1) throw DomainError("treatment must be 0 or 1");
  if (x.size() != p.tau3.size()) throw DomainError("covariate vector has the wrong length");
  const double lin = p.tau0 + p.tau1 * a + p.tau2 * z + p.tau3.dot(x);
  return 1.0 + std::exp(a ? -lin : lin);
}

double eval_bridge(const BridgeFit& fit, int a, const std::vector<double>& z, const std::vector<double>& x) {
  if (a != 0 && a != 1) throw DomainError("treatment must be 0 or 1");
  if (z.size() != fit.roles.nce.size() || x.size() != fit.roles.covariates.size())
    throw DomainError("record does not match the bridge's variable roles");
  for (std::size_t j = 0; j < z.size(); ++j) {
    const auto lv = fit.spec.levels.find(fit.roles.nce[j]);
    if (lv != fit.spec.levels.end() && !contains(lv->second, z[j]))
      throw DomainError("NCE value " + std::to_string(z[j]) + " of column " + fit.roles.nce[j] +
                        " was not seen when the bridge was fitted");
  }
  TndRecord r;
  r.a = a;
  r.z = z;
  r.x = x;
  r.w.assign(fit.roles.nco.size(), 0.0);
  const Eigen::VectorXd h = fit.spec.features.evaluate(r, fit.roles);
  const double lin = h.dot(fit.tau_hat);
  if (fit.spec.form == BridgeForm::logistic_gaussian) return 1.0 + std::exp(a ? -lin : lin);
  return lin;
}

Eigen::VectorXd bridge_weights(const CategoricalBridgeTable& table, const TndSample& sample) {
  if (sample.z().cols() != 1) throw PreconditionError("bridge table needs exactly one NCE column");
  Eigen::VectorXd q(sample.n());
  for (Eigen::Index i = 0; i < sample.n(); ++i)
    q(i) = eval_bridge(table, static_cast<int>(sample.a()(i)), sample.z()(i, 0));
  return q;
}

Eigen::VectorXd bridge_weights(const ContinuousBridgeParams& params, const TndSample& sample) {
  if (sample.z().cols() != 1) throw PreconditionError("continuous bridge needs exactly one NCE column");
  if (sample.x().cols() != params.tau3.size())
    throw PreconditionError("continuous bridge covariate count does not match the sample");
  Eigen::VectorXd q(sample.n());
  for (Eigen::Index i = 0; i < sample.n(); ++i)
    q(i) = eval_bridge(params, static_cast<int>(sample.a()(i)), sample.z()(i, 0), sample.x().row(i).transpose());
  return q;
}

nlohmann::json to_json(const BridgeFit& fit) {
  nlohmann::json levels = nlohmann::json::object();
  for (const auto& [k, v] : fit.spec.levels) levels[k] = v;
  return {
      {"kind", "bridge-fit"},
      {"form", std::string(to_string(fit.spec.form))},
      {"features", fit.spec.features.labels()},
      {"levels", levels},
      {"moment", fit.moment.features.labels()},
      {"tau", vector_json(fit.tau_hat)},
      {"residual_norm", fit.residual_norm},
      {"iterations", fit.iterations},
      {"two_step_gmm", fit.two_step},
      {"roles",
       {{"treatment", fit.roles.treatment},
        {"outcome", fit.roles.outcome},
        {"nce", fit.roles.nce},
        {"nco", fit.roles.nco},
        {"covariates", fit.roles.covariates},
        {"categorical", fit.roles.categorical}}},
  };
}

BridgeFit bridge_fit_from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("kind", "") != "bridge-fit") throw ConfigError("not a bridge-fit document");
    BridgeFit fit;
    fit.spec.form = parse_bridge_form(doc.at("form").get<std::string>());
    fit.spec.features = FeatureMap::parse(doc.at("features").get<std::vector<std::string>>());
    if (doc.contains("levels"))
      for (const auto& [k, v] : doc.at("levels").items()) fit.spec.levels[k] = v.get<std::vector<double>>();
    fit.moment.features = FeatureMap::parse(doc.at("moment").get<std::vector<std::string>>());
    fit.tau_hat = json_vector(doc.at("tau"));
    if (fit.tau_hat.size() != fit.spec.dim())
      throw ConfigError("bridge document: tau length does not match the feature list");
    fit.residual_norm = doc.value("residual_norm", 0.0);
    fit.iterations = doc.value("iterations", 0);
    fit.two_step = doc.value("two_step_gmm", false);
    const auto& r = doc.at("roles");
    fit.roles.treatment = r.at("treatment").get<std::string>();
    fit.roles.outcome = r.at("outcome").get<std::string>();
    fit.roles.nce = r.at("nce").get<std::vector<std::string>>();
    fit.roles.nco = r.at("nco").get<std::vector<std::string>>();
    fit.roles.covariates = r.value("covariates", std::vector<std::string>{});
    fit.roles.categorical = r.value("categorical", std::vector<std::string>{});
    return fit;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed bridge document: ") + e.what());
  }
}

nlohmann::json to_json(const CategoricalBridgeTable& t) {
  return {{"kind", "categorical-bridge"},
          {"levels_z", t.levels_z},
          {"q0", vector_json(t.q0)},
          {"q1", vector_json(t.q1)}};
}

nlohmann::json to_json(const ContinuousBridgeParams& p) {
  return {{"kind", "continuous-bridge"},
          {"tau0", p.tau0},
          {"tau1", p.tau1},
          {"tau2", p.tau2},
          {"tau3", vector_json(p.tau3)}};
}

BridgeChoice bridge_choice_from_config(const ConfigDocument& doc, const TndSample& sample,
                                       BridgeForm default_form) {
  for (const auto& key : doc.keys_in("bridge"))
    if (key != "form" && key != "features" && key != "moment")
      throw ConfigError("unknown key bridge." + key);
  const BridgeForm form = doc.has("bridge.form") ? parse_bridge_form(*doc.get_string("bridge.form")) : default_form;
  BridgeChoice c;
  switch (form) {
    case BridgeForm::saturated_categorical: c.spec = BridgeSpec::saturated(sample); break;
    case BridgeForm::logistic_gaussian: c.spec = BridgeSpec::logistic_gaussian(sample.roles()); break;
    case BridgeForm::custom_linear: {
      const auto f = doc.get_string_list("bridge.features");
      if (!f) throw ConfigError("bridge.form = \"custom\" requires bridge.features");
      c.spec = BridgeSpec::custom(FeatureMap::parse(*f));
      break;
    }
  }
  if (form != BridgeForm::custom_linear && doc.has("bridge.features"))
    c.spec = BridgeSpec::custom(FeatureMap::parse(*doc.get_string_list("bridge.features")), form);
  if (!doc.has("bridge.moment")) {
    c.moment = MomentSpec::interactions(sample);
  } else {
    const auto list = *doc.get_string_list("bridge.moment");
    if (list.size() == 1 && list[0] == "linear") c.moment = MomentSpec::linear(sample);
    else if (list.size() == 1 && list[0] == "interactions") c.moment = MomentSpec::interactions(sample);
    else c.moment = MomentSpec::custom(FeatureMap::parse(list));
  }
  check_bridge_columns(c.spec, sample.roles());
  check_moment_columns(c.moment, sample.roles());
  return c;
}

}  // namespace tndve
