#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "tndve/bridge.hpp"
#include "tndve/cli.hpp"
#include "tndve/data.hpp"
#include "tndve/error.hpp"
#include "tndve/estimators.hpp"
#include "tndve/simulation.hpp"

namespace py = pybind11;
using namespace tndve;

namespace {

VariableRoles roles_from(const py::dict& d) {
  VariableRoles r;
  auto list = [&d](const char* key) {
    return d.contains(key) ? d[key].cast<std::vector<std::string>>() : std::vector<std::string>{};
  };
  r.treatment = d.contains("treatment") ? d["treatment"].cast<std::string>() : "A";
  r.outcome = d.contains("outcome") ? d["outcome"].cast<std::string>() : "Y";
  r.nce = d.contains("nce") ? list("nce") : std::vector<std::string>{"Z"};
  r.nco = d.contains("nco") ? list("nco") : std::vector<std::string>{"W"};
  r.covariates = list("covariates");
  r.categorical = list("categorical");
  r.check();
  return r;
}

py::dict roles_to(const VariableRoles& r) {
  py::dict d;
  d["treatment"] = r.treatment;
  d["outcome"] = r.outcome;
  d["nce"] = r.nce;
  d["nco"] = r.nco;
  d["covariates"] = r.covariates;
  d["categorical"] = r.categorical;
  return d;
}

Eigen::MatrixXd as_matrix(const py::object& o, Eigen::Index n) {
  if (o.is_none()) return Eigen::MatrixXd(n, 0);
  py::array_t<double, py::array::c_style | py::array::forcecast> arr(o);
  if (arr.ndim() == 1) return Eigen::Map<const Eigen::VectorXd>(arr.data(), arr.shape(0));
  if (arr.ndim() != 2) throw SchemaError("column blocks must be 1-d or 2-d arrays");
  Eigen::MatrixXd m(arr.shape(0), arr.shape(1));
  for (py::ssize_t i = 0; i < arr.shape(0); ++i)
    for (py::ssize_t j = 0; j < arr.shape(1); ++j) m(i, j) = *arr.data(i, j);
  return m;
}

BridgeChoice choose_bridge(const TndSample& s, const std::string& form, const std::vector<std::string>& features,
                           const std::vector<std::string>& moment) {
  ConfigDocument doc;
  if (form != "auto") doc.set("bridge.form", ConfigValue{form});
  auto strings = [](const std::vector<std::string>& v) {
    ConfigValue::Array a;
    for (const auto& s : v) a.push_back(ConfigValue{s});
    return ConfigValue{a};
  };
  if (!features.empty()) doc.set("bridge.features", strings(features));
  if (!moment.empty()) doc.set("bridge.moment", strings(moment));
  BridgeForm fallback = BridgeForm::saturated_categorical;
  for (const auto& z : s.roles().nce) {
    const auto levels = s.levels(z);
    bool integer = levels.size() <= 20;
    for (double v : levels) integer = integer && v == std::floor(v);
    if (!integer && !s.roles().is_categorical(z)) fallback = BridgeForm::logistic_gaussian;
  }
  return bridge_choice_from_config(doc, s, fallback);
}

}  // namespace

PYBIND11_MODULE(_tndve, m) {
  m.doc() = "Negative-control vaccine effectiveness estimators for test-negative designs";
  m.attr("__version__") = tool_version();

  static py::exception<Error> base(m, "TndveError", PyExc_ValueError);
  py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<IdentifiabilityError>(m, "IdentifiabilityError", base.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
  py::register_exception<DegenerateDataError>(m, "DegenerateDataError", base.ptr());

  py::class_<TndSample>(m, "Sample")
      .def(py::init([](const py::object& a, const py::object& y, const py::object& z, const py::object& w,
                       const py::object& x, const py::dict& roles) {
             const Eigen::MatrixXd am = as_matrix(a, 0);
             const Eigen::Index n = am.rows();
             VariableRoles r = roles_from(roles);
             const Eigen::MatrixXd xm = as_matrix(x, n);
             if (r.covariates.empty())
               for (Eigen::Index j = 0; j < xm.cols(); ++j) r.covariates.push_back("X" + std::to_string(j + 1));
             return TndSample(r, am.col(0), as_matrix(y, n).col(0), as_matrix(z, n), as_matrix(w, n), xm);
           }),
           py::arg("a"), py::arg("y"), py::arg("z"), py::arg("w"), py::arg("x") = py::none(),
           py::arg("roles") = py::dict())
      .def_static(
          "from_csv", [](const std::string& path, const py::dict& roles) { return load_csv(path, roles_from(roles)); },
          py::arg("path"), py::arg("roles"))
      .def_property_readonly("n", &TndSample::n)
      .def_property_readonly("a", &TndSample::a)
      .def_property_readonly("y", &TndSample::y)
      .def_property_readonly("z", &TndSample::z)
      .def_property_readonly("w", &TndSample::w)
      .def_property_readonly("x", &TndSample::x)
      .def_property_readonly("roles", [](const TndSample& s) { return roles_to(s.roles()); })
      .def("to_csv", [](const TndSample& s) { return to_csv(s); })
      .def("validate",
           [](const TndSample& s) {
             py::list out;
             for (const auto& f : validate(s))
               out.append(py::make_tuple(f.severity == Severity::fatal ? "fatal" : "warning", f.message));
             return out;
           })
      .def("__len__", &TndSample::n);

  m.def(
      "generate",
      [](const std::string& setting, std::int64_t population_size, std::uint64_t seed, std::optional<double> rr) {
        const Setting s = parse_setting(setting);
        if (is_binary(s)) {
          auto p = default_binary_params(s);
          if (rr) p.beta0 = std::log(*rr);
          return generate_binary_sample(p, population_size, seed);
        }
        auto p = default_continuous_params(s);
        if (rr) p.beta0 = std::log(*rr);
        return generate_continuous_sample(p, population_size, seed);
      },
      py::arg("setting") = "binary", py::arg("population_size") = kDeskPopulation, py::arg("seed") = kDefaultSeed,
      py::arg("risk_ratio") = py::none(), "Simulated selected sample from the default parameter table.");

  m.def(
      "_fit_bridge",
      [](const TndSample& s, const std::string& form, const std::vector<std::string>& features,
         const std::vector<std::string>& moment) {
        const auto c = choose_bridge(s, form, features, moment);
        return to_json(fit_bridge_moment(s, c.spec, c.moment)).dump();
      },
      py::arg("sample"), py::arg("form") = "auto", py::arg("features") = std::vector<std::string>{},
      py::arg("moment") = std::vector<std::string>{});

  m.def(
      "_estimate",
      [](const TndSample& s, const std::string& estimator, double alpha, const std::string& form,
         const std::vector<std::string>& features, const std::vector<std::string>& moment,
         const std::string& bridge_json) {
        const EstimatorKind kind = parse_estimator(estimator);
        if (kind == EstimatorKind::logistic)
          return to_json(estimate_ve_logistic(s, BetaModelSpec::covariates(s).features, alpha)).dump();
        if (kind == EstimatorKind::nc_oracle) throw ConfigError("nc-oracle is available in simulations only");
        BridgeFit fit;
        if (!bridge_json.empty()) {
          fit = bridge_fit_from_json(nlohmann::json::parse(bridge_json));
        } else {
          const auto c = choose_bridge(s, form, features, moment);
          fit = fit_bridge_moment(s, c.spec, c.moment);
        }
        if (kind == EstimatorKind::nc) return to_json(estimate_ve_nc(s, fit, CFunctionSpec::constant_one(), alpha)).dump();
        return to_json(estimate_ve_conditional(s, fit, BetaModelSpec::covariates(s), std::nullopt, alpha)).dump();
      },
      py::arg("sample"), py::arg("estimator") = "nc", py::arg("alpha") = 0.05, py::arg("form") = "auto",
      py::arg("features") = std::vector<std::string>{}, py::arg("moment") = std::vector<std::string>{},
      py::arg("bridge_json") = "");

  m.def("_oracle_bridge_binary", [](const std::string& setting) {
    return to_json(oracle_bridge_binary(default_binary_params(parse_setting(setting)))).dump();
  });
  m.def("_oracle_bridge_continuous", [](const std::string& setting) {
    return to_json(oracle_bridge_continuous(default_continuous_params(parse_setting(setting)))).dump();
  });

  m.def(
      "_simulate",
      [](const std::string& config_text, int threads) {
        auto cfg = ScenarioConfig::from_config(ConfigDocument::parse(config_text));
        cfg.threads = threads;
        McSummary s;
        {
          py::gil_scoped_release release;
          s = run_monte_carlo(cfg);
        }
        return py::make_tuple(summary_json(s, cfg).dump(), summary_csv(s));
      },
      py::arg("config"), py::arg("threads") = 1);

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
