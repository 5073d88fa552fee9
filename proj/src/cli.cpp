#include "tndve/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "tndve/bridge.hpp"
#include "tndve/config.hpp"
#include "tndve/data.hpp"
#include "tndve/error.hpp"
#include "tndve/estimators.hpp"
#include "tndve/simulation.hpp"
#include "tndve/textio.hpp"

#ifndef TNDVE_VERSION
#define TNDVE_VERSION "0.0.0"
#endif

namespace tndve {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

ConfigDocument load_config(const std::string& path) {
  if (!fs::exists(path)) throw IoError("config file not found: " + path);
  return ConfigDocument::load(path);
}

// Saturated when every NCE column holds a handful of integer codes.
BridgeForm default_bridge_form(const TndSample& s) {
  for (const auto& z : s.roles().nce) {
    if (s.roles().is_categorical(z)) continue;
    const auto levels = s.levels(z);
    if (levels.size() > 20) return BridgeForm::logistic_gaussian;
    for (double v : levels)
      if (v != std::floor(v)) return BridgeForm::logistic_gaussian;
  }
  return BridgeForm::saturated_categorical;
}

BetaModelSpec beta_model_from(const ConfigDocument& doc, const TndSample& s) {
  if (!doc.has("estimate.beta_model")) return BetaModelSpec::covariates(s);
  const auto list = *doc.get_string_list("estimate.beta_model");
  if (list.size() == 1 && list[0] == "intercept") return BetaModelSpec::intercept_only();
  if (list.size() == 1 && list[0] == "covariates") return BetaModelSpec::covariates(s);
  return BetaModelSpec::custom(FeatureMap::parse(list));
}

std::optional<CFunctionSpec> c_function_from(const ConfigDocument& doc, const TndSample& s) {
  if (!doc.has("estimate.c")) return std::nullopt;
  const auto list = *doc.get_string_list("estimate.c");
  if (list.size() == 1 && list[0] == "one") return CFunctionSpec::constant_one();
  if (list.size() == 1 && list[0] == "covariates") return CFunctionSpec::covariate_vector(s);
  return CFunctionSpec::custom(FeatureMap::parse(list));
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
  return p.parent_path() / (p.stem().string() + suffix);
}

struct EstimateArgs {
  std::string data, config, bridge_config, estimator, out, bridge_in, bridge_out;
  std::optional<double> alpha;
};

int cmd_estimate(const EstimateArgs& a, const std::vector<std::string>& argv, std::ostream& out,
                 std::ostream& err) {
  RunManifest m;
  m.command = "estimate";
  m.arguments = argv;
  m.started_at = utc_now();
  m.tool_version = tool_version();

  ConfigDocument doc = load_config(a.config);
  if (!a.bridge_config.empty()) {
    const ConfigDocument b = load_config(a.bridge_config);
    for (const auto& key : b.keys_in("bridge")) doc.set("bridge." + key, *b.find("bridge." + key));
  }
  for (const auto& key : doc.keys_in("estimate"))
    if (key != "estimator" && key != "alpha" && key != "beta_model" && key != "c")
      throw ConfigError("unknown key estimate." + key);
  if (!a.estimator.empty()) doc.set("estimate.estimator", ConfigValue{a.estimator});
  if (a.alpha) doc.set("estimate.alpha", ConfigValue{*a.alpha});
  const EstimatorKind kind = parse_estimator(doc.get_string("estimate.estimator").value_or("nc"));
  const double alpha = doc.get_double("estimate.alpha").value_or(0.05);

  const VariableRoles roles = VariableRoles::from_config(doc);
  if (!fs::exists(a.data)) throw IoError("data file not found: " + a.data);
  const TndSample sample = load_csv(a.data, roles);
  for (const auto& f : validate(sample))
    err << (f.severity == Severity::fatal ? "fatal: " : "warning: ") << f.message << '\n';
  require_estimable(sample);

  StagedOutputs staged;
  EstimateReport report;
  switch (kind) {
    case EstimatorKind::nc:
    case EstimatorKind::nc_conditional: {
      BridgeFit fit;
      if (!a.bridge_in.empty()) {
        if (!fs::exists(a.bridge_in)) throw IoError("bridge file not found: " + a.bridge_in);
        fit = bridge_fit_from_json(nlohmann::json::parse(read_file(a.bridge_in)));
      } else {
        const auto choice = bridge_choice_from_config(doc, sample, default_bridge_form(sample));
        fit = fit_bridge_moment(sample, choice.spec, choice.moment);
      }
      if (!a.bridge_out.empty()) staged.stage(a.bridge_out, to_json(fit).dump(2) + "\n");
      if (kind == EstimatorKind::nc) {
        report = estimate_ve_nc(sample, fit, c_function_from(doc, sample).value_or(CFunctionSpec::constant_one()),
                                alpha);
      } else {
        report = estimate_ve_conditional(sample, fit, beta_model_from(doc, sample), c_function_from(doc, sample),
                                         alpha);
      }
      break;
    }
    case EstimatorKind::logistic:
      report = estimate_ve_logistic(sample, BetaModelSpec::covariates(sample).features, alpha);
      break;
    case EstimatorKind::nc_oracle:
      throw ConfigError("nc-oracle needs the true bridge and is available in simulations only");
  }

  const std::string table = format_report(report);
  out << table;
  if (!a.out.empty()) {
    const fs::path json_path = a.out;
    staged.stage(json_path, to_json(report).dump(2) + "\n");
    staged.stage(sibling(json_path, ".txt"), table);
  }
  if (!staged.paths().empty()) {
    for (const auto& p : staged.paths()) m.outputs.push_back(p.filename().string());
    m.config_hash = hex64(fnv1a64(doc.canonical()));
    m.finished_at = utc_now();
    auto mj = m.to_json();
    mj["data_hash"] = hex64(fnv1a64(read_file(a.data)));
    mj["effective_config"] = doc.canonical();
    const fs::path anchor = a.out.empty() ? fs::path(a.bridge_out) : fs::path(a.out);
    staged.stage(sibling(anchor, ".manifest.json"), mj.dump(2) + "\n");
    staged.commit();
  }
  return 0;
}

struct SimulateArgs {
  std::string config, out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads, replications;
  std::optional<std::int64_t> population_size;
  bool paper_scale = false;
  bool dump_replications = false;
};

// Flags override the file; --paper-scale overrides the file's sizes but not
// explicit --population-size / --replications.
void apply_overrides(ConfigDocument& doc, const SimulateArgs& a) {
  if (a.paper_scale) {
    doc.set("scenario.population_size", ConfigValue{std::int64_t{kFullPopulation}});
    doc.set("scenario.replications", ConfigValue{std::int64_t{kFullReplications}});
  }
  if (a.population_size) doc.set("scenario.population_size", ConfigValue{*a.population_size});
  if (a.replications) doc.set("scenario.replications", ConfigValue{std::int64_t{*a.replications}});
  if (a.seed) doc.set("scenario.seed", ConfigValue{static_cast<std::int64_t>(*a.seed)});
}

int run_scenario(ConfigDocument doc, const SimulateArgs& a, const std::string& command,
                 const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  RunManifest m;
  m.command = command;
  m.arguments = argv;
  m.started_at = utc_now();
  m.tool_version = tool_version();

  apply_overrides(doc, a);
  ScenarioConfig cfg = ScenarioConfig::from_config(doc);
  // Threads never change results, so they stay out of the hashed config.
  if (a.threads) cfg.threads = *a.threads;
  cfg.validate();
  m.seed = cfg.seed;
  const std::string canonical = doc.canonical();
  m.config_hash = hex64(fnv1a64(canonical));

  err << "running " << cfg.name << ": N=" << cfg.population_size << ", R=" << cfg.replications << ", "
      << cfg.beta_grid.size() << " beta0 values\n";
  const McSummary summary = run_monte_carlo(cfg);
  const std::string tables = panel_tables(summary);
  out << tables;

  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  StagedOutputs staged;
  staged.stage(dir / "summary.csv", summary_csv(summary));
  staged.stage(dir / "summary.json", summary_json(summary, cfg).dump(2) + "\n");
  staged.stage(dir / "tables.txt", tables);
  if (a.dump_replications) staged.stage(dir / "replications.csv", replications_csv(summary));
  for (const auto& p : staged.paths()) m.outputs.push_back(p.filename().string());
  m.finished_at = utc_now();
  auto mj = m.to_json();
  mj["effective_config"] = canonical;
  mj["threads"] = cfg.threads;
  staged.stage(dir / "manifest.json", mj.dump(2) + "\n");
  staged.commit();
  return 0;
}

ConfigDocument bundle_config(const std::string& tag) {
  ConfigDocument doc;
  if (tag == "fig2a") {
    doc.set("scenario.name", ConfigValue{std::string("fig2a")});
    doc.set("scenario.setting", ConfigValue{std::string("binary")});
  } else if (tag == "fig2b") {
    doc.set("scenario.name", ConfigValue{std::string("fig2b")});
    doc.set("scenario.setting", ConfigValue{std::string("continuous")});
  } else if (tag == "nonrare") {
    doc.set("scenario.name", ConfigValue{std::string("nonrare")});
    doc.set("scenario.setting", ConfigValue{std::string("binary-nonrare")});
  } else {
    throw ConfigError("unknown reproduce tag '" + tag + "' (expected fig2a, fig2b or nonrare)");
  }
  return doc;
}

struct GenerateArgs {
  std::string config, setting = "binary", out;
  std::int64_t population_size = kDeskPopulation;
  std::optional<double> risk_ratio;
  std::uint64_t seed = kDefaultSeed;
};

int cmd_generate(const GenerateArgs& a, std::ostream& err) {
  ConfigDocument doc;
  if (!a.config.empty()) doc = load_config(a.config);
  if (!doc.has("scenario.setting")) doc.set("scenario.setting", ConfigValue{a.setting});
  ScenarioConfig cfg = ScenarioConfig::from_config(doc);
  const double beta0 = a.risk_ratio ? std::log(*a.risk_ratio) : cfg.beta_grid.front();
  if (a.risk_ratio && !(*a.risk_ratio > 0.0)) throw ConfigError("--risk-ratio must be positive");
  TndSample sample = [&] {
    if (is_binary(cfg.setting)) {
      auto p = cfg.binary;
      p.beta0 = beta0;
      return generate_binary_sample(p, a.population_size, a.seed);
    }
    auto p = cfg.continuous;
    p.beta0 = beta0;
    return generate_continuous_sample(p, a.population_size, a.seed);
  }();
  write_file_atomic(a.out, to_csv(sample));
  err << "wrote " << sample.n() << " selected records to " << a.out << '\n';
  return 0;
}

}  // namespace

nlohmann::json RunManifest::to_json() const {
  return {{"command", command},    {"arguments", arguments},     {"config_hash", config_hash},
          {"seed", seed},          {"tool_version", tool_version}, {"started_at", started_at},
          {"finished_at", finished_at}, {"outputs", outputs}};
}

std::string tool_version() { return TNDVE_VERSION; }

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Test-negative design vaccine effectiveness with negative controls", "tndve"};
  app.set_version_flag("--version", tool_version());
  app.require_subcommand(1);

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "Fit a bridge and estimate VE on a CSV sample");
  est->add_option("--data", ea.data, "CSV file of selected subjects")->required();
  est->add_option("--config", ea.config, "Roles config; may hold [bridge] and [estimate] tables")->required();
  est->add_option("--bridge-config", ea.bridge_config, "Config whose [bridge] table overrides the roles config");
  est->add_option("--estimator", ea.estimator, "nc, nc-conditional or logistic (default nc)");
  est->add_option("--alpha", ea.alpha, "Interval level is 1 - alpha (default 0.05)");
  est->add_option("--out", ea.out, "Report JSON path; a .txt table and manifest are written beside it");
  est->add_option("--bridge-in", ea.bridge_in, "Reuse a saved bridge fit instead of fitting");
  est->add_option("--bridge-out", ea.bridge_out, "Save the bridge fit as JSON");

  SimulateArgs sa;
  auto add_run_flags = [&sa](CLI::App* c) {
    c->add_option("--out-dir", sa.out_dir, "Output directory (default .)");
    c->add_option("--seed", sa.seed, "Master seed (default 20240607)");
    c->add_option("--threads", sa.threads, "Worker threads, 0 = all cores")->check(CLI::Range(0, 1024));
    c->add_option("--replications", sa.replications, "Override R")->check(CLI::PositiveNumber);
    c->add_option("--population-size", sa.population_size, "Override N")->check(CLI::PositiveNumber);
    c->add_flag("--paper-scale", sa.paper_scale, "N = 7,000,000 and R = 1000");
    c->add_flag("--dump-replications", sa.dump_replications, "Also write replications.csv");
  };
  auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo scenario from a config file");
  sim->add_option("--config", sa.config, "Scenario config")->required();
  add_run_flags(sim);

  std::string tag;
  auto* rep = app.add_subcommand("reproduce", "Run a built-in scenario bundle: fig2a, fig2b or nonrare");
  rep->add_option("tag", tag, "Scenario bundle")->required();
  add_run_flags(rep);

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Write one simulated selected sample as CSV");
  gen->add_option("--config", ga.config, "Scenario config supplying the setting and [dgp] overrides");
  gen->add_option("--setting", ga.setting, "binary, continuous, binary-nonrare or continuous-nonrare");
  gen->add_option("--population-size", ga.population_size, "Population size N")->check(CLI::PositiveNumber);
  gen->add_option("--risk-ratio", ga.risk_ratio, "True risk ratio exp(beta0)");
  gen->add_option("--seed", ga.seed, "Seed");
  gen->add_option("--out", ga.out, "CSV path")->required();

  std::vector<std::string> argv_store{"tndve"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (*est) return cmd_estimate(ea, args, out, err);
    if (*sim) return run_scenario(load_config(sa.config), sa, "simulate", args, out, err);
    if (*rep) return run_scenario(bundle_config(tag), sa, "reproduce", args, out, err);
    if (*gen) return cmd_generate(ga, err);
  } catch (const Error& e) {
    err << "error[" << to_string(e.category()) << "]: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const nlohmann::json::exception& e) {
    err << "error[schema]: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error[io]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace tndve
