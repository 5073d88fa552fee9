#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <sstream>

#include "tndve/cli.hpp"
#include "tndve/textio.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = tndve::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tndve_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const std::string kConfigs = TNDVE_CONFIG_DIR;

std::string roles_file(const fs::path& dir) {
  const auto p = dir / "roles.toml";
  tndve::write_file_atomic(p, "treatment = \"A\"\noutcome = \"Y\"\nnce = [\"Z\"]\nnco = [\"W\"]\n");
  return p.string();
}

}  // namespace

TEST_CASE("generate then estimate") {
  const auto dir = scratch("estimate");
  const auto csv = (dir / "sim.csv").string();
  REQUIRE(run({"generate", "--setting", "binary", "--population-size", "500000", "--risk-ratio", "0.5", "--seed",
               "4", "--out", csv})
              .code == 0);
  const auto roles = roles_file(dir);

  const auto nc = run({"estimate", "--data", csv, "--config", roles, "--estimator", "nc", "--out",
                       (dir / "nc.json").string(), "--bridge-out", (dir / "fit.json").string()});
  REQUIRE(nc.code == 0);
  CHECK(nc.out.find("VE") != std::string::npos);
  const auto report = nlohmann::json::parse(tndve::read_file(dir / "nc.json"));
  CHECK(report.at("schema_version") == 1);
  CHECK(report.at("estimator") == "nc");
  CHECK(report.at("scale").get<std::string>().rfind("risk-ratio", 0) == 0);
  const double lo = report.at("ci").at("lower"), ve = report.at("ve_hat"), hi = report.at("ci").at("upper");
  CHECK(lo <= ve);
  CHECK(ve <= hi);
  CHECK(fs::exists(dir / "nc.txt"));
  const auto manifest = nlohmann::json::parse(tndve::read_file(dir / "nc.manifest.json"));
  CHECK(manifest.at("command") == "estimate");
  CHECK(manifest.at("config_hash").get<std::string>().size() == 16);
  CHECK(manifest.at("outputs").size() == 3);

  // A saved bridge reproduces the report.
  const auto again = run({"estimate", "--data", csv, "--config", roles, "--bridge-in", (dir / "fit.json").string(),
                          "--out", (dir / "again.json").string()});
  REQUIRE(again.code == 0);
  CHECK(nlohmann::json::parse(tndve::read_file(dir / "again.json")).at("beta_hat") == report.at("beta_hat"));

  const auto lg = run({"estimate", "--data", csv, "--config", roles, "--estimator", "logistic", "--out",
                       (dir / "lg.json").string()});
  REQUIRE(lg.code == 0);
  CHECK(nlohmann::json::parse(tndve::read_file(dir / "lg.json")).at("scale") == "odds-ratio");

  CHECK(run({"estimate", "--data", csv, "--config", roles, "--estimator", "nc-oracle"}).code == 2);
  CHECK(run({"estimate", "--data", csv, "--config", roles, "--estimator", "bogus"}).code == 2);
}

TEST_CASE("estimate error categories") {
  const auto dir = scratch("errors");
  const auto roles = roles_file(dir);
  const auto missing = run({"estimate", "--data", (dir / "absent.csv").string(), "--config", roles});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("absent.csv") != std::string::npos);

  CHECK(run({"estimate", "--config", roles}).code == 2);

  // Constant NCE: the saturated bridge is not identified.
  std::string constant_z = "A,Y,Z,W\n";
  for (int i = 0; i < 20; ++i) constant_z += "1,1,0,0\n0,1,0,1\n1,0,0,1\n0,0,0,0\n";
  tndve::write_file_atomic(dir / "constz.csv", constant_z);
  const auto id = run({"estimate", "--data", (dir / "constz.csv").string(), "--config", roles, "--out",
                       (dir / "constz.json").string(), "--bridge-out", (dir / "constz_fit.json").string()});
  CHECK(id.code == 3);
  CHECK(id.err.find("error[identifiability]") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "constz.json"));
  CHECK_FALSE(fs::exists(dir / "constz_fit.json"));

  // Every subject vaccinated.
  std::string one_arm = "A,Y,Z,W\n";
  for (int i = 0; i < 20; ++i) one_arm += "1,1,0,0\n1,0,1,1\n";
  tndve::write_file_atomic(dir / "onearm.csv", one_arm);
  CHECK(run({"estimate", "--data", (dir / "onearm.csv").string(), "--config", roles}).code == 5);

  tndve::write_file_atomic(dir / "bad.toml", "treatment = \"A\"\noutcome = \"Y\"\nnce = [\"Z\"]\nnco = [\"W\"]\n"
                                             "[estimate]\nfoo = 1\n");
  CHECK(run({"estimate", "--data", (dir / "onearm.csv").string(), "--config", (dir / "bad.toml").string()}).code == 2);
}

TEST_CASE("simulate smoke config") {
  const auto dir = scratch("smoke");
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = run({"simulate", "--config", kConfigs + "/smoke.toml", "--out-dir", (dir / "a").string()});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE(a.code == 0);
  CHECK(secs < 10.0);
  for (const char* f : {"summary.csv", "summary.json", "tables.txt", "manifest.json"}) CHECK(fs::exists(dir / "a" / f));
  const auto manifest = nlohmann::json::parse(tndve::read_file(dir / "a" / "manifest.json"));
  CHECK(manifest.at("seed") == 7);
  CHECK(manifest.at("tool_version") == tndve::tool_version());

  REQUIRE(run({"simulate", "--config", kConfigs + "/smoke.toml", "--out-dir", (dir / "b").string(), "--threads", "8"})
              .code == 0);
  CHECK(tndve::read_file(dir / "a" / "summary.csv") == tndve::read_file(dir / "b" / "summary.csv"));
  CHECK(nlohmann::json::parse(tndve::read_file(dir / "b" / "manifest.json")).at("config_hash") ==
        manifest.at("config_hash"));

  REQUIRE(run({"simulate", "--config", kConfigs + "/smoke.toml", "--out-dir", (dir / "c").string(), "--seed", "8"})
              .code == 0);
  CHECK(tndve::read_file(dir / "a" / "summary.csv") != tndve::read_file(dir / "c" / "summary.csv"));
}

TEST_CASE("shipped binary config yields four rows per estimator") {
  const auto dir = scratch("desk");
  const auto r = run({"simulate", "--config", kConfigs + "/binary-desk.toml", "--out-dir", dir.string(),
                      "--population-size", "100000", "--replications", "2", "--dump-replications"});
  REQUIRE(r.code == 0);
  const auto csv = tndve::read_file(dir / "summary.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4 * 3);
  const auto reps = tndve::read_file(dir / "replications.csv");
  CHECK(std::count(reps.begin(), reps.end(), '\n') == 1 + 4 * 3 * 2);
}

TEST_CASE("shipped configs parse") {
  for (const char* name : {"binary-desk.toml", "continuous-desk.toml", "binary-nonrare-desk.toml"}) {
    const auto dir = scratch("parse");
    CHECK(run({"simulate", "--config", kConfigs + "/" + name, "--out-dir", dir.string(), "--population-size",
               "30000", "--replications", "1"})
              .code == 0);
  }
}

TEST_CASE("simulate and reproduce errors") {
  const auto dir = scratch("simerr");
  CHECK(run({"reproduce", "fig9"}).code == 2);
  CHECK(run({"simulate", "--config", (dir / "none.toml").string()}).code == 2);
  tndve::write_file_atomic(dir / "bad.toml", "[scenario]\nsetting = \"binary\"\nreplications = -1\n");
  CHECK(run({"simulate", "--config", (dir / "bad.toml").string(), "--out-dir", (dir / "o").string()}).code == 2);
  CHECK_FALSE(fs::exists(dir / "o" / "summary.csv"));
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"--version"}).code == 0);
}

TEST_CASE("reproduce bundle at reduced size") {
  const auto dir = scratch("repro");
  const auto r = run({"reproduce", "fig2b", "--out-dir", dir.string(), "--population-size", "50000",
                      "--replications", "1"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("mean bias") != std::string::npos);
  CHECK(r.out.find("coverage") != std::string::npos);
}
