#include <doctest.h>

#include <filesystem>

#include "tndve/config.hpp"
#include "tndve/data.hpp"
#include "tndve/error.hpp"
#include "tndve/simulation.hpp"
#include "tndve/textio.hpp"

using namespace tndve;

namespace {

VariableRoles simple_roles() { return VariableRoles{"A", "Y", {"Z1"}, {"W1"}, {}, {}}; }

bool has_code(const std::vector<Finding>& f, const std::string& code, Severity sev) {
  for (const auto& x : f)
    if (x.code == code && x.severity == sev) return true;
  return false;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("tndve_test_" + name);
}

}  // namespace

TEST_CASE("config: tables, arrays and scalar types") {
  const auto doc = ConfigDocument::parse(R"(
# roles
treatment = "A"
nce = ["Z1", "Z2"]
[scenario]
replications = 20
alpha = 5e-2
flag = true
grid = [
  -1.5, 0,
]
)");
  CHECK(*doc.get_string("treatment") == "A");
  CHECK(doc.get_string_list("nce")->size() == 2);
  CHECK(*doc.get_int("scenario.replications") == 20);
  CHECK(*doc.get_double("scenario.alpha") == 0.05);
  CHECK(*doc.get_bool("scenario.flag"));
  CHECK(*doc.get_double_list("scenario.grid") == std::vector<double>{-1.5, 0.0});
  CHECK(doc.has_table("scenario"));
  CHECK_FALSE(doc.get_string("missing").has_value());
  CHECK_THROWS_AS(doc.get_int("treatment"), ConfigError);
  CHECK_THROWS_AS(ConfigDocument::parse("x = [1, 2"), ConfigError);
  CHECK_THROWS_AS(ConfigDocument::parse("x = 1\nx = 2"), ConfigError);
  CHECK_THROWS_AS(ConfigDocument::load("/nonexistent/tndve.toml"), IoError);
}

TEST_CASE("roles: invariants") {
  CHECK_NOTHROW(simple_roles().check());
  VariableRoles dup = simple_roles();
  dup.nco = {"Z1"};
  CHECK_THROWS_AS(dup.check(), ConfigError);
  VariableRoles no_nce = simple_roles();
  no_nce.nce.clear();
  CHECK_THROWS_AS(no_nce.check(), ConfigError);
  const auto doc = ConfigDocument::parse("[roles]\ntreatment=\"A\"\noutcome=\"Y\"\nnce=\"Z1\"\nnco=[\"W1\"]\n");
  CHECK(VariableRoles::from_config(doc) == simple_roles());
}

TEST_CASE("load_csv: basic parse") {
  const auto s = parse_csv("A,Y,Z1,W1\n1,0,1,0\n0,1,0,1\n", simple_roles());
  CHECK(s.n() == 2);
  CHECK(s.a()(0) == 1.0);
  CHECK(s.y()(1) == 1.0);
  CHECK(s.z()(0, 0) == 1.0);
  CHECK(s.w()(1, 0) == 1.0);
}

TEST_CASE("load_csv: errors") {
  try {
    parse_csv("A,Y,Z1\n1,0,1\n", simple_roles());
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("column W1 not found") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_csv("", simple_roles()), SchemaError);
  CHECK_THROWS_AS(parse_csv("A,Y,Z1,W1\n", simple_roles()), SchemaError);
  try {
    parse_csv("A,Y,Z1,W1\n1,0,1,0\n0,1,,1\n", simple_roles());
    FAIL("expected a row error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_csv("A,Y,Z1,W1\n1,0,abc,0\n", simple_roles()), SchemaError);
  try {
    load_csv("/nonexistent/data.csv", simple_roles());
    FAIL("expected an io error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/data.csv") != std::string::npos);
  }
}

TEST_CASE("write_csv then load_csv is the identity on simulated data") {
  const auto sample = generate_continuous_sample(ContinuousDgpParams{}, 20000, std::uint64_t{5});
  const auto path = temp_path("roundtrip.csv");
  write_csv(sample, path);
  const auto back = load_csv(path, sample.roles());
  std::filesystem::remove(path);
  REQUIRE(back.n() == sample.n());
  CHECK(back.a() == sample.a());
  CHECK(back.y() == sample.y());
  CHECK(back.z() == sample.z());
  CHECK(back.w() == sample.w());
  CHECK(back.x() == sample.x());

  const auto bin = generate_binary_sample(BinaryDgpParams{}, 20000, std::uint64_t{6});
  const auto text = to_csv(bin);
  CHECK(text.substr(0, 8) == "A,Y,Z,W\n");
  const auto bin_back = parse_csv(text, bin.roles());
  CHECK(bin_back.z() == bin.z());
}

TEST_CASE("validate: findings") {
  SUBCASE("all vaccinated") {
    const auto s = parse_csv("A,Y,Z1,W1\n1,0,1,0\n1,1,0,1\n", simple_roles());
    const auto f = validate(s);
    CHECK(has_code(f, "no-unvaccinated", Severity::fatal));
    bool message = false;
    for (const auto& x : f) message = message || x.message == "no unvaccinated subjects";
    CHECK(message);
    CHECK(has_fatal(f));
    CHECK_THROWS_AS(require_estimable(s), DegenerateDataError);
  }
  SUBCASE("constant NCE") {
    const auto s = parse_csv("A,Y,Z1,W1\n1,0,1,0\n0,1,1,1\n1,1,1,0\n0,0,1,1\n", simple_roles());
    const auto f = validate(s);
    CHECK(has_code(f, "constant-nce", Severity::warning));
    bool message = false;
    for (const auto& x : f) message = message || x.message.find("NCE has no variation") != std::string::npos;
    CHECK(message);
  }
  SUBCASE("non-binary treatment") {
    Eigen::VectorXd a(2), y(2);
    a << 2, 0;
    y << 0, 1;
    const TndSample s(simple_roles(), a, y, Eigen::MatrixXd::Ones(2, 1), Eigen::MatrixXd::Zero(2, 1),
                      Eigen::MatrixXd(2, 0));
    CHECK(has_code(validate(s), "non-binary-treatment", Severity::fatal));
    CHECK_THROWS_AS(parse_csv("A,Y,Z1,W1\n2,0,1,0\n0,1,0,1\n", simple_roles()), SchemaError);
  }
  SUBCASE("binary simulation output has no fatal finding and no case-fraction warning") {
    const auto s = generate_binary_sample(BinaryDgpParams{}, kDeskPopulation, std::uint64_t{1});
    const auto f = validate(s);
    CHECK_FALSE(has_fatal(f));
    CHECK_FALSE(has_code(f, "case-fraction", Severity::warning));
    CHECK(validate(s) == f);
  }
}

TEST_CASE("textio: shortest round-trip formatting") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(3.0) == "3");
  const double v = 1.0 / 3.0;
  CHECK(std::stod(format_double(v)) == v);
}
