#include <doctest.h>

#include "tndve/error.hpp"
#include "tndve/features.hpp"

using namespace tndve;

namespace {

TndSample small() {
  const VariableRoles roles{"A", "Y", {"Z"}, {"W"}, {"X", "G"}, {"G"}};
  return parse_csv("A,Y,Z,W,X,G\n1,0,1,0.5,2.0,3\n0,1,0,1.5,-1.0,1\n1,1,1,2.5,0.5,2\n0,0,0,0,4.0,3\n", roles);
}

}  // namespace

TEST_CASE("term parsing") {
  CHECK(Term::parse("1").factors.empty());
  const auto t = Term::parse(" A * W ");
  REQUIRE(t.factors.size() == 2);
  CHECK(t.factors[0].column == "A");
  CHECK(t.factors[1].column == "W");
  const auto g = Term::parse("G==2*A");
  REQUIRE(g.factors.size() == 2);
  CHECK(g.factors[0].level == 2.0);
  CHECK(Term::parse(g.label()) == g);
  CHECK_THROWS_AS(Term::parse(""), ConfigError);
  CHECK_THROWS_AS(Term::parse("A**W"), ConfigError);
  CHECK_THROWS_AS(Term::parse("1*A"), ConfigError);
  CHECK_THROWS_AS(Term::parse("==2"), ConfigError);
}

TEST_CASE("design evaluation") {
  const auto s = small();
  const auto f = FeatureMap::parse({"1", "A", "W", "A*W", "G==3", "X*G==3"});
  const auto d = f.design(s);
  REQUIRE(d.rows() == 4);
  REQUIRE(d.cols() == 6);
  CHECK(d.col(0).isOnes());
  CHECK(d(0, 3) == 0.5);
  CHECK(d(1, 3) == 0.0);
  CHECK(d(2, 3) == 2.5);
  CHECK(d(0, 4) == 1.0);
  CHECK(d(1, 4) == 0.0);
  CHECK(d(3, 5) == 4.0);
  // Treatment held fixed.
  const auto d1 = f.design(s, 1);
  CHECK(d1.col(1).isOnes());
  CHECK(d1(1, 3) == 1.5);
  // Record evaluation agrees with the design.
  for (Eigen::Index i = 0; i < s.n(); ++i)
    CHECK((f.evaluate(s.record(i), s.roles()) - d.row(i).transpose()).norm() == 0.0);
  CHECK(f.references("G"));
  CHECK_FALSE(f.references("Z"));
  CHECK_THROWS_AS(f.require_columns_in({"A", "W"}, "moment"), ConfigError);
  CHECK_NOTHROW(f.require_columns_in({"A", "W", "X", "G"}, "moment"));
  CHECK_THROWS(FeatureMap::parse({"Q"}).design(s));
}

TEST_CASE("one-hot expansion uses the first level as reference") {
  const auto s = small();
  const auto cov = covariate_features(s);
  CHECK(cov.labels() == std::vector<std::string>{"1", "X", "G==2", "G==3"});
  const auto no_intercept = covariate_features(s, false);
  CHECK(no_intercept.dim() == 3);
  const auto z = expand_columns(s, {"Z"}, true);
  REQUIRE(z.size() == 1);
  CHECK(z[0].factors[0].level == 1.0);
  const auto az = times_treatment(z[0], s.roles());
  CHECK(az.factors.size() == 2);
}
