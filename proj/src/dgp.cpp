#include "tndve/dgp.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <functional>
#include <utility>
#include <vector>

#include "tndve/error.hpp"

namespace tndve {

namespace {

double expit(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void check_prob(double v, const std::string& what) {
  if (!std::isfinite(v) || v < 0.0 || v > 1.0)
    throw ConfigError("induced probability " + what + " = " + std::to_string(v) + " lies outside [0,1]");
}

// Integral over the unit square with a 20-point Gauss-Legendre rule per
// axis; integrands here are smooth (products of exp/expit terms).
double unit_square(const std::function<double(double, double)>& f) {
  using Rule = boost::math::quadrature::gauss<double, 20>;
  return Rule::integrate(
      [&f](double u) {
        return Rule::integrate([&f, u](double x) { return f(u, x); }, 0.0, 1.0);
      },
      0.0, 1.0);
}

struct BinaryField {
  const char* key;
  double BinaryDgpParams::*member;
};

constexpr BinaryField kBinaryFields[] = {
    {"p_u", &BinaryDgpParams::p_u},       {"p_0z", &BinaryDgpParams::p_0z},
    {"p_uz", &BinaryDgpParams::p_uz},     {"p_0a", &BinaryDgpParams::p_0a},
    {"p_ua", &BinaryDgpParams::p_ua},     {"eta_0y", &BinaryDgpParams::eta_0y},
    {"beta0", &BinaryDgpParams::beta0},   {"eta_uy", &BinaryDgpParams::eta_uy},
    {"p_0w", &BinaryDgpParams::p_0w},     {"p_uw", &BinaryDgpParams::p_uw},
    {"p_0d", &BinaryDgpParams::p_0d},     {"p_ud", &BinaryDgpParams::p_ud},
    {"p_ys", &BinaryDgpParams::p_ys},     {"p_uys", &BinaryDgpParams::p_uys},
};

struct ContinuousField {
  const char* key;
  double ContinuousDgpParams::*member;
};

constexpr ContinuousField kContinuousFields[] = {
    {"mu_0a", &ContinuousDgpParams::mu_0a},     {"mu_ua", &ContinuousDgpParams::mu_ua},
    {"mu_xa", &ContinuousDgpParams::mu_xa},     {"mu_0z", &ContinuousDgpParams::mu_0z},
    {"mu_az", &ContinuousDgpParams::mu_az},     {"mu_xz", &ContinuousDgpParams::mu_xz},
    {"mu_uz", &ContinuousDgpParams::mu_uz},     {"sigma_z", &ContinuousDgpParams::sigma_z},
    {"mu_0y", &ContinuousDgpParams::mu_0y},     {"beta0", &ContinuousDgpParams::beta0},
    {"mu_uy", &ContinuousDgpParams::mu_uy},     {"mu_xy", &ContinuousDgpParams::mu_xy},
    {"mu_uxy", &ContinuousDgpParams::mu_uxy},   {"mu_0w", &ContinuousDgpParams::mu_0w},
    {"mu_xw", &ContinuousDgpParams::mu_xw},     {"mu_uw", &ContinuousDgpParams::mu_uw},
    {"sigma_w", &ContinuousDgpParams::sigma_w}, {"mu_0d", &ContinuousDgpParams::mu_0d},
    {"mu_xd", &ContinuousDgpParams::mu_xd},     {"mu_ud", &ContinuousDgpParams::mu_ud},
    {"mu_0s", &ContinuousDgpParams::mu_0s},     {"mu_xs", &ContinuousDgpParams::mu_xs},
    {"mu_us", &ContinuousDgpParams::mu_us},     {"mu_uxs", &ContinuousDgpParams::mu_uxs},
};

}  // namespace

void BinaryDgpParams::validate() const {
  for (const auto& f : kBinaryFields)
    if (!std::isfinite(this->*f.member)) throw ConfigError(std::string("dgp.") + f.key + " is not finite");
  check_prob(p_u, "P(U=1)");
  for (int u = 0; u <= 1; ++u) {
    const std::string s = "(U=" + std::to_string(u) + ")";
    check_prob(prob_z(u), "P(Z=1|U)" + s);
    check_prob(prob_a(u), "P(A=1|U)" + s);
    check_prob(prob_w(u), "P(W=1|U)" + s);
    check_prob(prob_d(u), "P(D=1|U)" + s);
    check_prob(prob_s(u), "P(S=1|U,tested)" + s);
    for (int a = 0; a <= 1; ++a) check_prob(prob_y(a, u), "P(Y=1|A=" + std::to_string(a) + ",U)" + s);
  }
}

double ContinuousDgpParams::prob_a(double u, double x) const { return expit(mu_0a + mu_ua * u + mu_xa * x); }

double ContinuousDgpParams::prob_y(int a, double u, double x) const {
  const double eta = mu_0y + beta0 * a + mu_uy * u + mu_xy * x + mu_uxy * u * x;
  return y_link == YLink::exp ? std::exp(eta) : expit(eta);
}

double ContinuousDgpParams::prob_d(double u, double x) const { return expit(mu_0d + mu_xd * x + mu_ud * u); }

double ContinuousDgpParams::prob_s(double u, double x) const {
  return expit(mu_0s + mu_xs * x + mu_us * u + mu_uxs * u * x);
}

void ContinuousDgpParams::validate() const {
  for (const auto& f : kContinuousFields)
    if (!std::isfinite(this->*f.member)) throw ConfigError(std::string("dgp.") + f.key + " is not finite");
  if (!(sigma_z > 0.0)) throw ConfigError("dgp.sigma_z must be positive");
  if (!(sigma_w > 0.0)) throw ConfigError("dgp.sigma_w must be positive");
  if (y_link == YLink::exp) {
    // The log-linear predictor is affine in u and x apart from the u*x term,
    // so its maximum over the unit square sits at a corner.
    for (int a = 0; a <= 1; ++a)
      for (double u : {0.0, 1.0})
        for (double x : {0.0, 1.0})
          check_prob(prob_y(a, u, x), "P(Y=1|A=" + std::to_string(a) + ",U=" + std::to_string(u) +
                                          ",X=" + std::to_string(x) + ")");
  }
}

Setting parse_setting(std::string_view tag) {
  if (tag == "binary") return Setting::binary;
  if (tag == "continuous") return Setting::continuous;
  if (tag == "binary-nonrare") return Setting::binary_nonrare;
  if (tag == "continuous-nonrare") return Setting::continuous_nonrare;
  throw ConfigError("unknown setting '" + std::string(tag) +
                    "' (expected binary, continuous, binary-nonrare or continuous-nonrare)");
}

std::string_view to_string(Setting s) noexcept {
  switch (s) {
    case Setting::binary: return "binary";
    case Setting::continuous: return "continuous";
    case Setting::binary_nonrare: return "binary-nonrare";
    case Setting::continuous_nonrare: return "continuous-nonrare";
  }
  return "binary";
}

bool is_binary(Setting s) noexcept { return s == Setting::binary || s == Setting::binary_nonrare; }

BinaryDgpParams default_binary_params(Setting s) {
  if (!is_binary(s)) throw ConfigError("setting " + std::string(to_string(s)) + " is not a binary setting");
  BinaryDgpParams p;
  if (s == Setting::binary_nonrare) p.eta_0y = std::log(kNonRareBaselineRisk);
  return p;
}

ContinuousDgpParams default_continuous_params(Setting s) {
  if (is_binary(s)) throw ConfigError("setting " + std::string(to_string(s)) + " is not a continuous setting");
  ContinuousDgpParams p;
  if (s == Setting::continuous_nonrare) p.mu_0y = std::log(kNonRareBaselineRisk);
  return p;
}

double population_prevalence(const BinaryDgpParams& p, int a) {
  double num = 0.0, den = 0.0;
  for (int u = 0; u <= 1; ++u) {
    const double pu = u ? p.p_u : 1.0 - p.p_u;
    const double pa = a ? p.prob_a(u) : 1.0 - p.prob_a(u);
    num += pu * pa * p.prob_y(a, u);
    den += pu * pa;
  }
  if (den <= 0.0) throw DomainError("treatment arm has zero population probability");
  return num / den;
}

double population_prevalence(const ContinuousDgpParams& p, int a) {
  auto arm = [&p, a](double u, double x) { return a ? p.prob_a(u, x) : 1.0 - p.prob_a(u, x); };
  const double num = unit_square([&](double u, double x) { return arm(u, x) * p.prob_y(a, u, x); });
  const double den = unit_square(arm);
  return num / den;
}

double counterfactual_prevalence(const BinaryDgpParams& p, int a) {
  return (1.0 - p.p_u) * p.prob_y(a, 0) + p.p_u * p.prob_y(a, 1);
}

double counterfactual_prevalence(const ContinuousDgpParams& p, int a) {
  return unit_square([&p, a](double u, double x) { return p.prob_y(a, u, x); });
}

double selection_probability(const BinaryDgpParams& p) {
  double total = 0.0;
  for (int u = 0; u <= 1; ++u) {
    const double pu = u ? p.p_u : 1.0 - p.p_u;
    for (int a = 0; a <= 1; ++a) {
      const double pa = a ? p.prob_a(u) : 1.0 - p.prob_a(u);
      const double none = (1.0 - p.prob_y(a, u)) * (1.0 - p.prob_d(u)) * (1.0 - p.prob_w(u));
      total += pu * pa * (1.0 - none) * p.prob_s(u);
    }
  }
  return total;
}

double selection_probability(const ContinuousDgpParams& p) {
  return unit_square([&p](double u, double x) {
    const double pa = p.prob_a(u, x);
    const double py = pa * p.prob_y(1, u, x) + (1.0 - pa) * p.prob_y(0, u, x);
    return (1.0 - (1.0 - py) * (1.0 - p.prob_d(u, x))) * p.prob_s(u, x);
  });
}

BinaryDgpParams binary_params_from_config(const ConfigDocument& doc, BinaryDgpParams base) {
  for (const auto& key : doc.keys_in("dgp")) {
    bool known = false;
    for (const auto& f : kBinaryFields) known = known || key == f.key;
    if (!known) throw ConfigError("unknown binary DGP parameter dgp." + key);
  }
  for (const auto& f : kBinaryFields) {
    const std::string key = std::string("dgp.") + f.key;
    if (auto v = doc.get_double(key)) base.*f.member = *v;
  }
  return base;
}

ContinuousDgpParams continuous_params_from_config(const ConfigDocument& doc, ContinuousDgpParams base) {
  for (const auto& key : doc.keys_in("dgp")) {
    bool known = key == "y_link";
    for (const auto& f : kContinuousFields) known = known || key == f.key;
    if (!known) throw ConfigError("unknown continuous DGP parameter dgp." + key);
  }
  for (const auto& f : kContinuousFields) {
    const std::string key = std::string("dgp.") + f.key;
    if (auto v = doc.get_double(key)) base.*f.member = *v;
  }
  if (doc.has("dgp.y_link")) {
    const std::string link = *doc.get_string("dgp.y_link");
    if (link == "exp") base.y_link = YLink::exp;
    else if (link == "expit") base.y_link = YLink::expit;
    else throw ConfigError("dgp.y_link must be \"exp\" or \"expit\", got \"" + link + "\"");
  }
  return base;
}

}  // namespace tndve
