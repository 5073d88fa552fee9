#pragma once

// Generative models for simulated test-negative studies: a binary and a
// continuous unmeasured-confounder population, plus analytic population
// quantities (prevalence, expected selected-sample size).

#include <cmath>
#include <string>
#include <string_view>

#include "tndve/config.hpp"

namespace tndve {

/// Binary confounder U. Probabilities are linear in U; the infection risk is
/// log-linear: P(Y=1|A,U) = exp(eta_0y + beta0*A + eta_uy*U).
struct BinaryDgpParams {
  double p_u = 0.5;
  double p_0z = 0.2;
  double p_uz = 0.4;
  double p_0a = 0.2;
  double p_ua = 0.4;
  double eta_0y = std::log(0.01);
  double beta0 = std::log(0.5);
  double eta_uy = std::log(0.5);
  double p_0w = 0.02;
  double p_uw = 0.02;
  double p_0d = 0.02;
  double p_ud = -0.015;
  double p_ys = 0.1;
  double p_uys = 0.4;

  double prob_z(int u) const { return p_0z + p_uz * u; }
  double prob_a(int u) const { return p_0a + p_ua * u; }
  double prob_y(int a, int u) const { return std::exp(eta_0y + beta0 * a + eta_uy * u); }
  double prob_w(int u) const { return p_0w + p_uw * u; }
  double prob_d(int u) const { return p_0d + p_ud * u; }
  double prob_s(int u) const { return p_ys + p_uys * u; }

  /// Throws ConfigError naming the first probability outside [0,1], checked
  /// over every (U, A) combination.
  void validate() const;

  bool operator==(const BinaryDgpParams&) const = default;
};

enum class YLink { exp, expit };

/// Continuous confounder U ~ U(0,1) with one covariate X ~ U(0,1).
struct ContinuousDgpParams {
  double mu_0a = -1.0;
  double mu_ua = -1.0;
  double mu_xa = 0.25;
  double mu_0z = 0.0;
  double mu_az = 0.25;
  double mu_xz = 0.25;
  double mu_uz = 4.0;
  double sigma_z = 0.25;
  double mu_0y = std::log(0.01);
  double beta0 = std::log(0.5);
  double mu_uy = -2.0;
  double mu_xy = -0.25;
  double mu_uxy = 0.0;
  double mu_0w = 0.0;
  double mu_xw = 0.25;
  double mu_uw = 2.0;
  double sigma_w = 0.25;
  double mu_0d = std::log(0.01);
  double mu_xd = 0.25;
  double mu_ud = -0.2;
  double mu_0s = -1.4;
  double mu_xs = 0.5;
  double mu_us = 2.0;
  double mu_uxs = 1.0;
  YLink y_link = YLink::exp;

  double prob_a(double u, double x) const;
  double prob_y(int a, double u, double x) const;
  double prob_d(double u, double x) const;
  double prob_s(double u, double x) const;

  /// Throws ConfigError if a standard deviation is not positive, a parameter
  /// is not finite, or the infection risk exceeds 1 somewhere on [0,1]^2.
  void validate() const;

  bool operator==(const ContinuousDgpParams&) const = default;
};

enum class Setting { binary, continuous, binary_nonrare, continuous_nonrare };

Setting parse_setting(std::string_view tag);
std::string_view to_string(Setting s) noexcept;
bool is_binary(Setting s) noexcept;

BinaryDgpParams default_binary_params(Setting s = Setting::binary);
ContinuousDgpParams default_continuous_params(Setting s = Setting::continuous);

inline constexpr double kNonRareBaselineRisk = 0.20;

/// Population infection prevalence P(Y=1 | A=a).
double population_prevalence(const BinaryDgpParams& p, int a);
double population_prevalence(const ContinuousDgpParams& p, int a);

/// Infection risk if everyone had A = a, E_U[P(Y=1 | A=a, U)].
double counterfactual_prevalence(const BinaryDgpParams& p, int a);
double counterfactual_prevalence(const ContinuousDgpParams& p, int a);

/// Probability that a population member is selected into the study.
double selection_probability(const BinaryDgpParams& p);
double selection_probability(const ContinuousDgpParams& p);

/// Reads overrides for any parameter from `[dgp]` keys (e.g. dgp.p_uz,
/// dgp.mu_uxy, dgp.y_link = "expit") on top of `base`.
BinaryDgpParams binary_params_from_config(const ConfigDocument& doc, BinaryDgpParams base);
ContinuousDgpParams continuous_params_from_config(const ConfigDocument& doc, ContinuousDgpParams base);

}  // namespace tndve
