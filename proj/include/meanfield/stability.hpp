#pragma once

#include <json.hpp>
#include <string>

#include "meanfield/model.hpp"

namespace meanfield {

enum class LogFactor { None, Log, LogSquared };
std::string to_string(LogFactor f);

// Predicted decay N^{-exponent} (log N)^{log power} of the particle error.
struct RateExponent {
  double printed = 0.0;      // exponent exactly as the theorem's table prints it
  double min_reading = 0.0;  // slower of the two competing terms
  LogFactor log_factor = LogFactor::None;
  std::string regime;
};

RateExponent rate_exponent(int d, double tau);

// Smallest theta with c1 / theta + c2 / theta^2 <= 1.
double contraction_rate(double c1, double c2);

struct IidConstants {
  double C1 = 0.0;
  double chi1 = 0.0;        // as displayed
  double chi1_proof = 0.0;  // without the leading delta K on the max term
};

// Coupling constants from explicit ingredients.
IidConstants iid_constants(double a_norm, double delta, double K, double alpha, double l_grad_P, double l_grad_Pp,
                           double l_P, double l_Pp);
// Throws ConstantsUnavailable when K is infinite.
IidConstants iid_constants(const ModelParams& p, double K);

struct StabilityReport {
  double tau = 1.0;
  double a_norm = 0.0;
  double delta = 0.0;
  double alpha = 0.0;

  double sigma = 0.0;       // E A1
  double sigma1_tau = 0.0;  // E A1^{1+tau}
  double sigma2_tau = 0.0;  // E (A2 + |B|)^{1+tau}
  std::string sigma_method = "closed_form";
  double sigma2_se = 0.0;
  double mean_a2 = 0.0;     // E A2
  double mean_abs_b = 0.0;  // E |B|

  double l_grad_P = 0.0;
  double l_grad_Pp = 0.0;
  double l_grad_alpha = 0.0;
  double l_P = 1.0;
  double l_Pp = 1.0;
  double l_PPp = 1.0;
  // Gradient offset: |grad eta_n(y)| <= l_grad_alpha |y| + c_alpha.
  double c_alpha = 0.0;
  double m_tau_P = 1.0;

  double a0 = 0.0;
  double a_tau = 0.0;
  double gamma = 0.0;  // ||A|| + delta sigma (2 + l_grad_alpha)
  double c1 = 0.0;
  double c2 = 0.0;
  double theta_star = 0.0;

  bool cond_contraction = false;
  bool cond_delta_a0 = false;
  bool cond_delta_atau = false;
  bool cond_moment_tau = false;

  double alpha_star = 0.0;
  double K_bound = 0.0;  // infinite when A1 is unbounded
  double C1 = 0.0;
  double chi1 = 0.0;
  double chi1_proof = 0.0;
  bool iid_available = false;

  RateExponent rate;

  nlohmann::json to_json() const;
};

StabilityReport compute_constants(const ModelParams& p, double tau);

// Lemma ceiling on sup_n E|X_n| given E|X_0|; infinite when gamma >= 1.
double particle_moment_ceiling(const StabilityReport& r, double x0_moment);
// Ceiling on <|x|, eta_{k+1}> given sup_n <|x|, mu_n> and <|x|, eta_0>.
// Gaussian P and P' only; NaN otherwise.
double field_moment_ceiling(const ModelParams& p, const StabilityReport& r, double mu_sup, double eta0_moment, long k);

}  // namespace meanfield
