#include "meanfield/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "meanfield/errors.hpp"
#include "meanfield/kernels.hpp"
#include "meanfield/numerics.hpp"
#include "meanfield/rng.hpp"

namespace meanfield {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kMonteCarloSamples = 10'000'000;

double chi_pdf(int m, double s) {
  if (s <= 0.0) return 0.0;
  return std::exp(-(0.5 * m - 1.0) * std::log(2.0) - std::lgamma(0.5 * m) + (m - 1) * std::log(s) - 0.5 * s * s);
}

double drift_scale(const ModelParams& p) {
  return std::max({std::abs(p.drift.a1), std::abs(p.drift.a2), std::abs(p.drift.a3)});
}

double extra_lip(const ModelParams& p) {
  return p.drift.variant == DriftVariant::InteractionKernel ? p.drift.l_K : 0.0;
}

// E g(|L0 + sL Z|).
double expect_abs_l(const ModelParams& p, const std::function<double(double)>& g) {
  const double L0 = p.noise.L0, sL = p.noise.sL;
  if (sL == 0.0) return g(std::abs(L0));
  double kink = -L0 / sL;
  return gauss_expectation([&](double z) { return g(std::abs(L0 + sL * z)); }, std::span(&kink, 1), 1e-11);
}

struct Sigma2 {
  double value = 0.0;
  double se = 0.0;
  double mean_a2 = 0.0;
  bool monte_carlo = false;
};

Sigma2 sigma2(const ModelParams& p, double tau) {
  const double q = 1.0 + tau;
  const int d = p.dim;
  const double b = std::abs(p.noise.b), c0 = p.noise.c0, sc = std::abs(p.noise.sc);
  Sigma2 out;
  if (d == 1) {
    out.mean_a2 = folded_normal_mean(c0, sc);
    auto inner = [&](double a2) {
      if (b == 0.0) return std::pow(a2, q);
      double zero = 0.0;
      return gauss_expectation([&](double z) { return std::pow(a2 + b * std::abs(z), q); }, std::span(&zero, 1),
                               1e-11);
    };
    if (sc == 0.0) {
      out.value = inner(std::abs(c0));
    } else {
      double kink = -c0 / sc;
      out.value = gauss_expectation([&](double z) { return inner(std::abs(c0 + sc * z)); }, std::span(&kink, 1),
                                    1e-10);
    }
    return out;
  }
  if (sc == 0.0) {
    const double a2 = std::abs(c0) * std::sqrt(double(d));
    out.mean_a2 = a2;
    if (b == 0.0) {
      out.value = std::pow(a2, q);
    } else {
      out.value = integrate([&](double s) { return std::pow(a2 + b * s, q) * chi_pdf(d, s); }, 0.0,
                            std::sqrt(double(d)) + 14.0, 1e-11);
    }
    return out;
  }
  // |c| has a noncentral chi law and |B| an independent chi law.
  out.monte_carlo = true;
  Rng rng = substream(0x5eed5eedULL, StreamTag::kMonteCarlo, 0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double s = 0.0, ss = 0.0, sa = 0.0;
  for (std::size_t i = 0; i < kMonteCarloSamples; ++i) {
    double c2 = 0.0, b2 = 0.0;
    for (int k = 0; k < d; ++k) {
      double c = c0 + sc * gauss(rng);
      double e = gauss(rng);
      c2 += c * c;
      b2 += e * e;
    }
    double a2 = std::sqrt(c2);
    double v = std::pow(a2 + b * std::sqrt(b2), q);
    s += v;
    ss += v * v;
    sa += a2;
  }
  const double n = double(kMonteCarloSamples);
  out.value = s / n;
  out.se = std::sqrt(std::max(0.0, ss / n - out.value * out.value) / (n - 1.0));
  out.mean_a2 = sa / n;
  return out;
}

}  // namespace

std::string to_string(LogFactor f) {
  switch (f) {
    case LogFactor::None: return "none";
    case LogFactor::Log: return "log";
    case LogFactor::LogSquared: return "log^2";
  }
  return "none";
}

RateExponent rate_exponent(int d, double tau) {
  if (d < 1 || !(tau > 0.0)) throw InputError("rate_exponent requires d >= 1 and tau > 0");
  const double t = tau / (1.0 + tau);
  RateExponent r;
  if (d == 1) {
    if (tau == 1.0) {
      r.printed = r.min_reading = 0.5;
      r.log_factor = LogFactor::Log;
      r.regime = "d=1,tau=1";
    } else {
      r.printed = std::max(0.5, t);
      r.min_reading = std::min(0.5, t);
      r.regime = "d=1,tau!=1";
    }
  } else if (d == 2) {
    if (tau == 1.0) {
      r.printed = r.min_reading = 0.5;
      r.log_factor = LogFactor::LogSquared;
      r.regime = "d=2,tau=1";
    } else {
      // N^{-1/2} log N + N^{-tau/(1+tau)}: the slower term dominates.
      r.printed = r.min_reading = std::min(0.5, t);
      r.log_factor = tau > 1.0 ? LogFactor::Log : LogFactor::None;
      r.regime = "d=2,tau!=1";
    }
  } else {
    const double inv_d = 1.0 / d;
    if (std::abs(tau - 1.0 / (d - 1)) < 1e-12) {
      r.printed = r.min_reading = inv_d;
      r.log_factor = LogFactor::Log;
      r.regime = "d>2,tau=1/(d-1)";
    } else {
      r.printed = std::max(inv_d, t);
      r.min_reading = std::min(inv_d, t);
      r.regime = "d>2,tau!=1/(d-1)";
    }
  }
  return r;
}

double contraction_rate(double c1, double c2) { return 0.5 * (c1 + std::sqrt(c1 * c1 + 4.0 * c2)); }

IidConstants iid_constants(double a_norm, double delta, double K, double alpha, double l_grad_P, double l_grad_Pp,
                           double l_P, double l_Pp) {
  (void)l_Pp;
  IidConstants out;
  if (delta == 0.0) return out;
  const double lga = (1.0 - alpha) * l_grad_P + alpha * l_grad_Pp;
  const double chi = a_norm + delta * K * (1.0 + lga);
  const double c4 = std::max(1.0, (1.0 - alpha) * l_grad_P * alpha * l_Pp);
  const double c5 = std::max(alpha * l_grad_Pp, (1.0 - alpha) * l_P);
  const double top = std::max(chi, c5);
  const double gap = std::abs(chi - c5);
  out.C1 = gap == 0.0 ? kInf : delta * K * c4 * top / gap;
  out.chi1 = delta * K * top + out.C1;
  out.chi1_proof = top + out.C1;
  return out;
}

IidConstants iid_constants(const ModelParams& p, double K) {
  if (!std::isfinite(K)) throw ConstantsUnavailable("A1 is unbounded (sL > 0); coupling constants need a finite K");
  KernelConstants kp = compute_constants(p.P), kpp = compute_constants(p.Pp);
  return iid_constants(p.a_norm(), p.delta, K, p.alpha, kp.lip_grad, kpp.lip_grad, kp.lip_pushforward,
                       kpp.lip_pushforward);
}

StabilityReport compute_constants(const ModelParams& p, double tau) {
  if (!(tau > 0.0)) throw InputError("tau must be > 0");
  p.validate();
  StabilityReport r;
  r.tau = tau;
  r.a_norm = p.a_norm();
  r.delta = p.delta;
  r.alpha = p.alpha;
  const double q = 1.0 + tau;
  const double amax = drift_scale(p), lk = extra_lip(p);

  r.sigma = amax * folded_normal_mean(p.noise.L0, p.noise.sL) + lk;
  r.sigma1_tau = expect_abs_l(p, [&](double l) { return std::pow(l * amax + lk, q); });
  Sigma2 s2 = sigma2(p, tau);
  r.sigma2_tau = s2.value;
  r.sigma2_se = s2.se;
  r.sigma_method = s2.monte_carlo ? "monte_carlo" : "closed_form";
  r.mean_a2 = s2.mean_a2;
  r.mean_abs_b = std::abs(p.noise.b) * chi_mean(p.dim);

  KernelConstants kp = compute_constants(p.P), kpp = compute_constants(p.Pp);
  r.l_grad_P = kp.lip_grad;
  r.l_grad_Pp = kpp.lip_grad;
  r.l_grad_alpha = (1.0 - p.alpha) * kp.lip_grad + p.alpha * kpp.lip_grad;
  r.l_P = kp.lip_pushforward;
  r.l_Pp = kpp.lip_pushforward;
  r.l_PPp = std::max(r.l_P, r.l_Pp);
  r.c_alpha = (1.0 - p.alpha) * kp.grad_at_zero + p.alpha * kpp.grad_at_zero;
  r.m_tau_P = moment_1ptau(p.P, tau);

  r.a0 = r.sigma > 0.0 ? (1.0 - r.a_norm) / (r.sigma * (2.0 + r.l_grad_alpha)) : kInf;
  const double den = r.sigma1_tau * (1.0 + std::pow(1.0 + r.l_grad_alpha, q));
  r.a_tau = den > 0.0 ? (std::pow(4.0, -tau) - std::pow(r.a_norm, q)) / den : kInf;
  r.gamma = r.a_norm + p.delta * r.sigma * (2.0 + r.l_grad_alpha);
  r.c1 = std::max(r.gamma + p.alpha * r.l_Pp, (1.0 - p.alpha) * r.l_P);
  r.c2 = p.delta * r.sigma * std::max(p.alpha * r.l_grad_Pp, (1.0 - p.alpha) * r.l_grad_P);
  r.theta_star = contraction_rate(r.c1, r.c2);

  r.cond_contraction = r.c1 + r.c2 < 1.0;
  r.cond_delta_a0 = p.delta < r.a0;
  r.cond_delta_atau = r.a_tau > 0.0 && p.delta < std::pow(r.a_tau, 1.0 / q);
  r.cond_moment_tau = (1.0 - p.alpha) * r.m_tau_P < 1.0;

  r.alpha_star = kp.exp_moment.alpha_star(p.alpha);
  r.K_bound = p.noise.sL == 0.0 ? std::abs(p.noise.L0) * amax + lk : kInf;
  r.iid_available = std::isfinite(r.K_bound);
  if (r.iid_available) {
    IidConstants c = iid_constants(p, r.K_bound);
    r.C1 = c.C1;
    r.chi1 = c.chi1;
    r.chi1_proof = c.chi1_proof;
  } else {
    r.C1 = r.chi1 = r.chi1_proof = kInf;
  }
  r.rate = rate_exponent(p.dim, tau);
  return r;
}

double particle_moment_ceiling(const StabilityReport& r, double x0_moment) {
  if (!(r.gamma < 1.0)) return kInf;
  const double drive = r.delta * r.sigma * r.c_alpha + r.delta * r.mean_a2 + r.mean_abs_b;
  return x0_moment + drive / (1.0 - r.gamma);
}

double field_moment_ceiling(const ModelParams& p, const StabilityReport& r, double mu_sup, double eta0_moment,
                            long k) {
  if (p.P.family != KernelFamily::Gaussian || p.Pp.family != KernelFamily::Gaussian)
    return std::numeric_limits<double>::quiet_NaN();
  const double a = p.alpha, lp = p.P.bandwidth, lpp = p.Pp.bandwidth;
  const double rho = (1.0 - a) * r.l_P;
  const double cm = chi_mean(p.dim);
  double geo = 0.0, kern = 0.0, pw = 1.0, dec = 1.0;
  for (long i = 0; i <= k; ++i) {
    geo += pw;
    kern += dec * cm * std::sqrt(lpp * lpp + double(i) * lp * lp);
    pw *= rho;
    dec *= 1.0 - a;
  }
  // pw now holds rho^{k+1}.
  return a * r.l_Pp * mu_sup * geo + a * kern + pw * eta0_moment;
}

nlohmann::json StabilityReport::to_json() const {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
  };
  nlohmann::json j;
  j["tau"] = tau;
  j["a_norm"] = a_norm;
  j["delta"] = delta;
  j["alpha"] = alpha;
  j["sigma"] = num(sigma);
  j["sigma1_tau"] = num(sigma1_tau);
  j["sigma2_tau"] = num(sigma2_tau);
  j["sigma_method"] = sigma_method;
  j["sigma2_se"] = sigma2_se;
  j["mean_a2"] = num(mean_a2);
  j["mean_abs_b"] = num(mean_abs_b);
  j["l_grad_P"] = num(l_grad_P);
  j["l_grad_Pp"] = num(l_grad_Pp);
  j["l_grad_alpha"] = num(l_grad_alpha);
  j["l_P"] = l_P;
  j["l_Pp"] = l_Pp;
  j["l_PPp"] = l_PPp;
  j["c_alpha"] = num(c_alpha);
  j["m_tau_P"] = num(m_tau_P);
  j["a0"] = num(a0);
  j["a_tau"] = num(a_tau);
  j["gamma"] = num(gamma);
  j["c1"] = num(c1);
  j["c2"] = num(c2);
  j["theta_star"] = num(theta_star);
  j["cond_contraction"] = cond_contraction;
  j["cond_delta_a0"] = cond_delta_a0;
  j["cond_delta_atau"] = cond_delta_atau;
  j["cond_moment_tau"] = cond_moment_tau;
  j["alpha_star"] = num(alpha_star);
  j["K_bound"] = num(K_bound);
  j["C1"] = num(C1);
  j["chi1"] = num(chi1);
  j["chi1_proof"] = num(chi1_proof);
  j["iid_available"] = iid_available;
  j["rate_exponent"] = {{"printed", rate.printed},
                        {"min_reading", rate.min_reading},
                        {"log_factor", to_string(rate.log_factor)},
                        {"regime", rate.regime}};
  return j;
}

}  // namespace meanfield
