#include "meanfield/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "meanfield/errors.hpp"
#include "meanfield/numerics.hpp"

namespace meanfield {

std::string to_string(KernelFamily f) {
  return f == KernelFamily::Gaussian ? "gaussian" : "biexponential";
}

KernelFamily family_from_string(const std::string& s) {
  if (s == "gaussian") return KernelFamily::Gaussian;
  if (s == "biexponential") return KernelFamily::BiExponential;
  throw InputError("unknown kernel family '" + s + "'");
}

KernelSpec KernelSpec::gaussian(double bandwidth, int dim) {
  KernelSpec k{KernelFamily::Gaussian, bandwidth, dim};
  k.validate();
  return k;
}

KernelSpec KernelSpec::biexponential(double bandwidth) {
  KernelSpec k{KernelFamily::BiExponential, bandwidth, 1};
  k.validate();
  return k;
}

void KernelSpec::validate() const {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw InputError("kernel bandwidth must be > 0");
  if (dim < 1) throw InputError("kernel dim must be >= 1");
  if (family == KernelFamily::BiExponential && dim != 1)
    throw InputError("bi-exponential kernel is only defined for d = 1");
}

namespace {

void check_dims(const KernelSpec& k, std::size_t a, std::size_t b) {
  if (a != static_cast<std::size_t>(k.dim) || b != static_cast<std::size_t>(k.dim))
    throw InputError("point dimension does not match kernel dim " + std::to_string(k.dim));
}

double gaussian_norm(double lambda, int d) { return std::pow(2.0 * std::numbers::pi * lambda * lambda, -0.5 * d); }

}  // namespace

double density(const KernelSpec& k, std::span<const double> x, std::span<const double> y) {
  check_dims(k, x.size(), y.size());
  const double lam = k.bandwidth;
  if (k.family == KernelFamily::BiExponential) return std::exp(-std::abs(y[0] - x[0]) / lam) / (2.0 * lam);
  double r2 = 0.0;
  for (int i = 0; i < k.dim; ++i) r2 += (y[i] - x[i]) * (y[i] - x[i]);
  return gaussian_norm(lam, k.dim) * std::exp(-0.5 * r2 / (lam * lam));
}

void grad_density(const KernelSpec& k, std::span<const double> x, std::span<const double> y, std::span<double> out) {
  check_dims(k, x.size(), y.size());
  if (out.size() != static_cast<std::size_t>(k.dim)) throw InputError("gradient output has wrong dimension");
  const double lam = k.bandwidth;
  if (k.family == KernelFamily::BiExponential) {
    double u = y[0] - x[0];
    if (u == 0.0) {
      out[0] = 0.0;
      return;
    }
    double s = u > 0.0 ? -1.0 : 1.0;
    out[0] = s * std::exp(-std::abs(u) / lam) / (2.0 * lam * lam);
    return;
  }
  double p = density(k, x, y);
  for (int i = 0; i < k.dim; ++i) out[i] = -(y[i] - x[i]) / (lam * lam) * p;
}

void sample(const KernelSpec& k, std::span<const double> x, Rng& rng, std::span<double> out) {
  if (x.size() != static_cast<std::size_t>(k.dim) || out.size() != x.size())
    throw InputError("sample: dimension mismatch");
  if (k.family == KernelFamily::BiExponential) {
    std::exponential_distribution<double> expo(1.0);
    double e = expo(rng);
    double s = (rng() >> 63) ? 1.0 : -1.0;
    out[0] = x[0] + s * k.bandwidth * e;
    return;
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < k.dim; ++i) out[i] = x[i] + k.bandwidth * gauss(rng);
}

double ExpMomentParams::h2(double alpha1) const {
  if (family == KernelFamily::Gaussian) return 0.5 * bandwidth * bandwidth * alpha1 * alpha1;
  if (alpha1 * bandwidth >= 1.0) return std::numeric_limits<double>::infinity();
  return -std::log1p(-alpha1 * bandwidth);
}

double ExpMomentParams::h3(double) const { return 0.0; }

double ExpMomentParams::alpha_star(double alpha) const {
  double rhs = -std::log1p(-alpha);
  if (family == KernelFamily::Gaussian) return std::sqrt(2.0 * rhs) / bandwidth;
  return (1.0 - std::exp(-rhs)) / bandwidth;
}

KernelConstants compute_constants(const KernelSpec& k) {
  k.validate();
  KernelConstants c;
  const double lam = k.bandwidth;
  c.lip_pushforward = 1.0;
  c.exp_moment.family = k.family;
  c.exp_moment.bandwidth = lam;
  c.exp_moment.h1_slope = 1.0;
  c.exp_moment.h1_at_zero = 0.0;
  if (k.family == KernelFamily::Gaussian) {
    double norm = gaussian_norm(lam, k.dim);
    // Hessian of the density has operator norm at most p(0)/lambda^2, attained at the mode.
    c.lip_grad = norm / (lam * lam);
    c.grad_growth = norm * std::exp(-0.5) / lam;
    c.grad_at_zero = c.grad_growth;
    c.exp_moment.alpha1_max = std::numeric_limits<double>::infinity();
  } else {
    c.lip_grad = 1.0 / (2.0 * lam * lam * lam);
    c.grad_growth = 1.0 / (2.0 * lam * lam);
    c.grad_at_zero = c.grad_growth;
    c.grad_kink = true;
    c.exp_moment.alpha1_max = 1.0 / lam;
  }
  return c;
}

double exp_moment(const KernelSpec& k, double x, double alpha1) {
  if (k.dim != 1) throw InputError("exp_moment requires d = 1");
  if (alpha1 < 0.0) throw InputError("exp_moment requires alpha1 >= 0");
  const double lam = k.bandwidth;
  if (k.family == KernelFamily::Gaussian) {
    double a = alpha1;
    return std::exp(0.5 * a * a * lam * lam) *
           (std::exp(a * x) * normal_cdf(a * lam + x / lam) + std::exp(-a * x) * normal_cdf(a * lam - x / lam));
  }
  if (alpha1 * lam >= 1.0) throw DivergenceError("bi-exponential exp moment diverges for alpha1 * lambda >= 1");
  double b = 1.0 / lam, a = alpha1, ax = std::abs(x);
  double i1 = 0.5 * b * std::exp(a * ax) / (b - a);
  double i2 = 0.5 * b * std::exp(a * ax) * (-std::expm1(-(b + a) * ax)) / (b + a);
  double i3 = 0.5 * b * std::exp(-b * ax) / (b - a);
  return i1 + i2 + i3;
}

double abs_moment_1ptau(const KernelSpec& k, double r, double tau) {
  const double p = 1.0 + tau;
  const double lam = k.bandwidth;
  if (k.family == KernelFamily::BiExponential) {
    auto f = [&](double l) { return std::pow(std::abs(r + l), p) * std::exp(-std::abs(l) / lam) / (2.0 * lam); };
    double inf = std::numeric_limits<double>::infinity();
    double lo = std::min(-r, 0.0), hi = std::max(-r, 0.0);
    return integrate(f, -inf, lo, 1e-11) + integrate(f, lo, hi, 1e-11) + integrate(f, hi, inf, 1e-11);
  }
  if (k.dim == 1) {
    double kink = -r / lam;
    return gauss_expectation([&](double z) { return std::pow(std::abs(r + lam * z), p); }, std::span(&kink, 1),
                             1e-11);
  }
  // |r e1 + lam Z|^2 = (r + lam Z1)^2 + lam^2 R^2 with R^2 ~ chi^2_{d-1}.
  const int m = k.dim - 1;
  const double log_norm = -(0.5 * m - 1.0) * std::log(2.0) - std::lgamma(0.5 * m);
  auto chi_pdf = [&](double s) { return s <= 0.0 ? 0.0 : std::exp(log_norm + (m - 1) * std::log(s) - 0.5 * s * s); };
  return gauss_expectation(
      [&](double z) {
        double a = (r + lam * z) * (r + lam * z);
        return integrate([&](double s) { return std::pow(a + lam * lam * s * s, 0.5 * p) * chi_pdf(s); }, 0.0,
                         std::sqrt(double(m)) + 12.0, 1e-10);
      },
      {}, 1e-9);
}

double moment_1ptau(const KernelSpec& k, double tau) {
  if (!(tau > 0.0)) throw InputError("tau must be > 0");
  const double p = 1.0 + tau;
  double best = 1.0;
  const int n = 121;
  for (int i = 0; i < n; ++i) {
    double r = i == 0 ? 0.0 : k.bandwidth * std::pow(10.0, -3.0 + 6.0 * (i - 1) / (n - 2));
    best = std::max(best, abs_moment_1ptau(k, r, tau) / (1.0 + std::pow(r, p)));
  }
  return best;
}

Kernel::Kernel(KernelSpec spec) : spec_(spec), constants_(compute_constants(spec)) {}

}  // namespace meanfield
