#include "meanfield/numerics.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <limits>
#include <stdexcept>

namespace meanfield {

double normal_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

double folded_normal_mean(double m, double s) {
  if (s <= 0.0) return std::abs(m);
  double z = m / s;
  return 2.0 * s * normal_pdf(z) + m * (1.0 - 2.0 * normal_cdf(-z));
}

double abs_normal_moment(double p) {
  return std::pow(2.0, p / 2.0) * boost::math::tgamma((p + 1.0) / 2.0) / std::sqrt(std::numbers::pi);
}

double chi_mean(int d) {
  return std::numbers::sqrt2 * std::exp(boost::math::lgamma((d + 1) / 2.0) - boost::math::lgamma(d / 2.0));
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  using boost::math::quadrature::gauss_kronrod;
  if (a == b) return 0.0;
  return gauss_kronrod<double, 61>::integrate(f, a, b, 15, tol);
}

double gauss_expectation(const std::function<double(double)>& f, std::span<const double> kinks, double tol) {
  std::vector<double> cuts(kinks.begin(), kinks.end());
  std::sort(cuts.begin(), cuts.end());
  auto g = [&](double z) {
    const double w = normal_pdf(z);
    return w == 0.0 ? 0.0 : f(z) * w;
  };
  double total = 0.0;
  double lo = -std::numeric_limits<double>::infinity();
  for (double c : cuts) {
    if (!std::isfinite(c)) continue;
    total += integrate(g, lo, c, tol);
    lo = c;
  }
  total += integrate(g, lo, std::numeric_limits<double>::infinity(), tol);
  return total;
}

MeanSe mean_se(std::span<const double> xs) {
  MeanSe r;
  r.n = xs.size();
  if (xs.empty()) return r;
  double s = 0.0;
  for (double x : xs) s += x;
  r.mean = s / xs.size();
  if (xs.size() < 2) return r;
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  r.se = std::sqrt(ss / (xs.size() - 1) / xs.size());
  return r;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y, std::span<const double> w) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 2 || (!w.empty() && w.size() != n)) throw std::invalid_argument("fit_line: bad sizes");
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double wi = w.empty() ? 1.0 : w[i];
    sw += wi;
    sx += wi * x[i];
    sy += wi * y[i];
  }
  double mx = sx / sw, my = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double wi = w.empty() ? 1.0 : w[i];
    sxx += wi * (x[i] - mx) * (x[i] - mx);
    sxy += wi * (x[i] - mx) * (y[i] - my);
  }
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (n > 2) {
    double rss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double wi = w.empty() ? 1.0 : w[i];
      double r = y[i] - fit.intercept - fit.slope * x[i];
      rss += wi * r * r;
    }
    fit.slope_se = std::sqrt(rss / (n - 2) / sxx);
  }
  return fit;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= t) ++i;
    while (j < b.size() && b[j] <= t) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

double ks_pvalue(double d, std::size_t n, std::size_t m) {
  double ne = double(n) * double(m) / double(n + m);
  double s = std::sqrt(ne);
  double lambda = (s + 0.12 + 0.11 / s) * d;
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

}  // namespace meanfield
