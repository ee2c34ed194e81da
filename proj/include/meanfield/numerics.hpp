#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace meanfield {

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343818684759;

inline double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0); }
double normal_quantile(double p);

// E|m + sZ| for Z ~ N(0,1).
double folded_normal_mean(double m, double s);

// E|Z|^p for Z ~ N(0,1), and E|Z_d| for a standard normal vector in R^d.
double abs_normal_moment(double p);
double chi_mean(int d);

// Adaptive Gauss-Kronrod on [a, b]; infinite limits allowed.
double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-12);

// Integral over R of f(z) phi(z), split at the given kink points.
double gauss_expectation(const std::function<double(double)>& f, std::span<const double> kinks = {},
                         double tol = 1e-12);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};
MeanSe mean_se(std::span<const double> xs);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};
// Weighted least squares y ~ a + b x. Empty weights means ordinary least squares.
LineFit fit_line(std::span<const double> x, std::span<const double> y, std::span<const double> w = {});

// Two-sided Kolmogorov-Smirnov tail probability for the scaled statistic.
double ks_pvalue(double d, std::size_t n, std::size_t m);
double ks_statistic(std::vector<double> a, std::vector<double> b);

}  // namespace meanfield
