#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "meanfield/field.hpp"
#include "meanfield/measure.hpp"
#include "meanfield/rng.hpp"

namespace meanfield {

inline constexpr std::size_t kAssignmentBudget = 256;

// Exact W1 in d = 1 by integrating |F_a - F_b|.
double w1_exact_1d(const MeasureView& a, const MeasureView& b);

// Exact W1 with Euclidean cost by successive shortest paths on the
// transportation network. Total atom count must not exceed kAssignmentBudget.
double w1_exact_assignment(const MeasureView& a, const MeasureView& b);

struct DyadicBound {
  double bound = 0.0;       // multiscale + remainder
  double multiscale = 0.0;  // cell-mass differences over annuli and levels
  double remainder = 0.0;   // finest-level and outer-tail terms
};

// Multiscale upper bound over annuli (-2^n, 2^n]^d \ (-2^{n-1}, 2^{n-1}]^d,
// n < depth_scales, each split into dyadic cells down to depth_levels.
// certified = true gives a bound that provably dominates W1; false drops the
// geometric constants and reports the scale-free shape sum_n 2^n sum_l 2^-l S_l.
DyadicBound w1_dyadic(const MeasureView& a, const MeasureView& b, int depth_scales, int depth_levels,
                      bool certified = true);
inline double w1_dyadic_bound(const MeasureView& a, const MeasureView& b, int depth_scales, int depth_levels) {
  return w1_dyadic(a, b, depth_scales, depth_levels, true).bound;
}

// Draws n points (n x dim, row-major) into out.
using Sampler = std::function<void(Rng&, std::size_t n, std::vector<double>& out)>;

struct W1Estimate {
  double estimate = 0.0;
  double se = 0.0;
};

// Mean over reps of exact W1 between independent n-point draws of A and B.
// Empirical W1 is biased upward by the sampling fluctuation of both sides;
// both sides always use the same n.
W1Estimate w1_estimate(int dim, const Sampler& a, const Sampler& b, std::size_t n, std::size_t reps,
                       std::uint64_t seed);

// d = 1 distances against continuous laws.
double w1_discrete_vs_cdf_1d(const MeasureView& a, const std::function<double(double)>& cdf, double lo, double hi);
double w1_discrete_vs_mixture_1d(const MeasureView& a, const MixtureField& f);

// Tabulated mixture CDF for repeated distance evaluations.
struct CdfGrid {
  double lo = 0.0;
  double h = 0.0;
  std::vector<double> values;
};
CdfGrid tabulate_cdf(const MixtureField& f, double lo, double hi, std::size_t n);
double w1_mixture_vs_grid_1d(const MixtureField& f, const CdfGrid& g);
double w1_mixture_1d(const MixtureField& f, const MixtureField& g, std::size_t n = 2001);
// Range [lo, hi] holding all but a negligible tail of f.
std::pair<double, double> mixture_range_1d(const MixtureField& f, double sigmas = 10.0);

}  // namespace meanfield
