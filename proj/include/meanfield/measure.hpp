#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace meanfield {

// Non-owning view of a discrete measure. Points are stored row-major
// (n x dim); an empty weight span means uniform weights 1/n.
struct MeasureView {
  int dim = 1;
  std::span<const double> points;
  std::span<const double> weights;

  std::size_t size() const { return dim > 0 ? points.size() / dim : 0; }
  double weight(std::size_t i) const { return weights.empty() ? 1.0 / size() : weights[i]; }
  std::span<const double> point(std::size_t i) const { return points.subspan(i * dim, dim); }
};

struct DiscreteMeasure {
  int dim = 1;
  std::vector<double> points;
  std::vector<double> weights;

  DiscreteMeasure() = default;
  DiscreteMeasure(int d, std::vector<double> pts, std::vector<double> w = {});

  static DiscreteMeasure uniform(int d, std::vector<double> pts) { return DiscreteMeasure(d, std::move(pts)); }

  std::size_t size() const { return dim > 0 ? points.size() / dim : 0; }
  MeasureView view() const { return MeasureView{dim, points, weights}; }
  operator MeasureView() const { return view(); }
};

// Coordinatewise mean of the measure.
std::vector<double> mean(const MeasureView& m);
// Throws InputError unless weights are nonnegative and sum to 1 within 1e-12.
void validate(const MeasureView& m);

}  // namespace meanfield
