#include "meanfield/measure.hpp"

#include <cmath>

#include "meanfield/errors.hpp"

namespace meanfield {

DiscreteMeasure::DiscreteMeasure(int d, std::vector<double> pts, std::vector<double> w)
    : dim(d), points(std::move(pts)), weights(std::move(w)) {
  if (d < 1) throw InputError("measure dim must be >= 1");
  if (points.size() % d != 0) throw InputError("point buffer is not a multiple of dim");
  if (!weights.empty() && weights.size() != size()) throw InputError("weight count does not match atom count");
}

std::vector<double> mean(const MeasureView& m) {
  std::vector<double> out(m.dim, 0.0);
  const std::size_t n = m.size();
  if (m.weights.empty()) {
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < m.dim; ++k) out[k] += m.points[i * m.dim + k];
    for (auto& v : out) v /= static_cast<double>(n);
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double w = m.weight(i);
    for (int k = 0; k < m.dim; ++k) out[k] += w * m.points[i * m.dim + k];
  }
  return out;
}

void validate(const MeasureView& m) {
  if (m.size() == 0) throw InputError("empty measure");
  if (m.weights.empty()) return;
  double s = 0.0;
  for (double w : m.weights) {
    if (!(w >= 0.0)) throw InputError("negative measure weight");
    s += w;
  }
  if (std::abs(s - 1.0) > 1e-12) throw InputError("measure weights do not sum to 1");
}

}  // namespace meanfield
