#include "meanfield/field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "meanfield/errors.hpp"
#include "meanfield/numerics.hpp"

namespace meanfield {

namespace {

double kernel_norm(KernelFamily fam, double bw, int d) {
  if (fam == KernelFamily::BiExponential) return 1.0 / (2.0 * bw);
  return std::pow(2.0 * std::numbers::pi * bw * bw, -0.5 * d);
}

void require_dim(int want, std::size_t got) {
  if (got != static_cast<std::size_t>(want)) throw InputError("point dimension does not match field dim");
}

}  // namespace

MixtureField::MixtureField(int dim) : dim_(dim) {
  if (dim < 1) throw InputError("field dim must be >= 1");
}

MixtureField MixtureField::single(const KernelSpec& k, std::span<const double> center) {
  k.validate();
  MixtureField f(k.dim);
  f.add(1.0, center, k.family, k.bandwidth);
  return f;
}

void MixtureField::reserve(std::size_t n) {
  weights_.reserve(n);
  centers_.reserve(n * dim_);
  bandwidths_.reserve(n);
  families_.reserve(n);
  coef_.reserve(n);
  ivar_.reserve(n);
}

void MixtureField::add(double w, std::span<const double> center, KernelFamily family, double bandwidth) {
  require_dim(dim_, center.size());
  if (family == KernelFamily::BiExponential && dim_ != 1) throw InputError("bi-exponential component requires d = 1");
  if (!(bandwidth > 0.0)) throw InputError("component bandwidth must be > 0");
  weights_.push_back(w);
  centers_.insert(centers_.end(), center.begin(), center.end());
  bandwidths_.push_back(bandwidth);
  families_.push_back(family);
  coef_.push_back(w * kernel_norm(family, bandwidth, dim_));
  ivar_.push_back(family == KernelFamily::Gaussian ? 1.0 / (bandwidth * bandwidth) : 1.0 / bandwidth);
}

void MixtureField::normalize() {
  std::size_t out = 0;
  for (std::size_t i = 0; i < size(); ++i) {
    if (weights_[i] < kWeightFloor) continue;
    if (out != i) {
      weights_[out] = weights_[i];
      std::copy_n(centers_.begin() + i * dim_, dim_, centers_.begin() + out * dim_);
      bandwidths_[out] = bandwidths_[i];
      families_[out] = families_[i];
      ivar_[out] = ivar_[i];
    }
    ++out;
  }
  weights_.resize(out);
  centers_.resize(out * dim_);
  bandwidths_.resize(out);
  families_.resize(out);
  ivar_.resize(out);
  coef_.resize(out);
  if (out == 0) throw InputError("field has no components above the weight floor");
  double total = total_weight();
  for (std::size_t i = 0; i < out; ++i) {
    weights_[i] /= total;
    coef_[i] = weights_[i] * kernel_norm(families_[i], bandwidths_[i], dim_);
  }
}

bool MixtureField::all_gaussian() const {
  return std::all_of(families_.begin(), families_.end(), [](KernelFamily f) { return f == KernelFamily::Gaussian; });
}

double MixtureField::density(std::span<const double> y) const {
  require_dim(dim_, y.size());
  double s = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    const double* c = centers_.data() + i * dim_;
    if (families_[i] == KernelFamily::Gaussian) {
      double r2 = 0.0;
      for (int k = 0; k < dim_; ++k) r2 += (y[k] - c[k]) * (y[k] - c[k]);
      s += coef_[i] * std::exp(-0.5 * r2 * ivar_[i]);
    } else {
      s += coef_[i] * std::exp(-std::abs(y[0] - c[0]) * ivar_[i]);
    }
  }
  return s;
}

void MixtureField::gradient(std::span<const double> y, std::span<double> out) const {
  require_dim(dim_, y.size());
  require_dim(dim_, out.size());
  std::fill(out.begin(), out.end(), 0.0);
  if (dim_ == 1) {
    const double y0 = y[0];
    double g = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      double u = y0 - centers_[i];
      if (families_[i] == KernelFamily::Gaussian) {
        g -= u * ivar_[i] * coef_[i] * std::exp(-0.5 * u * u * ivar_[i]);
      } else if (u != 0.0) {
        g -= std::copysign(ivar_[i] * coef_[i] * std::exp(-std::abs(u) * ivar_[i]), u);
      }
    }
    out[0] = g;
    return;
  }
  for (std::size_t i = 0; i < size(); ++i) {
    const double* c = centers_.data() + i * dim_;
    double r2 = 0.0;
    for (int k = 0; k < dim_; ++k) r2 += (y[k] - c[k]) * (y[k] - c[k]);
    double p = coef_[i] * std::exp(-0.5 * r2 * ivar_[i]) * ivar_[i];
    for (int k = 0; k < dim_; ++k) out[k] -= (y[k] - c[k]) * p;
  }
}

void MixtureField::gradients(std::span<const double> points, std::span<double> out) const {
  if (points.size() % dim_ != 0 || out.size() != points.size()) throw InputError("gradients: bad buffer sizes");
  const std::size_t n = points.size() / dim_;
  for (std::size_t j = 0; j < n; ++j) gradient(points.subspan(j * dim_, dim_), out.subspan(j * dim_, dim_));
}

double MixtureField::cdf(double y) const {
  if (dim_ != 1) throw InputError("cdf requires d = 1");
  double s = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    double u = (y - centers_[i]) / bandwidths_[i];
    if (families_[i] == KernelFamily::Gaussian) {
      s += weights_[i] * normal_cdf(u);
    } else {
      s += weights_[i] * (u < 0.0 ? 0.5 * std::exp(u) : 1.0 - 0.5 * std::exp(-u));
    }
  }
  return s;
}

double MixtureField::total_weight() const {
  double s = 0.0;
  for (double w : weights_) s += w;
  return s;
}

void MixtureField::validate() const {
  if (size() == 0) throw InputError("field has no components");
  for (std::size_t i = 0; i < size(); ++i) {
    if (!(weights_[i] >= 0.0)) throw InputError("negative component weight");
    if (!(bandwidths_[i] > 0.0)) throw InputError("non-positive component bandwidth");
  }
  for (double c : centers_)
    if (!std::isfinite(c)) throw InputError("non-finite component center");
  if (std::abs(total_weight() - 1.0) > 1e-12) throw InputError("component weights do not sum to 1");
}

nlohmann::json MixtureField::to_json() const {
  nlohmann::json comps = nlohmann::json::array();
  for (std::size_t i = 0; i < size(); ++i) {
    auto c = center(i);
    comps.push_back({{"w", weights_[i]},
                     {"center", std::vector<double>(c.begin(), c.end())},
                     {"family", to_string(families_[i])},
                     {"bandwidth", bandwidths_[i]}});
  }
  return {{"dim", dim_}, {"components", comps}};
}

MixtureField MixtureField::from_json(const nlohmann::json& j) {
  try {
    MixtureField f(j.at("dim").get<int>());
    for (const auto& c : j.at("components")) {
      auto center = c.at("center").get<std::vector<double>>();
      f.add(c.at("w").get<double>(), center, family_from_string(c.at("family").get<std::string>()),
            c.at("bandwidth").get<double>());
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed field JSON: ") + e.what());
  }
}

bool MixtureField::operator==(const MixtureField& o) const {
  return dim_ == o.dim_ && weights_ == o.weights_ && centers_ == o.centers_ && bandwidths_ == o.bandwidths_ &&
         families_ == o.families_;
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("alpha must lie in [0, 1]");
}

void append_measure(MixtureField& out, const MeasureView& mu, double scale, const KernelSpec& k) {
  for (std::size_t i = 0; i < mu.size(); ++i) out.add(scale * mu.weight(i), mu.point(i), k.family, k.bandwidth);
}

}  // namespace

MixtureField evolve_exact(const MixtureField& f, const MeasureView& mu, double alpha, const KernelSpec& P,
                          const KernelSpec& Pp) {
  check_alpha(alpha);
  if (mu.dim != f.dim() || P.dim != f.dim() || Pp.dim != f.dim()) throw InputError("evolve_exact: dimension mismatch");
  if (mu.size() == 0) throw InputError("evolve_exact: empty measure");
  MixtureField out(f.dim());
  out.reserve(f.size() + mu.size());
  if (alpha < 1.0) {
    if (P.family != KernelFamily::Gaussian || !f.all_gaussian())
      throw UnsupportedError("exact convolution is only available for Gaussian components under a Gaussian P");
    const double lp2 = P.bandwidth * P.bandwidth;
    for (std::size_t i = 0; i < f.size(); ++i) {
      double bw = f.bandwidth(i);
      out.add((1.0 - alpha) * f.weight(i), f.center(i), KernelFamily::Gaussian, std::sqrt(bw * bw + lp2));
    }
  }
  if (alpha > 0.0) append_measure(out, mu, alpha, Pp);
  out.normalize();
  return out;
}

FieldSample subsample(const MixtureField& f, std::size_t M, Rng& rng, long step) {
  if (M == 0) throw InputError("subsample: M must be >= 1");
  const int d = f.dim();
  std::vector<double> cum(f.size());
  std::partial_sum(f.weights().begin(), f.weights().end(), cum.begin());
  const double total = cum.back();
  FieldSample s;
  s.dim = d;
  s.source_step = step;
  s.points.resize(M * d);
  for (std::size_t j = 0; j < M; ++j) {
    double u = rng.uniform() * total;
    std::size_t i = std::upper_bound(cum.begin(), cum.end(), u) - cum.begin();
    if (i >= f.size()) i = f.size() - 1;
    sample(f.kernel(i), f.center(i), rng, std::span(s.points.data() + j * d, d));
  }
  return s;
}

MixtureField evolve_sampled(const FieldSample& s, const MeasureView& mu, double alpha, const KernelSpec& P,
                            const KernelSpec& Pp) {
  check_alpha(alpha);
  if (s.dim != mu.dim || P.dim != s.dim || Pp.dim != s.dim) throw InputError("evolve_sampled: dimension mismatch");
  const std::size_t M = s.size();
  if (M == 0 || mu.size() == 0) throw InputError("evolve_sampled: empty input");
  MixtureField out(s.dim);
  out.reserve(M + mu.size());
  if (alpha < 1.0)
    for (std::size_t j = 0; j < M; ++j)
      out.add((1.0 - alpha) / M, std::span(s.points.data() + j * s.dim, s.dim), P.family, P.bandwidth);
  if (alpha > 0.0) append_measure(out, mu, alpha, Pp);
  double total = out.total_weight();
  if (std::abs(total - 1.0) > 1e-12) throw InputError("evolve_sampled: weights lost normalization");
  return out;
}

MixtureField expansion_reference(const MixtureField& eta0, const std::vector<DiscreteMeasure>& mus, double alpha,
                                 const KernelSpec& P, const KernelSpec& Pp) {
  check_alpha(alpha);
  if (mus.empty()) throw InputError("expansion_reference: empty history");
  if (P.family != KernelFamily::Gaussian || Pp.family != KernelFamily::Gaussian || !eta0.all_gaussian())
    throw UnsupportedError("expansion_reference requires Gaussian kernels");
  const int d = eta0.dim();
  const std::size_t k = mus.size() - 1;
  const double lp2 = P.bandwidth * P.bandwidth;
  const double lpp2 = Pp.bandwidth * Pp.bandwidth;
  MixtureField out(d);
  for (std::size_t i = 0; i <= k; ++i) {
    const auto& mu = mus[k - i];
    if (mu.dim != d) throw InputError("expansion_reference: dimension mismatch");
    double scale = alpha * std::pow(1.0 - alpha, double(i));
    double bw = std::sqrt(lpp2 + double(i) * lp2);
    auto v = mu.view();
    for (std::size_t a = 0; a < v.size(); ++a) out.add(scale * v.weight(a), v.point(a), KernelFamily::Gaussian, bw);
  }
  double tail = std::pow(1.0 - alpha, double(k + 1));
  for (std::size_t i = 0; i < eta0.size(); ++i) {
    double bw = eta0.bandwidth(i);
    out.add(tail * eta0.weight(i), eta0.center(i), KernelFamily::Gaussian, std::sqrt(bw * bw + double(k + 1) * lp2));
  }
  out.normalize();
  return out;
}

namespace {

double component_abs_moment(const MixtureField& f, std::size_t i, double p) {
  auto c = f.center(i);
  double r = 0.0;
  for (double v : c) r += v * v;
  r = std::sqrt(r);
  const double bw = f.bandwidth(i);
  if (p == 1.0 && f.dim() == 1) {
    if (f.family(i) == KernelFamily::Gaussian) return folded_normal_mean(r, bw);
    return r + bw * std::exp(-r / bw);
  }
  return abs_moment_1ptau(f.kernel(i), r, p - 1.0);
}

}  // namespace

double first_moment(const MixtureField& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f.weight(i) * component_abs_moment(f, i, 1.0);
  return s;
}

double moment_1ptau(const MixtureField& f, double tau) {
  if (!(tau >= 0.0)) throw InputError("tau must be >= 0");
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f.weight(i) * component_abs_moment(f, i, 1.0 + tau);
  return s;
}

MixtureField compact(const MixtureField& f, std::size_t M, Rng& rng) {
  if (M == 0) throw InputError("compact: M must be >= 1");
  if (f.size() <= M) return f;
  std::vector<double> cum(f.size());
  std::partial_sum(f.weights().begin(), f.weights().end(), cum.begin());
  std::vector<std::size_t> counts(f.size(), 0);
  for (std::size_t j = 0; j < M; ++j) {
    std::size_t i = std::upper_bound(cum.begin(), cum.end(), rng.uniform() * cum.back()) - cum.begin();
    counts[std::min(i, f.size() - 1)]++;
  }
  MixtureField out(f.dim());
  for (std::size_t i = 0; i < f.size(); ++i)
    if (counts[i]) out.add(double(counts[i]) / M, f.center(i), f.family(i), f.bandwidth(i));
  out.normalize();
  return out;
}

namespace {

MixtureField systematic_resample(const MixtureField& f, std::size_t budget) {
  std::vector<std::size_t> counts(f.size(), 0);
  double step = f.total_weight() / budget;
  double u = 0.5 * step, cum = 0.0;
  std::size_t i = 0;
  for (std::size_t j = 0; j < budget; ++j, u += step) {
    while (i + 1 < f.size() && cum + f.weight(i) <= u) cum += f.weight(i++);
    counts[i]++;
  }
  MixtureField out(f.dim());
  for (std::size_t k = 0; k < f.size(); ++k)
    if (counts[k]) out.add(double(counts[k]) / budget, f.center(k), f.family(k), f.bandwidth(k));
  out.normalize();
  return out;
}

}  // namespace

MixtureField merge_compact(const MixtureField& f, std::size_t budget) {
  if (budget == 0) throw InputError("merge_compact: budget must be >= 1");
  if (f.size() <= budget) return f;
  if (f.dim() != 1 || !f.all_gaussian()) return systematic_resample(f, budget);

  // Bandwidth groups of log-width log(1.1).
  const std::size_t n = f.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto group_of = [&](std::size_t i) { return static_cast<long>(std::floor(std::log(f.bandwidth(i)) / std::log(1.1))); };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    long ga = group_of(a), gb = group_of(b);
    if (ga != gb) return ga < gb;
    return f.center(a)[0] < f.center(b)[0];
  });
  struct Group {
    std::size_t begin, end;
    double mass;
    std::size_t alloc;
  };
  std::vector<Group> groups;
  for (std::size_t s = 0; s < n;) {
    std::size_t e = s;
    double m = 0.0;
    long g = group_of(order[s]);
    while (e < n && group_of(order[e]) == g) m += f.weight(order[e++]);
    groups.push_back({s, e, m, 1});
    s = e;
  }
  if (groups.size() > budget) return systematic_resample(f, budget);
  double z = 0.0;
  for (auto& g : groups) z += std::cbrt(g.mass);
  std::size_t used = 0;
  for (auto& g : groups) {
    g.alloc = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::floor(double(budget - groups.size()) * std::cbrt(g.mass) / z)) + 1, 1,
        g.end - g.begin);
    used += g.alloc;
  }
  // Hand leftover slots to groups that can still use them, in order.
  for (auto& g : groups) {
    if (used >= budget) break;
    std::size_t room = std::min(g.end - g.begin - g.alloc, budget - used);
    g.alloc += room;
    used += room;
  }
  MixtureField out(1);
  out.reserve(used);
  for (const auto& g : groups) {
    const std::size_t cnt = g.end - g.begin;
    for (std::size_t b = 0; b < g.alloc; ++b) {
      std::size_t lo = g.begin + cnt * b / g.alloc, hi = g.begin + cnt * (b + 1) / g.alloc;
      if (hi <= lo) continue;
      double w = 0.0, m1 = 0.0, m2 = 0.0;
      for (std::size_t k = lo; k < hi; ++k) {
        std::size_t i = order[k];
        double c = f.center(i)[0], s = f.bandwidth(i);
        w += f.weight(i);
        m1 += f.weight(i) * c;
        m2 += f.weight(i) * (c * c + s * s);
      }
      if (w <= 0.0) continue;
      double mean = m1 / w;
      double var = std::max(m2 / w - mean * mean, 0.0);
      double bw_min = f.bandwidth(order[lo]);
      for (std::size_t k = lo; k < hi; ++k) bw_min = std::min(bw_min, f.bandwidth(order[k]));
      out.add(w, std::span(&mean, 1), KernelFamily::Gaussian, std::max(std::sqrt(var), bw_min));
    }
  }
  out.normalize();
  return out;
}

}  // namespace meanfield
