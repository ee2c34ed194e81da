#include "meanfield/transport.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <numeric>

#include "meanfield/errors.hpp"
#include "meanfield/numerics.hpp"
#include "meanfield/parallel.hpp"

namespace meanfield {

namespace {

struct Atom1d {
  double x;
  double w;  // +a, -b
};

bool uniform_equal(const MeasureView& a, const MeasureView& b) {
  return a.weights.empty() && b.weights.empty() && a.size() == b.size();
}

}  // namespace

double w1_exact_1d(const MeasureView& a, const MeasureView& b) {
  if (a.dim != 1 || b.dim != 1) throw InputError("w1_exact_1d requires d = 1");
  if (a.size() == 0 || b.size() == 0) throw InputError("w1_exact_1d: empty measure");
  if (uniform_equal(a, b)) {
    std::vector<double> xa(a.points.begin(), a.points.end()), xb(b.points.begin(), b.points.end());
    std::sort(xa.begin(), xa.end());
    std::sort(xb.begin(), xb.end());
    double s = 0.0;
    for (std::size_t i = 0; i < xa.size(); ++i) s += std::abs(xa[i] - xb[i]);
    return s / xa.size();
  }
  std::vector<Atom1d> atoms;
  atoms.reserve(a.size() + b.size());
  for (std::size_t i = 0; i < a.size(); ++i) atoms.push_back({a.points[i], a.weight(i)});
  for (std::size_t i = 0; i < b.size(); ++i) atoms.push_back({b.points[i], -b.weight(i)});
  std::stable_sort(atoms.begin(), atoms.end(), [](const Atom1d& p, const Atom1d& q) { return p.x < q.x; });
  double fa = 0.0, fb = 0.0, total = 0.0;
  for (std::size_t i = 0; i + 1 < atoms.size(); ++i) {
    if (atoms[i].w >= 0) fa += atoms[i].w;
    else fb -= atoms[i].w;
    total += std::abs(fa - fb) * (atoms[i + 1].x - atoms[i].x);
  }
  return total;
}

double w1_exact_assignment(const MeasureView& a, const MeasureView& b) {
  if (a.dim != b.dim) throw InputError("w1_exact_assignment: dimension mismatch");
  const std::size_t n = a.size(), m = b.size();
  if (n == 0 || m == 0) throw InputError("w1_exact_assignment: empty measure");
  if (n + m > kAssignmentBudget)
    throw BudgetError("exact assignment accepts at most " + std::to_string(kAssignmentBudget) +
                      " atoms in total; use w1_dyadic_bound for larger measures");
  const int d = a.dim;
  std::vector<double> cost(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        double u = a.points[i * d + k] - b.points[j * d + k];
        s += u * u;
      }
      cost[i * m + j] = std::sqrt(s);
    }
  std::vector<double> supply(n), demand(m), flow(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) supply[i] = a.weight(i);
  for (std::size_t j = 0; j < m; ++j) demand[j] = b.weight(j);
  double total_supply = std::accumulate(supply.begin(), supply.end(), 0.0);
  const double eps = 1e-15 * std::max(1.0, total_supply);

  // Nodes: sources 0..n-1, sinks n..n+m-1.
  const std::size_t V = n + m;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> pot(V, 0.0), dist(V);
  std::vector<std::size_t> prev(V);
  std::vector<char> done(V);
  for (std::size_t iter = 0; iter < 100 * V * V; ++iter) {
    double remaining = 0.0;
    for (double s : supply) remaining += s;
    if (remaining <= eps) break;
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(done.begin(), done.end(), 0);
    std::fill(prev.begin(), prev.end(), V);
    // Super-source edges carry reduced cost top - pot[i] >= 0.
    double top = -inf;
    for (std::size_t i = 0; i < n; ++i)
      if (supply[i] > eps) top = std::max(top, pot[i]);
    for (std::size_t i = 0; i < n; ++i)
      if (supply[i] > eps) dist[i] = top - pot[i];
    for (;;) {
      std::size_t u = V;
      for (std::size_t v = 0; v < V; ++v)
        if (!done[v] && dist[v] < inf && (u == V || dist[v] < dist[u])) u = v;
      if (u == V) break;
      done[u] = 1;
      if (u < n) {
        for (std::size_t j = 0; j < m; ++j) {
          std::size_t v = n + j;
          if (done[v]) continue;
          double rc = std::max(0.0, cost[u * m + j] + pot[u] - pot[v]);
          if (dist[u] + rc < dist[v]) {
            dist[v] = dist[u] + rc;
            prev[v] = u;
          }
        }
      } else {
        std::size_t j = u - n;
        for (std::size_t i = 0; i < n; ++i) {
          if (done[i] || flow[i * m + j] <= eps) continue;
          double rc = std::max(0.0, -cost[i * m + j] + pot[u] - pot[i]);
          if (dist[u] + rc < dist[i]) {
            dist[i] = dist[u] + rc;
            prev[i] = u;
          }
        }
      }
    }
    std::size_t t = V;
    for (std::size_t j = 0; j < m; ++j)
      if (demand[j] > eps && dist[n + j] < inf && (t == V || dist[n + j] < dist[t])) t = n + j;
    if (t == V) break;
    double cap = demand[t - n];
    std::size_t v = t;
    while (prev[v] != V) {
      std::size_t u = prev[v];
      if (u >= n) cap = std::min(cap, flow[v * m + (u - n)]);
      v = u;
    }
    cap = std::min(cap, supply[v]);
    const std::size_t src = v;
    v = t;
    while (prev[v] != V) {
      std::size_t u = prev[v];
      if (u < n) flow[u * m + (v - n)] += cap;
      else flow[v * m + (u - n)] -= cap;
      v = u;
    }
    supply[src] -= cap;
    demand[t - n] -= cap;
    const double dmax = dist[t];
    for (std::size_t w = 0; w < V; ++w) pot[w] += std::min(dist[w], dmax);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < n * m; ++k)
    if (flow[k] > 0.0) total += flow[k] * cost[k];
  return total;
}

namespace {

struct CellAtom {
  int scale;
  std::array<std::uint32_t, 16> idx;
  double a;
  double b;
};

int annulus_index(std::span<const double> x) {
  int n = 0;
  for (double v : x) {
    double lim = std::ldexp(1.0, n);
    while (!(v > -lim && v <= lim)) {
      ++n;
      lim = std::ldexp(1.0, n);
      if (n > 1100) return n;
    }
  }
  return n;
}

}  // namespace

DyadicBound w1_dyadic(const MeasureView& a, const MeasureView& b, int depth_scales, int depth_levels,
                      bool certified) {
  if (a.dim != b.dim) throw InputError("w1_dyadic: dimension mismatch");
  const int d = a.dim;
  if (d > 16) throw InputError("w1_dyadic: dim above 16");
  if (depth_scales < 1 || depth_levels < 0 || depth_levels > 30)
    throw InputError("w1_dyadic: depth_scales >= 1 and 0 <= depth_levels <= 30 required");
  const int L = depth_levels;
  std::vector<CellAtom> atoms;
  atoms.reserve(a.size() + b.size());
  double tail = 0.0;
  auto push = [&](const MeasureView& m, bool is_a) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      auto x = m.point(i);
      double w = m.weight(i);
      int n = annulus_index(x);
      if (n >= depth_scales) {
        double r = 0.0;
        for (double v : x) r += v * v;
        tail += w * std::sqrt(r);
        continue;
      }
      CellAtom c{};
      c.scale = n;
      const double half = std::ldexp(1.0, n), side = std::ldexp(1.0, n + 1 - L);
      const double top = std::ldexp(1.0, L) - 1.0;
      for (int k = 0; k < d; ++k) {
        double q = std::ceil((x[k] + half) / side) - 1.0;
        c.idx[k] = static_cast<std::uint32_t>(std::clamp(q, 0.0, top));
      }
      (is_a ? c.a : c.b) = w;
      atoms.push_back(c);
    }
  };
  push(a, true);
  push(b, false);

  const double sqd = std::sqrt(double(d));
  double multiscale = 0.0, leaf = 0.0;
  std::vector<std::size_t> order(atoms.size());
  for (int l = L; l >= 0; --l) {
    const int shift = L - l;
    auto key_less = [&](std::size_t p, std::size_t q) {
      if (atoms[p].scale != atoms[q].scale) return atoms[p].scale < atoms[q].scale;
      for (int k = 0; k < d; ++k) {
        auto ip = atoms[p].idx[k] >> shift, iq = atoms[q].idx[k] >> shift;
        if (ip != iq) return ip < iq;
      }
      return false;
    };
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), key_less);
    // Level 0 of the outer annuli is the whole annulus; level 0 of n = 0 is the unit cube.
    std::vector<double> s_by_scale(depth_scales, 0.0), leaf_by_scale(depth_scales, 0.0);
    for (std::size_t s = 0; s < order.size();) {
      std::size_t e = s;
      double ma = 0.0, mb = 0.0;
      while (e < order.size() && !key_less(order[s], order[e])) {
        ma += atoms[order[e]].a;
        mb += atoms[order[e]].b;
        ++e;
      }
      int n = atoms[order[s]].scale;
      s_by_scale[n] += std::abs(ma - mb);
      if (l == L) leaf_by_scale[n] += std::min(ma, mb);
      s = e;
    }
    for (int n = 0; n < depth_scales; ++n) {
      double scale = std::ldexp(1.0, n);
      if (certified) {
        double c = l == 0 ? 1.0 : std::ldexp(1.0, 1 - l);
        multiscale += sqd * scale * c * s_by_scale[n];
        if (l == L) leaf += sqd * scale * std::ldexp(1.0, 1 - L) * leaf_by_scale[n];
      } else {
        multiscale += scale * std::ldexp(1.0, -l) * s_by_scale[n];
      }
    }
  }
  DyadicBound r;
  r.multiscale = multiscale;
  r.remainder = leaf + tail;
  r.bound = r.multiscale + r.remainder;
  return r;
}

W1Estimate w1_estimate(int dim, const Sampler& a, const Sampler& b, std::size_t n, std::size_t reps,
                       std::uint64_t seed) {
  if (n == 0 || reps == 0) throw InputError("w1_estimate: n and reps must be >= 1");
  if (dim != 1 && 2 * n > kAssignmentBudget)
    throw BudgetError("w1_estimate in d > 1 is limited by the exact assignment budget");
  std::vector<double> vals(reps);
  parallel_for(reps, [&](std::size_t r) {
    Rng ra = substream(seed, StreamTag::kEstimator, 2 * r);
    Rng rb = substream(seed, StreamTag::kEstimator, 2 * r + 1);
    std::vector<double> xa, xb;
    a(ra, n, xa);
    b(rb, n, xb);
    MeasureView va{dim, xa, {}}, vb{dim, xb, {}};
    vals[r] = dim == 1 ? w1_exact_1d(va, vb) : w1_exact_assignment(va, vb);
  });
  MeanSe ms = mean_se(vals);
  return {ms.mean, ms.se};
}

double w1_discrete_vs_cdf_1d(const MeasureView& a, const std::function<double(double)>& cdf, double lo, double hi) {
  if (a.dim != 1) throw InputError("w1_discrete_vs_cdf_1d requires d = 1");
  std::vector<std::pair<double, double>> atoms;
  for (std::size_t i = 0; i < a.size(); ++i) atoms.emplace_back(a.points[i], a.weight(i));
  std::stable_sort(atoms.begin(), atoms.end(), [](auto& p, auto& q) { return p.first < q.first; });
  lo = std::min(lo, atoms.front().first);
  hi = std::max(hi, atoms.back().first);
  using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
  double total = 0.0, fa = 0.0, x = lo;
  std::size_t i = 0;
  while (x < hi) {
    while (i < atoms.size() && atoms[i].first <= x) fa += atoms[i++].second;
    double next = i < atoms.size() ? atoms[i].first : hi;
    // Subdivide long stretches.
    const int pieces = std::max(1, static_cast<int>(std::ceil((next - x) / 0.05)));
    const double h = (next - x) / pieces;
    for (int p = 0; p < pieces; ++p) {
      double u0 = x + p * h;
      total += GK::integrate([&](double u) { return std::abs(cdf(u) - fa); }, u0, u0 + h, 0);
    }
    x = next;
  }
  return total;
}

std::pair<double, double> mixture_range_1d(const MixtureField& f, double sigmas) {
  if (f.dim() != 1) throw InputError("mixture_range_1d requires d = 1");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double c = f.center(i)[0], s = f.bandwidth(i) * (f.family(i) == KernelFamily::Gaussian ? sigmas : 3.5 * sigmas);
    lo = std::min(lo, c - s);
    hi = std::max(hi, c + s);
  }
  return {lo, hi};
}

double w1_discrete_vs_mixture_1d(const MeasureView& a, const MixtureField& f) {
  auto [lo, hi] = mixture_range_1d(f);
  return w1_discrete_vs_cdf_1d(a, [&](double y) { return f.cdf(y); }, lo, hi);
}

CdfGrid tabulate_cdf(const MixtureField& f, double lo, double hi, std::size_t n) {
  if (n < 2 || !(hi > lo)) throw InputError("tabulate_cdf: bad grid");
  CdfGrid g;
  g.lo = lo;
  g.h = (hi - lo) / double(n - 1);
  g.values.resize(n);
  for (std::size_t k = 0; k < n; ++k) g.values[k] = f.cdf(lo + g.h * double(k));
  return g;
}

double w1_mixture_vs_grid_1d(const MixtureField& f, const CdfGrid& g) {
  const std::size_t n = g.values.size();
  double prev = std::abs(f.cdf(g.lo) - g.values[0]), total = 0.0;
  for (std::size_t k = 1; k < n; ++k) {
    double cur = std::abs(f.cdf(g.lo + g.h * double(k)) - g.values[k]);
    total += 0.5 * (prev + cur) * g.h;
    prev = cur;
  }
  return total;
}

double w1_mixture_1d(const MixtureField& f, const MixtureField& g, std::size_t n) {
  auto [l1, h1] = mixture_range_1d(f);
  auto [l2, h2] = mixture_range_1d(g);
  CdfGrid grid = tabulate_cdf(g, std::min(l1, l2), std::max(h1, h2), n);
  return w1_mixture_vs_grid_1d(f, grid);
}

}  // namespace meanfield
