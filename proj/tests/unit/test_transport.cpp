#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "meanfield/errors.hpp"
#include "meanfield/numerics.hpp"
#include "meanfield/transport.hpp"

using namespace meanfield;

namespace {

DiscreteMeasure random_measure(Rng& rng, std::size_t n, int d, bool weighted) {
  std::vector<double> pts(n * d), w;
  for (auto& v : pts) v = 4 * rng.uniform() - 2;
  if (weighted) {
    w.resize(n);
    for (auto& v : w) v = 0.1 + rng.uniform();
    double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w) v /= s;
  }
  return DiscreteMeasure(d, pts, w);
}

// Integral of |F_a - F_b| over the merged support, built from scratch.
double cdf_oracle(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  std::vector<std::pair<double, double>> ev;
  for (std::size_t i = 0; i < a.size(); ++i) ev.push_back({a.points[i], a.view().weight(i)});
  for (std::size_t i = 0; i < b.size(); ++i) ev.push_back({b.points[i], -b.view().weight(i)});
  std::sort(ev.begin(), ev.end());
  double run = 0, total = 0;
  for (std::size_t i = 0; i + 1 < ev.size(); ++i) {
    run += ev[i].second;
    total += std::abs(run) * (ev[i + 1].first - ev[i].first);
  }
  return total;
}

double dist(const DiscreteMeasure& a, std::size_t i, const DiscreteMeasure& b, std::size_t j) {
  double s = 0;
  for (int k = 0; k < a.dim; ++k) s += std::pow(a.points[i * a.dim + k] - b.points[j * a.dim + k], 2);
  return std::sqrt(s);
}

double brute_force(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double c = 0;
    for (std::size_t i = 0; i < perm.size(); ++i) c += dist(a, i, b, perm[i]);
    best = std::min(best, c / perm.size());
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("w1 trivial cases") {
  DiscreteMeasure a(1, {0.0}), b(1, {1.0});
  CHECK(w1_exact_1d(a, b) == 1.0);
  CHECK(w1_exact_assignment(a, b) == doctest::Approx(1.0).epsilon(1e-15));
  Rng rng(1);
  auto m = random_measure(rng, 9, 1, true);
  CHECK(w1_exact_1d(m, m) == 0.0);
  CHECK(w1_exact_assignment(m, m) < 1e-15);
}

TEST_CASE("w1 1d matches the cdf oracle on weighted measures") {
  Rng rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    auto a = random_measure(rng, 6, 1, true), b = random_measure(rng, 5, 1, true);
    const double o = cdf_oracle(a, b);
    CHECK(std::abs(w1_exact_1d(a, b) - o) < 1e-12);
    CHECK(std::abs(w1_exact_assignment(a, b) - o) < 1e-12);
  }
}

TEST_CASE("solver cross validation") {
  Rng rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 2 + rep % 20, m = 2 + (rep * 7) % 20;
    auto a = random_measure(rng, n, 1, rep % 2 == 0), b = random_measure(rng, m, 1, rep % 3 == 0);
    const double e1 = w1_exact_1d(a, b), e2 = w1_exact_assignment(a, b);
    CHECK(std::abs(e1 - e2) < 1e-12);
    CHECK(w1_dyadic_bound(a, b, 6, 10) >= e1);
  }
  for (int rep = 0; rep < 30; ++rep) {
    const int d = 1 + rep % 3;
    auto a = random_measure(rng, 4, d, false), b = random_measure(rng, 4, d, false);
    const double bf = brute_force(a, b);
    CHECK(std::abs(w1_exact_assignment(a, b) - bf) < 1e-12);
    if (d == 1) CHECK(std::abs(w1_exact_1d(a, b) - bf) < 1e-12);
    CHECK(w1_dyadic_bound(a, b, 6, 10) >= bf);
  }
}

TEST_CASE("metric axioms and translation") {
  Rng rng(4);
  for (int rep = 0; rep < 30; ++rep) {
    const int d = 1 + rep % 2;
    auto a = random_measure(rng, 7, d, true), b = random_measure(rng, 5, d, true), c = random_measure(rng, 6, d, true);
    CHECK(std::abs(w1_exact_assignment(a, b) - w1_exact_assignment(b, a)) < 1e-12);
    CHECK(w1_exact_assignment(a, c) <= w1_exact_assignment(a, b) + w1_exact_assignment(b, c) + 1e-12);
    std::vector<double> v{0.7, -1.1};
    DiscreteMeasure t = a;
    double norm = 0;
    for (std::size_t i = 0; i < t.size(); ++i)
      for (int k = 0; k < d; ++k) t.points[i * d + k] += v[k];
    for (int k = 0; k < d; ++k) norm += v[k] * v[k];
    norm = std::sqrt(norm);
    CHECK(w1_exact_assignment(a, t) == doctest::Approx(norm).epsilon(1e-12));
    if (d == 1) CHECK(w1_exact_1d(a, t) == doctest::Approx(norm).epsilon(1e-12));
  }
}

TEST_CASE("kantorovich duality spot check") {
  Rng rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    auto a = random_measure(rng, 8, 1, true), b = random_measure(rng, 6, 1, true);
    const double w = w1_exact_1d(a, b);
    double best = -INFINITY;
    for (int t = 0; t < 1000; ++t) {
      // Random 1-Lipschitz piecewise-linear function on a fixed knot grid.
      std::vector<double> knots(41), vals(41);
      for (int k = 0; k <= 40; ++k) knots[k] = -2 + 0.1 * k;
      vals[0] = 0;
      for (int k = 1; k <= 40; ++k) vals[k] = vals[k - 1] + 0.1 * (2 * rng.uniform() - 1);
      auto f = [&](double x) {
        if (x <= knots.front()) return vals.front() - (knots.front() - x);
        if (x >= knots.back()) return vals.back();
        std::size_t k = std::size_t((x - knots[0]) / 0.1);
        k = std::min<std::size_t>(k, 39);
        double s = (x - knots[k]) / 0.1;
        return vals[k] + s * (vals[k + 1] - vals[k]);
      };
      double v = 0;
      for (std::size_t i = 0; i < a.size(); ++i) v += a.view().weight(i) * f(a.points[i]);
      for (std::size_t i = 0; i < b.size(); ++i) v -= b.view().weight(i) * f(b.points[i]);
      best = std::max(best, v);
    }
    CHECK(best <= w + 1e-9);
    // The optimal potential is the integral of sign(F_a - F_b).
    std::vector<double> xs(a.points);
    xs.insert(xs.end(), b.points.begin(), b.points.end());
    std::sort(xs.begin(), xs.end());
    auto cdf = [](const DiscreteMeasure& m, double x) {
      double s = 0;
      for (std::size_t i = 0; i < m.size(); ++i)
        if (m.points[i] <= x) s += m.view().weight(i);
      return s;
    };
    std::vector<double> pot(xs.size(), 0.0);
    for (std::size_t i = 1; i < xs.size(); ++i) {
      double diff = cdf(b, xs[i - 1]) - cdf(a, xs[i - 1]);
      pot[i] = pot[i - 1] + (diff > 0 ? 1 : diff < 0 ? -1 : 0) * (xs[i] - xs[i - 1]);
    }
    auto fstar = [&](double x) { return pot[std::lower_bound(xs.begin(), xs.end(), x) - xs.begin()]; };
    double v = 0;
    for (std::size_t i = 0; i < a.size(); ++i) v += a.view().weight(i) * fstar(a.points[i]);
    for (std::size_t i = 0; i < b.size(); ++i) v -= b.view().weight(i) * fstar(b.points[i]);
    CHECK(std::abs(v - w) < 1e-9);
  }
}

TEST_CASE("assignment budget") {
  Rng rng(6);
  auto a = random_measure(rng, 200, 2, false), b = random_measure(rng, 200, 2, false);
  CHECK_THROWS_AS(w1_exact_assignment(a, b), BudgetError);
}

TEST_CASE("dyadic bound") {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const int d = 1 + rep % 2;
    auto a = random_measure(rng, 3 + rep % 9, d, true), b = random_measure(rng, 2 + rep % 7, d, true);
    CHECK(w1_dyadic_bound(a, b, 6, 12) >= w1_exact_assignment(a, b));
  }
  auto a = random_measure(rng, 10, 1, false);
  auto self = w1_dyadic(a, a, 6, 10);
  CHECK(self.bound >= 0.0);
  CHECK(self.multiscale == 0.0);
  CHECK(self.bound <= self.remainder);

  // Empirical vs parent Gaussian decays like N^{-1/2}: the parent is a 2^17-point quantile grid.
  const std::size_t G = 1 << 17;
  std::vector<double> q(G);
  for (std::size_t k = 0; k < G; ++k) q[k] = normal_quantile((k + 0.5) / G);
  DiscreteMeasure parent(1, q);
  std::vector<double> lx, ly;
  for (int e = 6; e <= 14; e += 2) {
    const std::size_t n = std::size_t(1) << e;
    std::vector<double> vals;
    for (int rep = 0; rep < 8; ++rep) {
      Rng r(1000 * e + rep);
      std::vector<double> pts(n);
      for (auto& v : pts) v = normal_quantile(r.uniform() * (1 - 2e-16) + 1e-16);
      vals.push_back(w1_dyadic(DiscreteMeasure(1, pts), parent, 8, 18, false).bound);
    }
    lx.push_back(std::log(double(n)));
    ly.push_back(std::log(mean_se(vals).mean));
  }
  CHECK(std::abs(fit_line(lx, ly).slope + 0.5) <= 0.15);
}

TEST_CASE("w1 estimate") {
  Sampler two_a = [](Rng&, std::size_t n, std::vector<double>& out) { out.assign(n, 0.0); };
  Sampler two_b = [](Rng&, std::size_t n, std::vector<double>& out) { out.assign(n, 2.0); };
  auto e = w1_estimate(1, two_a, two_b, 5, 10, 1);
  CHECK(e.estimate == 2.0);
  CHECK(e.se == 0.0);

  auto gauss = [](double shift) {
    return Sampler([shift](Rng& r, std::size_t n, std::vector<double>& out) {
      out.resize(n);
      for (auto& v : out) v = shift + normal_quantile(r.uniform() * (1 - 2e-16) + 1e-16);
    });
  };
  auto shifted = w1_estimate(1, gauss(0.0), gauss(1.0), 10000, 20, 2);
  CHECK(std::abs(shifted.estimate - 1.0) <= 3 * shifted.se + 0.02);

  double prev = INFINITY;
  for (std::size_t n : {64, 512, 4096}) {
    auto s = w1_estimate(1, gauss(0.0), gauss(0.0), n, 20, 3);
    CHECK(s.estimate < prev);
    prev = s.estimate;
  }
}

TEST_CASE("distances against continuous laws") {
  std::vector<double> zero{0.0};
  auto f = MixtureField::single(KernelSpec::gaussian(1.0), zero);
  DiscreteMeasure atom(1, {0.0});
  // W1(delta_0, N(0,1)) = E|Z|.
  CHECK(w1_discrete_vs_mixture_1d(atom, f) == doctest::Approx(std::sqrt(2 / M_PI)).epsilon(1e-6));
  std::vector<double> one{1.0};
  auto g = MixtureField::single(KernelSpec::gaussian(1.0), one);
  CHECK(w1_mixture_1d(f, g) == doctest::Approx(1.0).epsilon(1e-6));
  auto grid = tabulate_cdf(g, -12, 12, 4001);
  CHECK(w1_mixture_vs_grid_1d(f, grid) == doctest::Approx(1.0).epsilon(1e-5));
}
