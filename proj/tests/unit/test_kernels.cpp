#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "meanfield/errors.hpp"
#include "meanfield/kernels.hpp"
#include "meanfield/numerics.hpp"

using namespace meanfield;

namespace {

std::vector<double> fd_gradient(const KernelSpec& k, const std::vector<double>& x, std::vector<double> y,
                                double h = 1e-5) {
  std::vector<double> g(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double y0 = y[i];
    y[i] = y0 + h;
    double up = density(k, x, y);
    y[i] = y0 - h;
    double dn = density(k, x, y);
    y[i] = y0;
    g[i] = (up - dn) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("kernel density at known points") {
  std::vector<double> z{0.0};
  CHECK(density(KernelSpec::gaussian(1.0), z, z) == doctest::Approx(kInvSqrt2Pi).epsilon(1e-15));
  CHECK(density(KernelSpec::biexponential(1.0), z, z) == doctest::Approx(0.5).epsilon(1e-15));

  std::vector<double> x{0.0, 0.0}, y{0.3, -0.4};
  const double lam = 0.5;
  double oracle = 1.0 / (2 * std::numbers::pi * lam * lam) * std::exp(-(0.09 + 0.16) / (2 * lam * lam));
  CHECK(std::abs(density(KernelSpec::gaussian(lam, 2), x, y) - oracle) < 1e-12);
}

TEST_CASE("kernel gradient") {
  std::vector<double> x{0.0}, y{1.0}, g(1);
  grad_density(KernelSpec::gaussian(1.0), x, y, g);
  CHECK(g[0] == doctest::Approx(-normal_pdf(1.0)).epsilon(1e-12));
  CHECK(std::abs(g[0] - fd_gradient(KernelSpec::gaussian(1.0), x, y)[0]) < 1e-8);

  grad_density(KernelSpec::gaussian(0.7), y, y, g);
  CHECK(g[0] == 0.0);
  grad_density(KernelSpec::biexponential(1.3), y, y, g);
  CHECK(g[0] == 0.0);

  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> a(3), b(3), gd(3);
    for (int i = 0; i < 3; ++i) {
      a[i] = 2 * rng.uniform() - 1;
      b[i] = 2 * rng.uniform() - 1;
    }
    KernelSpec k = KernelSpec::gaussian(2.0, 3);
    grad_density(k, a, b, gd);
    auto fd = fd_gradient(k, a, b);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(gd[i] - fd[i]) <= 1e-6 * std::max(1e-3, std::abs(fd[i])));
  }
}

TEST_CASE("kernel gradients match finite differences for every family") {
  Rng rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    const double lam = 0.3 + 2 * rng.uniform();
    std::vector<double> x{4 * rng.uniform() - 2}, y{4 * rng.uniform() - 2}, g(1);
    if (std::abs(x[0] - y[0]) < 1e-3) continue;
    for (KernelSpec k : {KernelSpec::gaussian(lam), KernelSpec::biexponential(lam)}) {
      grad_density(k, x, y, g);
      double fd = fd_gradient(k, x, y, 1e-6)[0];
      CHECK(std::abs(g[0] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> x{rng.uniform(), rng.uniform()}, y{rng.uniform() - 1, 2 * rng.uniform()}, g(2);
    KernelSpec k = KernelSpec::gaussian(0.4 + rng.uniform(), 2);
    grad_density(k, x, y, g);
    auto fd = fd_gradient(k, x, y, 1e-6);
    for (int i = 0; i < 2; ++i) CHECK(std::abs(g[i] - fd[i]) <= 1e-6 * std::max(1.0, std::abs(fd[i])));
  }
}

TEST_CASE("kernel densities integrate to one") {
  std::vector<double> x{0.4};
  for (KernelSpec k : {KernelSpec::gaussian(0.6), KernelSpec::biexponential(1.7)}) {
    double mass = integrate(
        [&](double y) {
          std::vector<double> yy{y};
          return density(k, x, yy);
        },
        -INFINITY, INFINITY, 1e-12);
    CHECK(std::abs(mass - 1.0) < 1e-6);
  }
  // d = 2 by a tensor midpoint rule.
  KernelSpec k2 = KernelSpec::gaussian(0.8, 2);
  std::vector<double> c{0.1, -0.2};
  const int n = 600;
  const double lo = -8, h = 16.0 / n;
  double mass = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      std::vector<double> y{lo + (i + 0.5) * h, lo + (j + 0.5) * h};
      mass += density(k2, c, y) * h * h;
    }
  CHECK(std::abs(mass - 1.0) < 1e-6);
}

TEST_CASE("kernel sampling") {
  Rng rng(42);
  std::vector<double> x{0.0}, out(1);
  const int n = 1000000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    sample(KernelSpec::gaussian(1.0), x, rng, out);
    s += out[0];
    s2 += out[0] * out[0];
  }
  const double m = s / n, v = s2 / n - m * m;
  CHECK(std::abs(m) < 4e-3);
  CHECK(std::abs(v - 1.0) < 0.01);

  std::vector<double> x1{1.5};
  sample(KernelSpec::gaussian(1e-8), x1, rng, out);
  CHECK(std::abs(out[0] - 1.5) < 1e-6);

  Rng a(9), b(9);
  std::vector<double> oa(1), ob(1);
  for (int i = 0; i < 100; ++i) {
    sample(KernelSpec::biexponential(2.0), x, a, oa);
    sample(KernelSpec::biexponential(2.0), x, b, ob);
    CHECK(oa[0] == ob[0]);
  }
}

TEST_CASE("push-forward Lipschitz under common noise") {
  for (KernelSpec k : {KernelSpec::gaussian(1.2), KernelSpec::biexponential(0.8)}) {
    const double lip = compute_constants(k).lip_pushforward;
    std::vector<double> x{0.3}, xp{-1.1}, ox(1), oxp(1);
    std::vector<double> disp;
    for (int i = 0; i < 10000; ++i) {
      Rng r1(1000 + i), r2(1000 + i);
      sample(k, x, r1, ox);
      sample(k, xp, r2, oxp);
      disp.push_back(std::abs(ox[0] - oxp[0]));
    }
    auto ms = mean_se(disp);
    CHECK(ms.mean <= lip * 1.4 + 3 * ms.se);
  }
}

TEST_CASE("kernel constants") {
  auto g = compute_constants(KernelSpec::gaussian(1.0));
  CHECK(g.lip_pushforward == 1.0);
  double best = 0;
  for (int i = -40000; i <= 40000; ++i) {
    double y = i * 1e-4;
    best = std::max(best, std::abs((y * y - 1) * normal_pdf(y)));
  }
  CHECK(std::abs(g.lip_grad - best) < 1e-4);

  auto b = compute_constants(KernelSpec::biexponential(2.0));
  CHECK(b.exp_moment.alpha1_max == doctest::Approx(0.5));
  CHECK(b.grad_kink);
}

TEST_CASE("exponential moments") {
  KernelSpec g = KernelSpec::gaussian(1.0);
  double quad = gauss_expectation([](double z) { return std::exp(std::abs(z)); }, std::vector<double>{0.0});
  CHECK(std::abs(exp_moment(g, 0.0, 1.0) - quad) < 1e-8);
  CHECK(exp_moment(g, 0.0, 1.0) == doctest::Approx(2 * std::exp(0.5) * normal_cdf(1.0)).epsilon(1e-12));
  CHECK(exp_moment(KernelSpec::biexponential(1.0), 0.0, 0.5) == doctest::Approx(2.0).epsilon(1e-10));
  for (KernelSpec k : {g, KernelSpec::gaussian(0.3), KernelSpec::biexponential(2.0)})
    for (double x : {-1.0, 0.0, 2.5}) CHECK(exp_moment(k, x, 0.0) == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    const double lam = 0.5 + rng.uniform();
    const double x = 2 * rng.uniform() - 1;
    const bool gauss = rep % 2 == 0;
    KernelSpec k = gauss ? KernelSpec::gaussian(lam) : KernelSpec::biexponential(lam);
    const double a1 = gauss ? 0.8 * rng.uniform() : 0.4 / lam * rng.uniform();
    std::vector<double> xs{x}, out(1), vals;
    vals.reserve(1000000);
    for (int i = 0; i < 1000000; ++i) {
      sample(k, xs, rng, out);
      vals.push_back(std::exp(a1 * std::abs(out[0])));
    }
    auto ms = mean_se(vals);
    CHECK(std::abs(exp_moment(k, x, a1) - ms.mean) <= 3 * ms.se);
  }
  CHECK_THROWS_AS(exp_moment(KernelSpec::biexponential(2.0), 0.0, 0.6), DivergenceError);
}

TEST_CASE("kernel spec validation") {
  CHECK_THROWS_AS(KernelSpec::gaussian(0.0).validate(), InputError);
  KernelSpec bad = KernelSpec::biexponential(1.0);
  bad.dim = 2;
  CHECK_THROWS_AS(bad.validate(), InputError);
}
