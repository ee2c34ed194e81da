#include <doctest.h>

#include <cmath>
#include <vector>

#include "meanfield/limit.hpp"
#include "meanfield/numerics.hpp"
#include "meanfield/stability.hpp"
#include "meanfield/transport.hpp"

using namespace meanfield;

namespace {

ModelParams ar1(double a, double b) {
  ModelParams p;
  p.A = Eigen::MatrixXd::Constant(1, 1, a);
  p.delta = 0.0;
  p.noise.b = b;
  return p;
}

double abs_mean(const DiscreteMeasure& m) {
  double s = 0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m.view().weight(i) * std::abs(m.points[i]);
  return s;
}

}  // namespace

TEST_CASE("noise-free linear contraction halves the first moment") {
  ModelParams p = ar1(0.5, 0.0);
  LimitOptions opt;
  opt.nodes = 256;
  opt.budget = 256;
  InitialCondition init;
  init.particle_mean = {1.0};
  auto t = run_limit(p, init, 8, opt);
  for (std::size_t n = 1; n < t.states.size(); ++n)
    CHECK(std::abs(abs_mean(t.states[n].mu) - 0.5 * abs_mean(t.states[n - 1].mu)) < 1e-9);
}

TEST_CASE("ensemble and quantile methods agree") {
  ModelParams p;
  InitialCondition init;
  LimitOptions q;
  q.nodes = 2048;
  q.budget = 2048;
  auto tq = run_limit(p, init, 10, q);
  LimitOptions e1 = q, e2 = q;
  e1.method = e2.method = LimitMethod::Ensemble;
  e1.nodes = e2.nodes = 512;
  e1.seed = 1;
  e2.seed = 2;
  auto a = run_limit(p, init, 10, e1), b = run_limit(p, init, 10, e2);
  const double baseline = measure_distance(a.states[10].mu, b.states[10].mu);
  CHECK(measure_distance(a.states[10].mu, tq.states[10].mu) <= 3 * baseline);
}

TEST_CASE("field matches the expansion with a drift-free history") {
  ModelParams p = ar1(0.6, 1.0);
  p.alpha = 0.35;
  LimitOptions opt;
  opt.nodes = 64;
  opt.budget = 4096;
  InitialCondition init;
  auto t = run_limit(p, init, 10, opt);
  std::vector<DiscreteMeasure> mus;
  for (long n = 0; n < 10; ++n) {
    mus.push_back(t.states[n].mu);
    auto ref = expansion_reference(t.states[0].eta, mus, p.alpha, p.P, p.Pp);
    for (int j = 0; j < 20; ++j) {
      std::vector<double> y{-5 + 10 * (j + 0.5) / 20};
      CHECK(std::abs(t.states[n + 1].eta.density(y) - ref.density(y)) < 1e-10);
    }
  }
}

TEST_CASE("AR(1) fixed point") {
  const double a = 0.5, b = 1.0;
  ModelParams p = ar1(a, b);
  LimitOptions opt;
  opt.nodes = 1024;
  opt.budget = 1024;
  InitialCondition init;
  auto fp = iterate_to_fixed_point(p, limit_initial(p, init, opt), 1e-4, 200, opt);
  REQUIRE(fp.report.converged);
  const double s = b / std::sqrt(1 - a * a);
  double w = w1_discrete_vs_cdf_1d(fp.state.mu, [&](double x) { return normal_cdf(x / s); }, -12 * s, 12 * s);
  std::vector<double> grid(opt.nodes);
  for (std::size_t k = 0; k < opt.nodes; ++k) grid[k] = s * normal_quantile((k + 0.5) / opt.nodes);
  const double floor = w1_discrete_vs_cdf_1d(DiscreteMeasure(1, grid), [&](double x) { return normal_cdf(x / s); },
                                             -12 * s, 12 * s);
  CHECK(floor < 3e-3);
  CHECK(w <= floor + 1e-4);
}

TEST_CASE("fixed point uniqueness and residual") {
  ModelParams p;
  p.delta = 0.05;
  p.alpha = 0.6;
  auto r = compute_constants(p, 1.0);
  REQUIRE(r.cond_contraction);
  LimitOptions opt;
  opt.nodes = 512;
  opt.budget = 512;
  const double tol = 1e-3;
  InitialCondition at0, at3;
  at0.particle_std = 0.0;
  at3.particle_mean = {3.0};
  at3.field_center = {3.0};
  auto f0 = iterate_to_fixed_point(p, limit_initial(p, at0, opt), tol, 200, opt, r.c1 + r.c2);
  auto f3 = iterate_to_fixed_point(p, limit_initial(p, at3, opt), tol, 200, opt, r.c1 + r.c2);
  REQUIRE(f0.report.converged);
  REQUIRE(f3.report.converged);
  CHECK_FALSE(f0.report.contraction_warning);
  CHECK(limit_distance(f0.state, f3.state) <= 2 * tol);
  auto again = psi_step(f0.state, p, opt);
  CHECK(limit_distance(again, f0.state) < 2 * tol);
}

TEST_CASE("two-step contraction recursion") {
  ModelParams p;
  p.delta = 0.05;
  p.alpha = 0.6;
  auto r = compute_constants(p, 1.0);
  LimitOptions opt;
  opt.nodes = 512;
  opt.budget = 512;
  InitialCondition x0, y0;
  y0.particle_mean = {4.0};
  y0.field_center = {4.0};
  auto a = run_limit(p, x0, 15, opt), b = run_limit(p, y0, 15, opt);
  std::vector<double> d;
  for (long n = 0; n <= 15; ++n) d.push_back(limit_distance(a.states[n], b.states[n]));
  for (std::size_t n = 2; n < d.size(); ++n) CHECK(d[n] <= r.c1 * d[n - 1] + r.c2 * d[n - 2] + 1e-4);
}

TEST_CASE("quantile method is deterministic") {
  ModelParams p;
  InitialCondition init;
  LimitOptions opt;
  opt.nodes = 256;
  opt.budget = 256;
  auto a = run_limit(p, init, 5, opt), b = run_limit(p, init, 5, opt);
  for (long n = 0; n <= 5; ++n) {
    CHECK(a.states[n].mu.points == b.states[n].mu.points);
    CHECK(a.states[n].eta == b.states[n].eta);
  }
}

TEST_CASE("mixture quantiles") {
  std::vector<double> m{0.0}, v{4.0};
  auto q = gaussian_mixture_quantiles(m, v, 100);
  for (std::size_t k = 0; k < 100; ++k) CHECK(q[k] == doctest::Approx(2 * normal_quantile((k + 0.5) / 100)).epsilon(1e-9));
  std::vector<double> m2{-1.0, 1.0}, v2{0.25, 0.25};
  auto q2 = gaussian_mixture_quantiles(m2, v2, 64);
  for (std::size_t k = 0; k < 64; ++k) {
    double x = q2[k];
    double F = 0.5 * (normal_cdf((x + 1) / 0.5) + normal_cdf((x - 1) / 0.5));
    CHECK(F == doctest::Approx((k + 0.5) / 64).epsilon(1e-9));
  }
}

TEST_CASE("geometric rate fit") {
  std::vector<double> d;
  for (int n = 0; n < 20; ++n) d.push_back(3 * std::pow(0.7, n));
  CHECK(fit_geometric_rate(d, 0.0) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(std::isnan(fit_geometric_rate(d, 10.0)));
}
