#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "meanfield/dynamics.hpp"
#include "meanfield/errors.hpp"
#include "meanfield/numerics.hpp"
#include "meanfield/stability.hpp"
#include "meanfield/transport.hpp"

using namespace meanfield;

namespace {

ModelParams scalar_model(double a, double delta, double b) {
  ModelParams p;
  p.A = Eigen::MatrixXd::Constant(1, 1, a);
  p.delta = delta;
  p.noise.b = b;
  return p;
}

double norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("drift special cases") {
  ModelParams p;
  p.drift.a1 = p.drift.a2 = p.drift.a3 = 0.0;
  p.noise.c0 = 0.4;
  p.noise.sc = 0.3;
  NoiseDraw e = draw_noise(1, 0, 0, 1);
  std::vector<double> g{2.0}, x{-1.0}, out(1), pts{5.0, 6.0};
  DiscreteMeasure mu(1, pts);
  drift_eval(p, g, mu.view(), x, e, out);
  CHECK(out[0] == doctest::Approx(0.4 + 0.3 * e.xi_c[0]).epsilon(1e-15));

  ModelParams q;
  q.drift.a1 = 1;
  q.drift.a2 = q.drift.a3 = 0;
  q.noise.L0 = 1;
  q.noise.sL = q.noise.c0 = q.noise.sc = 0;
  drift_eval(q, g, mu.view(), x, e, out);
  CHECK(out[0] == 2.0);
}

TEST_CASE("drift Lipschitz audit") {
  Rng rng(3);
  for (auto variant : {DriftVariant::LinearMeanField, DriftVariant::InteractionKernel}) {
    ModelParams p;
    p.dim = 2;
    p.A = Eigen::MatrixXd::Identity(2, 2) * 0.2;
    p.P = p.Pp = KernelSpec::gaussian(1.0, 2);
    p.drift.variant = variant;
    p.drift.a1 = 0.7;
    p.drift.a2 = -1.2;
    p.drift.a3 = 0.4;
    p.drift.l_K = variant == DriftVariant::InteractionKernel ? 0.5 : 0.0;
    p.noise.sL = 0.6;
    p.noise.sc = 0.2;
    for (int rep = 0; rep < 1000; ++rep) {
      auto rnd = [&](std::size_t n) {
        std::vector<double> v(n);
        for (auto& x : v) x = 4 * rng.uniform() - 2;
        return v;
      };
      auto g1 = rnd(2), g2 = rnd(2), x1 = rnd(2), x2 = rnd(2);
      DiscreteMeasure m1(2, rnd(2 * (1 + rep % 5))), m2(2, rnd(2 * (1 + rep % 4)));
      NoiseDraw e = draw_noise(7, rep, 0, 2);
      std::vector<double> f1(2), f2(2), diff(2), dg(2), dx(2);
      drift_eval(p, g1, m1.view(), x1, e, f1);
      drift_eval(p, g2, m2.view(), x2, e, f2);
      for (int k = 0; k < 2; ++k) {
        diff[k] = f1[k] - f2[k];
        dg[k] = g1[k] - g2[k];
        dx[k] = x1[k] - x2[k];
      }
      double rhs = drift_a1(p, e) * (norm(dx) + norm(dg) + w1_exact_assignment(m1, m2));
      CHECK(norm(diff) <= rhs + 1e-12);
    }
  }
}

TEST_CASE("ips1 deterministic halving") {
  ModelParams p = scalar_model(0.5, 0.0, 0.0);
  InitialCondition init;
  auto ens = initial_ensemble(p, init, 16, 3);
  auto field = initial_field(p, init);
  auto start = ens.positions;
  for (int n = 1; n <= 5; ++n) {
    std::tie(ens, field) = step_ips1(ens, field, p, 3);
    for (std::size_t i = 0; i < 16; ++i) CHECK(ens.positions[i] == std::ldexp(start[i], -n));
  }
}

TEST_CASE("random walk variance") {
  ModelParams p = scalar_model(1.0, 0.0, 0.7);
  InitialCondition init;
  init.particle_std = 0.0;
  const long n_steps = 12;
  std::vector<double> sq;
  simulate(p, init, System::Ips1, 2000, 0, n_steps, 5, [&](const ParticleEnsemble& e, const MixtureField&) {
    if (e.step != n_steps) return;
    for (double x : e.positions) sq.push_back(x * x);
  });
  auto ms = mean_se(sq);
  CHECK(std::abs(ms.mean - n_steps * 0.49) <= 3 * ms.se);
}

TEST_CASE("single particle reduces to a linear recursion") {
  ModelParams p = scalar_model(0.3, 0.2, 1.0);
  p.drift.a1 = 0;
  p.drift.a2 = 1;
  p.drift.a3 = 0;
  InitialCondition init;
  const std::size_t R = 100000;
  std::vector<double> ips(R), direct(R);
  std::mt19937_64 gen(99);
  std::normal_distribution<double> z(0.0, 1.0);
  auto field = initial_field(p, init);
  for (std::size_t r = 0; r < R; ++r) {
    auto ens = initial_ensemble(p, init, 1, 1000 + r);
    ips[r] = step_ips1(ens, field, p, 1000 + r).first.positions[0];
    direct[r] = 0.5 * z(gen) + z(gen);
  }
  CHECK(ks_pvalue(ks_statistic(ips, direct), R, R) > 0.01);
}

TEST_CASE("ips2 with a large field sample matches ips1 in law") {
  ModelParams p;
  InitialCondition init;
  const std::size_t N = 4, R = 1000;
  std::vector<double> a, b;
  for (std::size_t r = 0; r < R; ++r) {
    auto e1 = initial_ensemble(p, init, N, r);
    auto f1 = initial_field(p, init);
    auto e2 = e1;
    auto f2 = f1;
    for (int n = 0; n < 2; ++n) {
      std::tie(e1, f1) = step_ips1(e1, f1, p, 7 * R + r);
      std::tie(e2, f2) = step_ips2(e2, f2, 50 * N, p, 9 * R + r);
    }
    a.push_back(e1.positions[0]);
    b.push_back(e2.positions[0]);
  }
  CHECK(ks_pvalue(ks_statistic(a, b), R, R) > 0.01);
}

TEST_CASE("ips2 component count and decoupled field") {
  ModelParams p;
  InitialCondition init;
  auto e = initial_ensemble(p, init, 10, 1);
  auto f = initial_field(p, init);
  for (int n = 0; n < 3; ++n) {
    std::tie(e, f) = step_ips2(e, f, 7, p, 1);
    CHECK(f.size() == 17);
  }
}

TEST_CASE("coupled system") {
  ModelParams p = scalar_model(0.4, 0.0, 1.0);
  InitialCondition init;
  auto x0 = initial_ensemble(p, init, 20, 2);
  auto eta0 = initial_field(p, init);
  auto cs = make_coupled_state(x0, eta0);
  CHECK(w1_exact_1d(cs.primary.view(), cs.auxiliary.view()) == 0.0);
  std::vector<double> ref{0.0};
  DiscreteMeasure mu(1, ref);
  for (long n = 0; n < 5; ++n) {
    cs = step_coupled(cs, n, mu.view(), eta0, p, 4);
    CHECK(cs.primary.positions == cs.auxiliary.positions);
  }
}

TEST_CASE("empirical measure view") {
  ParticleEnsemble e;
  e.dim = 2;
  e.positions = {1.0, 2.0, 3.0, 6.0};
  auto v = empirical_measure(e);
  auto m = mean(v);
  CHECK(m[0] == 2.0);
  CHECK(m[1] == 4.0);
  ParticleEnsemble one;
  one.positions = {1.5};
  CHECK(empirical_measure(one).size() == 1);
  CHECK(w1_exact_1d(one.view(), one.view()) == 0.0);
}

TEST_CASE("determinism and exchangeability") {
  ModelParams p;
  InitialCondition init;
  std::vector<double> run1, run2;
  for (auto* out : {&run1, &run2})
    simulate(p, init, System::Ips2, 16, 16, 5, 42, [&](const ParticleEnsemble& e, const MixtureField& f) {
      out->insert(out->end(), e.positions.begin(), e.positions.end());
      out->push_back(f.density(std::vector<double>{0.3}));
    });
  CHECK(run1 == run2);

  // Permuting particles and their noise streams together permutes the trajectory.
  const std::size_t N = 4;
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  auto ens = initial_ensemble(p, init, N, 8);
  auto field = initial_field(p, init);
  ParticleEnsemble pe = ens;
  for (std::size_t i = 0; i < N; ++i) pe.positions[i] = ens.positions[perm[i]];
  auto pfield = field;
  for (long n = 0; n < 3; ++n) {
    auto next = step_ips1(ens, field, p, 8);
    ParticleEnsemble pn = pe;
    pn.step = pe.step + 1;
    auto ctx = make_drift_context(pe.view());
    for (std::size_t i = 0; i < N; ++i) {
      std::vector<double> g(1), f(1), x{pe.positions[i]};
      pfield.gradient(x, g);
      NoiseDraw e = draw_noise(8, perm[i], pe.step, 1);
      drift_eval(p, g, ctx, x, e, f);
      pn.positions[i] = p.A(0, 0) * x[0] + p.delta * f[0] + p.noise.b * e.eps_b[0];
    }
    pfield = evolve_exact(pfield, pe.view(), p.alpha, p.P, p.Pp);
    ens = next.first;
    field = next.second;
    pe = pn;
    for (std::size_t i = 0; i < N; ++i) CHECK(pe.positions[i] == doctest::Approx(ens.positions[perm[i]]).epsilon(1e-13));
  }
}

TEST_CASE("moment stability below a0") {
  ModelParams p;
  auto r = compute_constants(p, 1.0);
  REQUIRE(r.cond_delta_a0);
  InitialCondition init;
  const double ceiling = particle_moment_ceiling(r, std::sqrt(2 / M_PI));
  std::vector<double> avgs;
  for (std::uint64_t rep = 0; rep < 8; ++rep) {
    double s = 0;
    int cnt = 0;
    simulate(p, init, System::Ips2, 64, 64, 200, rep, [&](const ParticleEnsemble& e, const MixtureField&) {
      if (e.step < 50) return;
      double m = 0;
      for (double x : e.positions) m += std::abs(x);
      s += m / e.size();
      ++cnt;
    });
    avgs.push_back(s / cnt);
  }
  auto ms = mean_se(avgs);
  CHECK(ms.mean <= ceiling + 3 * ms.se);
}

TEST_CASE("one step push-forward contraction") {
  ModelParams p;
  p.delta = 0.3;
  auto r = compute_constants(p, 1.0);
  const double factor = r.a_norm + p.delta * r.sigma * (2 + r.l_grad_alpha);
  InitialCondition init;
  std::vector<double> c{0.0}, pts(30);
  Rng rng(1);
  for (auto& v : pts) v = 3 * rng.uniform() - 1.5;
  auto field = evolve_exact(MixtureField::single(p.P, c), DiscreteMeasure(1, pts).view(), p.alpha, p.P, p.Pp);
  for (std::uint64_t rep = 0; rep < 50; ++rep) {
    auto a = initial_ensemble(p, init, 32, rep);
    auto b = initial_ensemble(p, init, 32, 1000 + rep);
    std::sort(a.positions.begin(), a.positions.end());
    std::sort(b.positions.begin(), b.positions.end());
    const double before = w1_exact_1d(a.view(), b.view());
    auto a1 = move_particles(p, a, field, a.view(), 77);
    auto b1 = move_particles(p, b, field, b.view(), 77);
    CHECK(w1_exact_1d(a1.view(), b1.view()) <= factor * before + 1e-12);
  }
}

TEST_CASE("divergence aborts with a structured error") {
  ModelParams p = scalar_model(1e300, 0.0, 1.0);
  InitialCondition init;
  init.particle_mean = {1e300};
  auto e = initial_ensemble(p, init, 2, 1);
  auto f = initial_field(p, init);
  CHECK_THROWS_AS(step_ips1(e, f, p, 1), NumericalDivergence);
}
