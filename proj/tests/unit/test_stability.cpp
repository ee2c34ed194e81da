#include <doctest.h>

#include <cmath>
#include <vector>

#include "meanfield/dynamics.hpp"
#include "meanfield/errors.hpp"
#include "meanfield/numerics.hpp"
#include "meanfield/stability.hpp"

using namespace meanfield;

TEST_CASE("contraction rate examples") {
  CHECK(contraction_rate(0.5, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(contraction_rate(0.0, 0.25) == doctest::Approx(0.5).epsilon(1e-15));
  const double t = contraction_rate(0.3, 0.2);
  CHECK(t == doctest::Approx((0.3 + std::sqrt(0.89)) / 2).epsilon(1e-15));
  CHECK(t == doctest::Approx(0.6217).epsilon(1e-4));

  // a_n = c1 a_{n-1} + c2 a_{n-2} with a_0 = a_1 = 1 stays below a prefactor times theta^n.
  std::vector<double> a{1.0, 1.0};
  for (int n = 2; n <= 50; ++n) a.push_back(0.3 * a[n - 1] + 0.2 * a[n - 2]);
  double pref = 0;
  for (int n = 0; n <= 1; ++n) pref = std::max(pref, a[n] / std::pow(t, n));
  for (int n = 0; n <= 50; ++n) CHECK(a[n] <= 1.01 * std::pow(t, n) * pref);

  Rng rng(1);
  for (int rep = 0; rep < 100; ++rep) {
    const double c1 = rng.uniform(), c2 = 1e-3 + rng.uniform();
    const double th = contraction_rate(c1, c2);
    CHECK(std::abs(c1 / th + c2 / (th * th) - 1.0) < 1e-12);
  }
}

TEST_CASE("rate exponent table") {
  auto r = rate_exponent(1, 3.0);
  CHECK(r.printed == doctest::Approx(0.75));
  CHECK(r.min_reading == doctest::Approx(0.5));
  CHECK(r.log_factor == LogFactor::None);

  auto r2 = rate_exponent(2, 1.0);
  CHECK(r2.printed == doctest::Approx(0.5));
  CHECK(r2.log_factor == LogFactor::LogSquared);

  auto r5 = rate_exponent(5, 0.25);
  CHECK(r5.printed == doctest::Approx(0.2));
  CHECK(r5.log_factor == LogFactor::Log);

  auto r1 = rate_exponent(1, 1.0);
  CHECK(r1.printed == doctest::Approx(0.5));
  CHECK(r1.log_factor == LogFactor::Log);

  auto r3 = rate_exponent(3, 0.2);
  CHECK(r3.printed == doctest::Approx(1.0 / 3));
  CHECK(r3.min_reading == doctest::Approx(0.2 / 1.2));
  CHECK(to_string(LogFactor::LogSquared) == "log^2");
}

TEST_CASE("coupling constants hand instance") {
  auto c = iid_constants(0.2, 0.05, 1.0, 0.1, 1.0, 1.0, 1.0, 1.0);
  // chi = 0.2 + 0.05 (1 + 1) = 0.3; competing max = max(0.1, 0.9) = 0.9.
  const double C1 = 0.05 * 1.0 * 1.0 * 0.9 / 0.6;
  CHECK(std::abs(c.C1 - C1) < 1e-12);
  CHECK(std::abs(c.chi1 - (0.05 * 0.9 + C1)) < 1e-12);
  CHECK(std::abs(c.chi1_proof - (0.9 + C1)) < 1e-12);

  auto z = iid_constants(0.2, 0.0, 1.0, 0.1, 1.0, 1.0, 1.0, 1.0);
  CHECK(z.C1 == 0.0);
  CHECK(z.chi1 == 0.0);

  double prev = -1;
  for (int i = 1; i <= 50; ++i) {
    const double delta = 0.002 * i;
    auto v = iid_constants(0.2, delta, 1.0, 0.1, 1.0, 1.0, 1.0, 1.0);
    CHECK(v.chi1 > prev);
    prev = v.chi1;
  }

  ModelParams p;
  p.noise.sL = 0.5;
  CHECK_THROWS_AS(iid_constants(p, INFINITY), ConstantsUnavailable);
}

TEST_CASE("drift-free constants") {
  ModelParams p;
  p.delta = 0.0;
  auto r = compute_constants(p, 1.0);
  CHECK(r.c1 == doctest::Approx(std::max(r.a_norm + p.alpha * r.l_Pp, (1 - p.alpha) * r.l_P)));
  CHECK(r.c2 == 0.0);
  CHECK(r.theta_star == doctest::Approx(r.c1));
  CHECK(r.C1 == 0.0);
  CHECK(r.chi1 == 0.0);
}

TEST_CASE("sigma") {
  ModelParams p;
  p.noise.L0 = 1;
  p.noise.sL = 0;
  p.drift.a1 = p.drift.a2 = p.drift.a3 = 1;
  CHECK(compute_constants(p, 1.0).sigma == 1.0);

  Rng rng(4);
  for (int rep = 0; rep < 4; ++rep) {
    ModelParams q;
    q.drift.a1 = 2 * rng.uniform() - 1;
    q.drift.a2 = 2 * rng.uniform() - 1;
    q.drift.a3 = 2 * rng.uniform() - 1;
    q.noise.L0 = 2 * rng.uniform() - 1;
    q.noise.sL = rng.uniform();
    q.noise.sc = rng.uniform();
    q.noise.c0 = rng.uniform();
    if (rep % 2) {
      q.drift.variant = DriftVariant::InteractionKernel;
      q.drift.l_K = rng.uniform();
    }
    const double tau = 0.5 + rng.uniform();
    auto r = compute_constants(q, tau);
    std::vector<double> a1, a1t, a2t;
    for (std::size_t i = 0; i < 400000; ++i) {
      NoiseDraw e = draw_noise(100 + rep, i, 0, 1);
      const double v = drift_a1(q, e);
      a1.push_back(v);
      a1t.push_back(std::pow(v, 1 + tau));
      a2t.push_back(std::pow(drift_a2(q, e) + q.noise.b * std::abs(e.eps_b[0]), 1 + tau));
    }
    auto m1 = mean_se(a1), m2 = mean_se(a1t), m3 = mean_se(a2t);
    CHECK(std::abs(r.sigma - m1.mean) <= 3 * m1.se);
    CHECK(std::abs(r.sigma1_tau - m2.mean) <= 3 * m2.se);
    CHECK(std::abs(r.sigma2_tau - m3.mean) <= 3 * m3.se);
  }
}

TEST_CASE("sigma2 in two dimensions") {
  ModelParams p;
  p.dim = 2;
  p.A = Eigen::MatrixXd::Identity(2, 2) * 0.2;
  p.P = p.Pp = KernelSpec::gaussian(1.0, 2);
  p.noise.c0 = 0.3;
  auto r = compute_constants(p, 1.0);
  CHECK(r.sigma_method == "closed_form");
  std::vector<double> v;
  for (std::size_t i = 0; i < 400000; ++i) {
    NoiseDraw e = draw_noise(9, i, 0, 2);
    v.push_back(std::pow(drift_a2(p, e) + std::hypot(e.eps_b[0], e.eps_b[1]), 2.0));
  }
  auto m = mean_se(v);
  CHECK(std::abs(r.sigma2_tau - m.mean) <= 3 * m.se);

  p.noise.sc = 0.4;
  auto mc = compute_constants(p, 1.0);
  CHECK(mc.sigma_method == "monte_carlo");
  CHECK(mc.sigma2_se > 0.0);
}

TEST_CASE("a0 is the small-tau limit of a(tau)") {
  ModelParams p;
  p.noise.sL = 0.3;
  auto lo = compute_constants(p, 1e-3);
  CHECK(std::pow(lo.a_tau, 1 / 1.001) == doctest::Approx(lo.a0).epsilon(1e-2));
}

TEST_CASE("flags follow from the numeric fields") {
  Rng rng(5);
  for (int rep = 0; rep < 40; ++rep) {
    ModelParams p;
    p.A = Eigen::MatrixXd::Constant(1, 1, 0.9 * rng.uniform());
    p.delta = 0.5 * rng.uniform();
    p.alpha = 0.05 + 0.9 * rng.uniform();
    p.P = KernelSpec::gaussian(0.5 + rng.uniform());
    p.Pp = rep % 3 ? KernelSpec::gaussian(0.5 + rng.uniform()) : KernelSpec::biexponential(0.5 + rng.uniform());
    const double tau = 0.2 + 2 * rng.uniform();
    auto r = compute_constants(p, tau);
    CHECK(r.cond_contraction == (r.c1 + r.c2 < 1));
    CHECK(r.cond_delta_a0 == (r.delta < r.a0));
    CHECK(r.cond_delta_atau == (r.a_tau > 0 && r.delta < std::pow(r.a_tau, 1 / (1 + tau))));
    CHECK(r.cond_moment_tau == ((1 - r.alpha) * r.m_tau_P < 1));
    CHECK((r.theta_star > 0 && r.theta_star < 1) == r.cond_contraction);
    CHECK(r.l_grad_alpha == doctest::Approx((1 - r.alpha) * r.l_grad_P + r.alpha * r.l_grad_Pp));
    CHECK(r.gamma == doctest::Approx(r.a_norm + r.delta * r.sigma * (2 + r.l_grad_alpha)));
    CHECK(r.a0 == doctest::Approx((1 - r.a_norm) / (r.sigma * (2 + r.l_grad_alpha))));
  }
}

TEST_CASE("report json") {
  ModelParams p;
  p.noise.sL = 0.2;
  auto j = compute_constants(p, 1.0).to_json();
  CHECK(j["K_bound"] == "inf");
  CHECK(j.contains("theta_star"));
  CHECK(j.contains("rate_exponent"));
  CHECK_THROWS_AS(compute_constants(p, 0.0), InputError);
  p.alpha = 1.5;
  CHECK_THROWS_AS(compute_constants(p, 1.0), ValidationError);
}

TEST_CASE("moment ceilings") {
  ModelParams p;
  auto r = compute_constants(p, 1.0);
  const double c = particle_moment_ceiling(r, 1.0);
  CHECK(std::isfinite(c));
  CHECK(c > 1.0);
  ModelParams hot;
  hot.delta = 5.0;
  CHECK(std::isinf(particle_moment_ceiling(compute_constants(hot, 1.0), 1.0)));
  CHECK(field_moment_ceiling(p, r, 1.0, 1.0, 10) > 0.0);
  ModelParams bi;
  bi.Pp = KernelSpec::biexponential(1.0);
  CHECK(std::isnan(field_moment_ceiling(bi, compute_constants(bi, 1.0), 1.0, 1.0, 10)));
}
