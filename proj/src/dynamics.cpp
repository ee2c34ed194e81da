#include "meanfield/dynamics.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "meanfield/errors.hpp"

namespace meanfield {

NoiseDraw draw_noise(std::uint64_t seed, std::size_t particle, long step, int dim, StreamTag tag) {
  Rng rng = substream(seed, tag, particle, static_cast<std::uint64_t>(step));
  std::normal_distribution<double> gauss(0.0, 1.0);
  NoiseDraw e;
  for (int k = 0; k < dim; ++k) e.eps_b[k] = gauss(rng);
  e.xi = gauss(rng);
  for (int k = 0; k < dim; ++k) e.xi_c[k] = gauss(rng);
  return e;
}

DriftContext make_drift_context(const MeasureView& mu) { return DriftContext{mu, mean(mu)}; }

namespace {

void interaction_term(const ModelParams& p, const MeasureView& mu, std::span<const double> x, std::span<double> out) {
  const int d = p.dim;
  std::array<double, kMaxDim> acc{};
  for (std::size_t j = 0; j < mu.size(); ++j) {
    auto y = mu.point(j);
    double r2 = 0.0;
    for (int k = 0; k < d; ++k) r2 += (y[k] - x[k]) * (y[k] - x[k]);
    double s = mu.weight(j) / std::sqrt(1.0 + r2);
    for (int k = 0; k < d; ++k) acc[k] += s * (y[k] - x[k]);
  }
  for (int k = 0; k < d; ++k) out[k] = p.drift.l_K * acc[k];
}

}  // namespace

void drift_eval(const ModelParams& p, std::span<const double> g, const DriftContext& ctx, std::span<const double> x,
                const NoiseDraw& eps, std::span<double> out) {
  const int d = p.dim;
  if (g.size() != std::size_t(d) || x.size() != std::size_t(d) || out.size() != std::size_t(d) ||
      ctx.mean.size() != std::size_t(d))
    throw InputError("drift_eval: dimension mismatch");
  const double L = p.noise.L0 + p.noise.sL * eps.xi;
  for (int k = 0; k < d; ++k) {
    double h = p.drift.a1 * g[k] + p.drift.a2 * ctx.mean[k] + p.drift.a3 * x[k];
    out[k] = L * h + p.noise.c0 + p.noise.sc * eps.xi_c[k];
  }
  if (p.drift.variant == DriftVariant::InteractionKernel && p.drift.l_K != 0.0) {
    std::array<double, kMaxDim> extra{};
    interaction_term(p, ctx.mu, x, std::span(extra.data(), d));
    for (int k = 0; k < d; ++k) out[k] += extra[k];
  }
}

void drift_eval(const ModelParams& p, std::span<const double> g, const MeasureView& mu, std::span<const double> x,
                const NoiseDraw& eps, std::span<double> out) {
  drift_eval(p, g, make_drift_context(mu), x, eps, out);
}

ParticleEnsemble move_particles(const ModelParams& p, const ParticleEnsemble& ens, const MixtureField& field,
                                const MeasureView& mu, std::uint64_t seed, StreamTag tag) {
  const int d = p.dim;
  if (ens.dim != d || field.dim() != d || mu.dim != d) throw InputError("move_particles: dimension mismatch");
  const std::size_t n = ens.size();
  ParticleEnsemble out;
  out.dim = d;
  out.step = ens.step + 1;
  out.positions.resize(ens.positions.size());
  DriftContext ctx = make_drift_context(mu);
  std::array<double, kMaxDim> g{}, f{};
  for (std::size_t i = 0; i < n; ++i) {
    auto x = ens.particle(i);
    NoiseDraw e = draw_noise(seed, i, ens.step, d, tag);
    if (p.delta != 0.0) {
      field.gradient(x, std::span(g.data(), d));
      drift_eval(p, std::span<const double>(g.data(), d), ctx, x, e, std::span(f.data(), d));
    }
    double* y = out.positions.data() + i * d;
    for (int r = 0; r < d; ++r) {
      double ax = 0.0;
      for (int c = 0; c < d; ++c) ax += p.A(r, c) * x[c];
      y[r] = ax + (p.delta != 0.0 ? p.delta * f[r] : 0.0) + p.noise.b * e.eps_b[r];
      if (!std::isfinite(y[r])) throw NumericalDivergence(out.step, "particle " + std::to_string(i));
    }
  }
  return out;
}

GaussianLaw conditional_law_1d(const ModelParams& p, double g, const DriftContext& ctx, double x) {
  if (p.dim != 1) throw InputError("conditional_law_1d requires d = 1");
  const double a = p.A(0, 0);
  double h = p.drift.a1 * g + p.drift.a2 * ctx.mean[0] + p.drift.a3 * x;
  double extra = 0.0;
  if (p.drift.variant == DriftVariant::InteractionKernel && p.drift.l_K != 0.0)
    interaction_term(p, ctx.mu, std::span(&x, 1), std::span(&extra, 1));
  GaussianLaw law;
  law.mean = a * x + p.delta * (p.noise.L0 * h + p.noise.c0 + extra);
  law.var = p.delta * p.delta * (p.noise.sL * p.noise.sL * h * h + p.noise.sc * p.noise.sc) + p.noise.b * p.noise.b;
  return law;
}

std::pair<ParticleEnsemble, MixtureField> step_ips1(const ParticleEnsemble& ens, const MixtureField& field,
                                                    const ModelParams& p, std::uint64_t seed) {
  MeasureView mu = ens.view();
  ParticleEnsemble next = move_particles(p, ens, field, mu, seed);
  MixtureField eta = evolve_exact(field, mu, p.alpha, p.P, p.Pp);
  return {std::move(next), std::move(eta)};
}

std::pair<ParticleEnsemble, MixtureField> step_ips2(const ParticleEnsemble& ens, const MixtureField& field,
                                                    std::size_t M, const ModelParams& p, std::uint64_t seed) {
  MeasureView mu = ens.view();
  ParticleEnsemble next = move_particles(p, ens, field, mu, seed);
  Rng rng = substream(seed, StreamTag::kFieldSampling, 0, static_cast<std::uint64_t>(ens.step));
  FieldSample s = subsample(field, M, rng, ens.step);
  MixtureField eta = evolve_sampled(s, mu, p.alpha, p.P, p.Pp);
  return {std::move(next), std::move(eta)};
}

ParticleEnsemble initial_ensemble(const ModelParams& p, const InitialCondition& init, std::size_t N,
                                  std::uint64_t seed) {
  if (N == 0) throw InputError("N must be >= 1");
  if (init.particle_mean.size() != std::size_t(p.dim)) throw InputError("init particle mean has wrong dimension");
  ParticleEnsemble e;
  e.dim = p.dim;
  e.positions.resize(N * p.dim);
  for (std::size_t i = 0; i < N; ++i) {
    Rng rng = substream(seed, StreamTag::kInitialPositions, i);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int k = 0; k < p.dim; ++k)
      e.positions[i * p.dim + k] = init.particle_mean[k] + (init.particle_std > 0.0 ? init.particle_std * gauss(rng) : 0.0);
  }
  return e;
}

MixtureField initial_field(const ModelParams& p, const InitialCondition& init) {
  if (init.field_center.size() != std::size_t(p.dim)) throw InputError("init field center has wrong dimension");
  return MixtureField::single(KernelSpec::gaussian(init.field_bandwidth, p.dim), init.field_center);
}

CoupledState make_coupled_state(const ParticleEnsemble& x0, const MixtureField& eta0) {
  return CoupledState{x0, x0, eta0};
}

CoupledState step_coupled(const CoupledState& cs, long ref_step, const MeasureView& mu_n, const MixtureField& eta_n,
                          const ModelParams& p, std::uint64_t seed) {
  if (cs.primary.step != cs.auxiliary.step || cs.primary.size() != cs.auxiliary.size())
    throw InputError("coupled ensembles are out of sync");
  if (ref_step != cs.primary.step)
    throw InputError("limit reference step " + std::to_string(ref_step) + " does not match coupled state step " +
                     std::to_string(cs.primary.step));
  auto [x, field] = step_ips1(cs.primary, cs.field, p, seed);
  ParticleEnsemble y = move_particles(p, cs.auxiliary, eta_n, mu_n, seed);
  return CoupledState{std::move(x), std::move(y), std::move(field)};
}

void write_trajectory_header(std::ostream& os, int dim) {
  os << "step,particle";
  for (int k = 0; k < dim; ++k) os << ",coord" << k;
  os << '\n';
}

void write_trajectory_rows(std::ostream& os, const ParticleEnsemble& ens) {
  char buf[40];
  for (std::size_t i = 0; i < ens.size(); ++i) {
    os << ens.step << ',' << i;
    for (int k = 0; k < ens.dim; ++k) {
      std::snprintf(buf, sizeof buf, ",%.17g", ens.positions[i * ens.dim + k]);
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace meanfield
