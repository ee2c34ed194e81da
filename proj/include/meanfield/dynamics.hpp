#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "meanfield/field.hpp"
#include "meanfield/measure.hpp"
#include "meanfield/model.hpp"
#include "meanfield/rng.hpp"

namespace meanfield {

struct ParticleEnsemble {
  int dim = 1;
  std::vector<double> positions;
  long step = 0;

  std::size_t size() const { return positions.size() / dim; }
  std::span<const double> particle(std::size_t i) const { return {positions.data() + i * dim, std::size_t(dim)}; }
  MeasureView view() const { return MeasureView{dim, positions, {}}; }
};

inline MeasureView empirical_measure(const ParticleEnsemble& e) { return e.view(); }

// Noise for particle i at the transition step -> step + 1.
NoiseDraw draw_noise(std::uint64_t seed, std::size_t particle, long step, int dim,
                     StreamTag tag = StreamTag::kParticleNoise);

struct DriftContext {
  MeasureView mu;
  std::vector<double> mean;
};
DriftContext make_drift_context(const MeasureView& mu);

void drift_eval(const ModelParams& p, std::span<const double> g, const DriftContext& ctx, std::span<const double> x,
                const NoiseDraw& eps, std::span<double> out);
void drift_eval(const ModelParams& p, std::span<const double> g, const MeasureView& mu, std::span<const double> x,
                const NoiseDraw& eps, std::span<double> out);

// X+ = A x + delta f(grad field(x), mu, x, eps) + B(eps) for every particle,
// with eps_i keyed by (seed, tag, i, ens.step).
ParticleEnsemble move_particles(const ModelParams& p, const ParticleEnsemble& ens, const MixtureField& field,
                                const MeasureView& mu, std::uint64_t seed,
                                StreamTag tag = StreamTag::kParticleNoise);

// Conditional law of X+ given x in d = 1: N(mean, var).
struct GaussianLaw {
  double mean = 0.0;
  double var = 0.0;
};
GaussianLaw conditional_law_1d(const ModelParams& p, double g, const DriftContext& ctx, double x);

std::pair<ParticleEnsemble, MixtureField> step_ips1(const ParticleEnsemble& ens, const MixtureField& field,
                                                    const ModelParams& p, std::uint64_t seed);
std::pair<ParticleEnsemble, MixtureField> step_ips2(const ParticleEnsemble& ens, const MixtureField& field,
                                                    std::size_t M, const ModelParams& p, std::uint64_t seed);

ParticleEnsemble initial_ensemble(const ModelParams& p, const InitialCondition& init, std::size_t N,
                                  std::uint64_t seed);
MixtureField initial_field(const ModelParams& p, const InitialCondition& init);

struct CoupledState {
  ParticleEnsemble primary;    // X, interacting system
  ParticleEnsemble auxiliary;  // Y, driven by the limit trajectory
  MixtureField field;          // field of the X system
};

CoupledState make_coupled_state(const ParticleEnsemble& x0, const MixtureField& eta0);
// Advances X by IPS1 and Y with (mu_n, eta_n) of the limit, both using the
// same eps_i. ref_step must equal the state's step.
CoupledState step_coupled(const CoupledState& cs, long ref_step, const MeasureView& mu_n, const MixtureField& eta_n,
                          const ModelParams& p, std::uint64_t seed);

enum class System { Ips1, Ips2 };

// Runs n_steps and calls observe(ensemble, field) at every step including 0.
template <class Observer>
void simulate(const ModelParams& p, const InitialCondition& init, System sys, std::size_t N, std::size_t M,
              long n_steps, std::uint64_t seed, Observer&& observe) {
  ParticleEnsemble ens = initial_ensemble(p, init, N, seed);
  MixtureField field = initial_field(p, init);
  observe(ens, field);
  for (long n = 0; n < n_steps; ++n) {
    auto next = sys == System::Ips1 ? step_ips1(ens, field, p, seed) : step_ips2(ens, field, M, p, seed);
    ens = std::move(next.first);
    field = std::move(next.second);
    observe(ens, field);
  }
}

void write_trajectory_header(std::ostream& os, int dim);
void write_trajectory_rows(std::ostream& os, const ParticleEnsemble& ens);

}  // namespace meanfield
