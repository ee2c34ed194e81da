#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meanfield/field.hpp"
#include "meanfield/measure.hpp"
#include "meanfield/model.hpp"

namespace meanfield {

enum class LimitMethod { Ensemble, QuantileGrid };

std::string to_string(LimitMethod m);
LimitMethod limit_method_from_string(const std::string& s);

struct LimitOptions {
  LimitMethod method = LimitMethod::QuantileGrid;
  // Quantile nodes G, or ensemble size N_ref.
  std::size_t nodes = 1024;
  // Field component budget after each step.
  std::size_t budget = 4096;
  std::uint64_t seed = 0;
};

struct LimitState {
  DiscreteMeasure mu;
  MixtureField eta{1};
  long step = 0;
};

// Quantile grid: G midpoint quantiles of N(mean, std^2); ensemble: N_ref draws.
LimitState limit_initial(const ModelParams& p, const InitialCondition& init, const LimitOptions& opt);

// One application of Psi: mu+ = mu Q^{eta, mu}, eta+ = eta R^alpha_mu.
LimitState psi_step(const LimitState& s, const ModelParams& p, const LimitOptions& opt);

struct LimitTrajectory {
  std::vector<LimitState> states;
  LimitOptions options;
};
LimitTrajectory run_limit(const ModelParams& p, const InitialCondition& init, long n_steps, const LimitOptions& opt);
LimitTrajectory run_limit(const ModelParams& p, LimitState start, long n_steps, const LimitOptions& opt);

// W1(mu, mu') + W1(eta, eta').
double limit_distance(const LimitState& a, const LimitState& b);
double measure_distance(const DiscreteMeasure& a, const DiscreteMeasure& b);
double field_distance(const MixtureField& a, const MixtureField& b);

struct FixedPointReport {
  bool converged = false;
  long iterations = 0;
  std::vector<double> distances;
  double fitted_rate = 0.0;
  bool contraction_warning = false;
};

struct FixedPointResult {
  LimitState state;
  FixedPointReport report;
};

// Iterates psi_step until the step-to-step distance drops below tol.
// c1_plus_c2 >= 1 sets contraction_warning.
FixedPointResult iterate_to_fixed_point(const ModelParams& p, LimitState init, double tol, long max_iter,
                                        const LimitOptions& opt, double c1_plus_c2 = 0.0);

// Quantiles at levels (k + 1/2) / G of the mixture (1/n) sum_j N(m_j, v_j).
std::vector<double> gaussian_mixture_quantiles(const std::vector<double>& means, const std::vector<double>& vars,
                                               std::size_t G);

// Geometric rate exp(slope) of log(dist) against step over entries above floor.
double fit_geometric_rate(const std::vector<double>& dist, double floor, std::size_t first = 0);

}  // namespace meanfield
