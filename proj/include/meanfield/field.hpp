#pragma once

#include <cstddef>
#include <json.hpp>
#include <span>
#include <vector>

#include "meanfield/kernels.hpp"
#include "meanfield/measure.hpp"
#include "meanfield/rng.hpp"

namespace meanfield {

inline constexpr double kWeightFloor = 1e-15;

// Finite kernel mixture sum_i w_i P_i(c_i, .).
class MixtureField {
 public:
  explicit MixtureField(int dim = 1);
  static MixtureField single(const KernelSpec& k, std::span<const double> center);

  // Appends a component without renormalizing.
  void add(double w, std::span<const double> center, KernelFamily family, double bandwidth);
  void reserve(std::size_t n);
  // Drops weights below kWeightFloor and rescales to total mass 1.
  void normalize();

  int dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }
  double weight(std::size_t i) const { return weights_[i]; }
  std::span<const double> center(std::size_t i) const { return {centers_.data() + i * dim_, std::size_t(dim_)}; }
  KernelFamily family(std::size_t i) const { return families_[i]; }
  double bandwidth(std::size_t i) const { return bandwidths_[i]; }
  KernelSpec kernel(std::size_t i) const { return KernelSpec{families_[i], bandwidths_[i], dim_}; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& centers() const { return centers_; }
  const std::vector<double>& bandwidths() const { return bandwidths_; }
  bool all_gaussian() const;

  double density(std::span<const double> y) const;
  void gradient(std::span<const double> y, std::span<double> out) const;
  // Gradient at each row of points (n x dim) into out (n x dim).
  void gradients(std::span<const double> points, std::span<double> out) const;
  // d = 1 only.
  double cdf(double y) const;

  double total_weight() const;
  // Throws InputError if any invariant fails.
  void validate() const;

  nlohmann::json to_json() const;
  static MixtureField from_json(const nlohmann::json& j);

  bool operator==(const MixtureField& o) const;

 private:
  int dim_;
  std::vector<double> weights_;
  std::vector<double> centers_;
  std::vector<double> bandwidths_;
  std::vector<KernelFamily> families_;
  // w_i times the kernel normalizing constant, and 1 / bandwidth^2.
  std::vector<double> coef_;
  std::vector<double> ivar_;
};

struct FieldSample {
  int dim = 1;
  std::vector<double> points;
  long source_step = 0;
  std::size_t size() const { return points.size() / dim; }
};

MixtureField evolve_exact(const MixtureField& f, const MeasureView& mu, double alpha, const KernelSpec& P,
                          const KernelSpec& Pp);
FieldSample subsample(const MixtureField& f, std::size_t M, Rng& rng, long step = 0);
MixtureField evolve_sampled(const FieldSample& s, const MeasureView& mu, double alpha, const KernelSpec& P,
                            const KernelSpec& Pp);
// Closed-form expansion of eta_{k+1} from eta_0 and mu_0..mu_k.
MixtureField expansion_reference(const MixtureField& eta0, const std::vector<DiscreteMeasure>& mus, double alpha,
                                 const KernelSpec& P, const KernelSpec& Pp);

// <|x|, f> and <|x|^{1+tau}, f>.
double first_moment(const MixtureField& f);
double moment_1ptau(const MixtureField& f, double tau);

// Multinomial resampling of components down to at most M (duplicates merged).
MixtureField compact(const MixtureField& f, std::size_t M, Rng& rng);
// Deterministic reduction to at most `budget` components. Gaussian d = 1
// fields use moment-preserving merges of neighbours with similar bandwidth;
// other fields use systematic resampling with a fixed offset.
MixtureField merge_compact(const MixtureField& f, std::size_t budget);

}  // namespace meanfield
