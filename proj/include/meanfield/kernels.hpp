#pragma once

#include <span>
#include <string>

#include "meanfield/rng.hpp"

namespace meanfield {

enum class KernelFamily { Gaussian, BiExponential };

std::string to_string(KernelFamily f);
KernelFamily family_from_string(const std::string& s);

struct KernelSpec {
  KernelFamily family = KernelFamily::Gaussian;
  double bandwidth = 1.0;
  int dim = 1;

  static KernelSpec gaussian(double bandwidth, int dim = 1);
  static KernelSpec biexponential(double bandwidth);

  // Throws InputError on a non-positive bandwidth, dim < 1, or a
  // bi-exponential kernel outside d = 1.
  void validate() const;

  bool operator==(const KernelSpec&) const = default;
};

// h1, h2, h3 of the exponential-moment assumption:
// int e^{a|y|} P(x, dy) <= exp(a h1(|x|) + h2(a) + h3(a)).
struct ExpMomentParams {
  KernelFamily family = KernelFamily::Gaussian;
  double bandwidth = 1.0;
  double h1_slope = 1.0;
  double h1_at_zero = 0.0;
  // Exclusive upper limit on a; infinity for Gaussian kernels.
  double alpha1_max = 0.0;

  double h2(double alpha1) const;
  double h3(double alpha1) const;
  // Root of a|h1(0)| + h2(a) = -log(1 - alpha).
  double alpha_star(double alpha) const;
};

struct KernelConstants {
  double lip_pushforward = 1.0;
  double lip_grad = 0.0;
  double grad_growth = 0.0;
  double grad_at_zero = 0.0;
  // True when grad_density is discontinuous (bi-exponential kink); lip_grad
  // is then the supremum of the second derivative away from the kink.
  bool grad_kink = false;
  ExpMomentParams exp_moment;
};

double density(const KernelSpec& k, std::span<const double> x, std::span<const double> y);
void grad_density(const KernelSpec& k, std::span<const double> x, std::span<const double> y, std::span<double> out);
void sample(const KernelSpec& k, std::span<const double> x, Rng& rng, std::span<double> out);

KernelConstants compute_constants(const KernelSpec& k);

// E e^{alpha1 |Y|}, Y ~ P(x, .), d = 1.
double exp_moment(const KernelSpec& k, double x, double alpha1);

// E |Y|^{1+tau}, Y ~ P(x, .), with |x| = r.
double abs_moment_1ptau(const KernelSpec& k, double r, double tau);

// m_tau(P) = max(1, sup_x E|Y|^{1+tau} / (1 + |x|^{1+tau})).
double moment_1ptau(const KernelSpec& k, double tau);

// Immutable kernel with cached constants.
class Kernel {
 public:
  Kernel() : Kernel(KernelSpec{}) {}
  explicit Kernel(KernelSpec spec);

  const KernelSpec& spec() const { return spec_; }
  const KernelConstants& constants() const { return constants_; }
  KernelFamily family() const { return spec_.family; }
  double bandwidth() const { return spec_.bandwidth; }
  int dim() const { return spec_.dim; }

  double density(std::span<const double> x, std::span<const double> y) const {
    return meanfield::density(spec_, x, y);
  }
  void grad_density(std::span<const double> x, std::span<const double> y, std::span<double> out) const {
    meanfield::grad_density(spec_, x, y, out);
  }
  void sample(std::span<const double> x, Rng& rng, std::span<double> out) const {
    meanfield::sample(spec_, x, rng, out);
  }

 private:
  KernelSpec spec_;
  KernelConstants constants_;
};

}  // namespace meanfield
