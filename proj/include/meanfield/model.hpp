#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "meanfield/kernels.hpp"
#include "meanfield/measure.hpp"

namespace meanfield {

inline constexpr int kMaxDim = 16;

enum class DriftVariant { LinearMeanField, InteractionKernel };

// f(g, mu, x, eps) = L(eps) (a1 g + a2 mean(mu) + a3 x) + c(eps)
//                    [+ (1/N) sum_j K(x, X_j) for InteractionKernel]
// with K(x, y) = l_K (y - x) / sqrt(1 + |y - x|^2).
struct DriftSpec {
  DriftVariant variant = DriftVariant::LinearMeanField;
  double a1 = 1.0;
  double a2 = 1.0;
  double a3 = 0.0;
  double l_K = 0.0;
};

// eps = (eps_B, xi, xi_c) i.i.d. standard normal, B(eps) = b eps_B,
// L(eps) = L0 + sL xi, c(eps) = c0 + sc xi_c (componentwise).
struct NoiseSpec {
  double b = 1.0;
  double L0 = 1.0;
  double sL = 0.0;
  double c0 = 0.0;
  double sc = 0.0;
};

struct NoiseDraw {
  std::array<double, kMaxDim> eps_b{};
  double xi = 0.0;
  std::array<double, kMaxDim> xi_c{};
};

struct ModelParams {
  int dim = 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Constant(1, 1, 0.2);
  double delta = 0.1;
  double alpha = 0.3;
  DriftSpec drift;
  NoiseSpec noise;
  KernelSpec P = KernelSpec::gaussian(1.0, 1);
  KernelSpec Pp = KernelSpec::gaussian(1.0, 1);

  // Throws ValidationError listing every violated constraint.
  void validate() const;
  double a_norm() const;
};

// Spectral norm by power iteration on A^T A (tolerance 1e-10); multiples of
// the identity are returned directly.
double spectral_norm(const Eigen::MatrixXd& A);

// Lipschitz bound A1(eps) and offset A2(eps) = |f(0, delta_0, 0, eps)|.
double drift_a1(const ModelParams& p, const NoiseDraw& e);
double drift_a2(const ModelParams& p, const NoiseDraw& e);

struct InitialCondition {
  std::vector<double> particle_mean{0.0};
  double particle_std = 1.0;
  std::vector<double> field_center{0.0};
  double field_bandwidth = 1.0;
};

}  // namespace meanfield
