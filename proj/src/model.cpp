#include "meanfield/model.hpp"

#include <cmath>
#include <string>

#include "meanfield/errors.hpp"

namespace meanfield {

double spectral_norm(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols() || A.rows() == 0) throw InputError("A must be a non-empty square matrix");
  const Eigen::Index d = A.rows();
  double diag = A(0, 0);
  if ((A - diag * Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() == 0.0) return std::abs(diag);
  Eigen::MatrixXd G = A.transpose() * A;
  Eigen::VectorXd v = Eigen::VectorXd::Ones(d) / std::sqrt(double(d));
  double lambda = 0.0;
  for (int it = 0; it < 100000; ++it) {
    Eigen::VectorXd w = G * v;
    double n = w.norm();
    if (n == 0.0) return 0.0;
    w /= n;
    double next = w.dot(G * w);
    bool done = std::abs(next - lambda) <= 1e-10 * std::max(1.0, next) && (w - v).norm() < 1e-8;
    v = w;
    lambda = next;
    if (done) break;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

double ModelParams::a_norm() const { return spectral_norm(A); }

void ModelParams::validate() const {
  std::vector<std::string> problems;
  if (dim < 1 || dim > kMaxDim) problems.push_back("dim must lie in [1, " + std::to_string(kMaxDim) + "]");
  if (A.rows() != dim || A.cols() != dim) problems.push_back("A must be dim x dim");
  else if (!A.allFinite()) problems.push_back("A must be finite");
  if (!(delta >= 0.0) || !std::isfinite(delta)) problems.push_back("delta >= 0");
  if (!(alpha > 0.0 && alpha < 1.0)) problems.push_back("alpha ∈ (0,1)");
  if (!(P.bandwidth > 0.0) || !std::isfinite(P.bandwidth)) problems.push_back("P.bandwidth (lambda) > 0");
  if (!(Pp.bandwidth > 0.0) || !std::isfinite(Pp.bandwidth)) problems.push_back("P_prime.bandwidth (lambda) > 0");
  if (P.dim != dim || Pp.dim != dim) problems.push_back("kernel dim must equal model dim");
  if (dim != 1 && (P.family == KernelFamily::BiExponential || Pp.family == KernelFamily::BiExponential))
    problems.push_back("bi-exponential kernels require dim = 1");
  if (!(noise.b >= 0.0)) problems.push_back("noise.b >= 0");
  if (!(noise.sL >= 0.0)) problems.push_back("noise.sL >= 0");
  if (!(noise.sc >= 0.0)) problems.push_back("noise.sc >= 0");
  if (!(drift.l_K >= 0.0)) problems.push_back("drift.l_K >= 0");
  if (drift.variant == DriftVariant::LinearMeanField && drift.l_K != 0.0)
    problems.push_back("drift.l_K requires variant interaction_kernel");
  for (double v : {drift.a1, drift.a2, drift.a3, noise.L0, noise.c0})
    if (!std::isfinite(v)) {
      problems.push_back("drift and noise coefficients must be finite");
      break;
    }
  if (!problems.empty()) throw ValidationError(problems);
}

double drift_a1(const ModelParams& p, const NoiseDraw& e) {
  double amax = std::max({std::abs(p.drift.a1), std::abs(p.drift.a2), std::abs(p.drift.a3)});
  double L = p.noise.L0 + p.noise.sL * e.xi;
  double a1 = std::abs(L) * amax;
  if (p.drift.variant == DriftVariant::InteractionKernel) a1 += p.drift.l_K;
  return a1;
}

double drift_a2(const ModelParams& p, const NoiseDraw& e) {
  double s = 0.0;
  for (int k = 0; k < p.dim; ++k) {
    double c = p.noise.c0 + p.noise.sc * e.xi_c[k];
    s += c * c;
  }
  return std::sqrt(s);
}

}  // namespace meanfield
