#include "meanfield/limit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "meanfield/dynamics.hpp"
#include "meanfield/errors.hpp"
#include "meanfield/numerics.hpp"
#include "meanfield/transport.hpp"

namespace meanfield {

std::string to_string(LimitMethod m) { return m == LimitMethod::Ensemble ? "ensemble" : "quantile_grid"; }

LimitMethod limit_method_from_string(const std::string& s) {
  if (s == "ensemble") return LimitMethod::Ensemble;
  if (s == "quantile_grid") return LimitMethod::QuantileGrid;
  throw InputError("unknown limit method '" + s + "'");
}

std::vector<double> gaussian_mixture_quantiles(const std::vector<double>& means, const std::vector<double>& vars,
                                               std::size_t G) {
  const std::size_t n = means.size();
  if (n == 0 || vars.size() != n || G == 0) throw InputError("gaussian_mixture_quantiles: bad input");
  std::vector<double> out(G);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return means[a] < means[b]; });
  std::vector<double> m(n), s(n), is(n);
  double smax = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    m[k] = means[order[k]];
    s[k] = std::sqrt(std::max(vars[order[k]], 0.0));
    is[k] = s[k] > 0.0 ? 1.0 / s[k] : 0.0;
    smax = std::max(smax, s[k]);
  }
  if (smax == 0.0) {
    for (std::size_t k = 0; k < G; ++k) out[k] = m[std::min(n - 1, (2 * k + 1) * n / (2 * G))];
    return out;
  }
  const double cut = 9.0;
  // F and its density, skipping components far from y.
  auto eval = [&](double y, double& F, double& f) {
    std::size_t lo = std::lower_bound(m.begin(), m.end(), y - cut * smax) - m.begin();
    std::size_t hi = std::upper_bound(m.begin(), m.end(), y + cut * smax) - m.begin();
    double sf = double(lo), sp = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
      if (s[k] > 0.0) {
        double z = (y - m[k]) * is[k];
        sf += normal_cdf(z);
        sp += normal_pdf(z) * is[k];
      } else if (y >= m[k]) {
        sf += 1.0;
      }
    }
    F = sf / n;
    f = sp / n;
  };
  double lo_b = m.front() - 12.0 * smax, hi_b = m.back() + 12.0 * smax;
  double x = m[std::min(n - 1, n / (2 * G))];
  for (std::size_t k = 0; k < G; ++k) {
    const double u = (k + 0.5) / G;
    double a = k == 0 ? lo_b : out[k - 1], b = hi_b;
    x = std::clamp(x, a, b);
    double f = 0.0;
    for (int it = 0; it < 100; ++it) {
      double F;
      eval(x, F, f);
      double r = F - u;
      if (r < 0) a = std::max(a, x);
      else b = std::min(b, x);
      if (std::abs(r) < 1e-15 || b - a < 1e-14 * std::max(1.0, std::abs(x))) break;
      double next = f > 0.0 ? x - r / f : 0.5 * (a + b);
      bool newton = next > a && next < b;
      if (!newton) next = 0.5 * (a + b);
      double step = std::abs(next - x);
      x = next;
      // Quadratic convergence: the remaining error is far below the step.
      if (newton && step < 1e-9 * std::max(1.0, std::abs(x))) break;
    }
    out[k] = x;
    if (f > 0.0) x += (1.0 / G) / f;
  }
  return out;
}

LimitState limit_initial(const ModelParams& p, const InitialCondition& init, const LimitOptions& opt) {
  LimitState s;
  s.eta = initial_field(p, init);
  s.step = 0;
  if (opt.method == LimitMethod::QuantileGrid) {
    if (p.dim != 1) throw UnsupportedError("quantile_grid limit method requires d = 1");
    std::vector<double> pts(opt.nodes);
    for (std::size_t k = 0; k < opt.nodes; ++k)
      pts[k] = init.particle_mean[0] + init.particle_std * normal_quantile((k + 0.5) / opt.nodes);
    s.mu = DiscreteMeasure::uniform(1, std::move(pts));
  } else {
    ParticleEnsemble e = initial_ensemble(p, init, opt.nodes, opt.seed ^ 0x5bd1e995ULL);
    s.mu = DiscreteMeasure::uniform(p.dim, std::move(e.positions));
  }
  return s;
}

LimitState psi_step(const LimitState& s, const ModelParams& p, const LimitOptions& opt) {
  LimitState out;
  out.step = s.step + 1;
  MeasureView mu = s.mu.view();
  if (opt.method == LimitMethod::QuantileGrid) {
    if (p.dim != 1) throw UnsupportedError("quantile_grid limit method requires d = 1");
    const std::size_t n = s.mu.size();
    DriftContext ctx = make_drift_context(mu);
    std::vector<double> means(n), vars(n);
    for (std::size_t j = 0; j < n; ++j) {
      double x = s.mu.points[j], g = 0.0;
      if (p.delta != 0.0) s.eta.gradient(std::span(&x, 1), std::span(&g, 1));
      GaussianLaw law = conditional_law_1d(p, g, ctx, x);
      if (!s.mu.weights.empty())
        throw UnsupportedError("quantile_grid limit method expects an equal-weight node measure");
      means[j] = law.mean;
      vars[j] = law.var;
    }
    out.mu = DiscreteMeasure::uniform(1, gaussian_mixture_quantiles(means, vars, opt.nodes));
    for (double v : out.mu.points)
      if (!std::isfinite(v)) throw NumericalDivergence(out.step, "limit quantile node");
  } else {
    ParticleEnsemble e;
    e.dim = p.dim;
    e.step = s.step;
    e.positions = s.mu.points;
    if (!s.mu.weights.empty()) throw UnsupportedError("ensemble limit method expects an equal-weight measure");
    ParticleEnsemble next = move_particles(p, e, s.eta, mu, opt.seed, StreamTag::kLimitEnsemble);
    out.mu = DiscreteMeasure::uniform(p.dim, std::move(next.positions));
  }
  out.eta = merge_compact(evolve_exact(s.eta, mu, p.alpha, p.P, p.Pp), opt.budget);
  return out;
}

LimitTrajectory run_limit(const ModelParams& p, LimitState start, long n_steps, const LimitOptions& opt) {
  LimitTrajectory t;
  t.options = opt;
  t.states.reserve(n_steps + 1);
  t.states.push_back(std::move(start));
  for (long n = 0; n < n_steps; ++n) t.states.push_back(psi_step(t.states.back(), p, opt));
  return t;
}

LimitTrajectory run_limit(const ModelParams& p, const InitialCondition& init, long n_steps, const LimitOptions& opt) {
  return run_limit(p, limit_initial(p, init, opt), n_steps, opt);
}

double measure_distance(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  if (a.dim == 1) return w1_exact_1d(a.view(), b.view());
  if (a.size() + b.size() <= kAssignmentBudget) return w1_exact_assignment(a.view(), b.view());
  return w1_dyadic(a.view(), b.view(), 12, 60 / a.dim > 16 ? 16 : 60 / a.dim, true).bound;
}

double field_distance(const MixtureField& a, const MixtureField& b) {
  if (a.dim() == 1) return w1_mixture_1d(a, b, 1001);
  const std::size_t n = 4096;
  Rng ra(0x1234), rb(0x1234);
  FieldSample sa = subsample(a, n, ra), sb = subsample(b, n, rb);
  return measure_distance(DiscreteMeasure::uniform(a.dim(), sa.points), DiscreteMeasure::uniform(b.dim(), sb.points));
}

double limit_distance(const LimitState& a, const LimitState& b) {
  return measure_distance(a.mu, b.mu) + field_distance(a.eta, b.eta);
}

double fit_geometric_rate(const std::vector<double>& dist, double floor, std::size_t first) {
  std::vector<double> x, y;
  for (std::size_t n = first; n < dist.size(); ++n) {
    if (!(dist[n] > floor)) break;
    x.push_back(double(n));
    y.push_back(std::log(dist[n]));
  }
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  return std::exp(fit_line(x, y).slope);
}

FixedPointResult iterate_to_fixed_point(const ModelParams& p, LimitState init, double tol, long max_iter,
                                        const LimitOptions& opt, double c1_plus_c2) {
  FixedPointResult r;
  r.report.contraction_warning = c1_plus_c2 >= 1.0;
  LimitState cur = std::move(init);
  for (long it = 0; it < max_iter; ++it) {
    LimitState next = psi_step(cur, p, opt);
    double dist = limit_distance(cur, next);
    r.report.distances.push_back(dist);
    r.report.iterations = it + 1;
    cur = std::move(next);
    if (dist < tol) {
      r.report.converged = true;
      break;
    }
  }
  r.report.fitted_rate = fit_geometric_rate(r.report.distances, 0.0);
  r.state = std::move(cur);
  return r;
}

}  // namespace meanfield
