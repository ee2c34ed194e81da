#include "meanfield/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "meanfield/config.hpp"
#include "meanfield/errors.hpp"
#include "meanfield/numerics.hpp"
#include "meanfield/parallel.hpp"
#include "meanfield/stability.hpp"
#include "meanfield/transport.hpp"

namespace meanfield {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInfinity = std::numeric_limits<double>::infinity();

std::uint64_t cell_seed(std::uint64_t seed, std::uint64_t cell, std::uint64_t rep) {
  return hash_key({seed, static_cast<std::uint64_t>(StreamTag::kReplication), cell, rep});
}

ExperimentResult start(const std::string& name, const ExperimentConfig& cfg, std::vector<std::string> columns) {
  ExperimentResult r;
  r.name = name;
  r.columns = std::move(columns);
  r.seed = cfg.seed;
  r.config_hash = fnv1a(to_json(cfg).dump());
  return r;
}

void require_dim1(const ExperimentConfig& cfg, const char* what) {
  if (cfg.params.dim != 1) throw UnsupportedError(std::string(what) + " requires d = 1");
}

nlohmann::json num(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

// Mean and SE of per-replication slopes of y against x.
MeanSe trend(const std::vector<std::vector<double>>& series, const std::vector<double>& x) {
  std::vector<double> slopes;
  for (const auto& y : series) slopes.push_back(fit_line(x, y).slope);
  return mean_se(slopes);
}

// Reference grid for repeated field distances against the limit field.
CdfGrid reference_grid(const MixtureField& eta) {
  auto [lo, hi] = mixture_range_1d(eta);
  return tabulate_cdf(eta, lo - 3.0, hi + 3.0, 1201);
}

LimitOptions half_nodes(LimitOptions opt) {
  opt.nodes = std::max<std::size_t>(opt.nodes / 2, 2);
  opt.budget = std::max<std::size_t>(opt.budget / 2, 16);
  return opt;
}

InitialCondition shifted(const InitialCondition& init, double by) {
  InitialCondition out = init;
  for (double& v : out.particle_mean) v += by;
  for (double& v : out.field_center) v += by;
  return out;
}

}  // namespace

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Inconclusive: return "inconclusive";
    case Verdict::Fail: return "fail";
  }
  return "fail";
}

int exit_code(Verdict v) {
  switch (v) {
    case Verdict::Pass: return 0;
    case Verdict::Inconclusive: return 10;
    case Verdict::Fail: return 20;
  }
  return 1;
}

Verdict combine(Verdict a, Verdict b) {
  if (a == Verdict::Fail || b == Verdict::Fail) return Verdict::Fail;
  if (a == Verdict::Inconclusive || b == Verdict::Inconclusive) return Verdict::Inconclusive;
  return Verdict::Pass;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string to_csv(const ExperimentResult& r) {
  std::string out;
  for (std::size_t c = 0; c < r.columns.size(); ++c) out += (c ? "," : "") + r.columns[c];
  out += '\n';
  for (const auto& row : r.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += format_double(row[c]);
    }
    out += '\n';
  }
  return out;
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    os << contents;
    os.flush();
    if (!os) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error("write failed: " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

void write_csv(const std::filesystem::path& path, const ExperimentResult& r) { write_atomic(path, to_csv(r)); }

nlohmann::json ExperimentResult::manifest(const nlohmann::json& config) const {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash));
  nlohmann::json j;
  j["experiment"] = name;
  j["config"] = config;
  j["config_hash"] = hash;
  j["seed"] = seed;
  j["verdict"] = to_string(verdict);
  j["summary"] = summary;
  j["notes"] = notes;
  j["columns"] = columns;
  j["versions"] = {{"meanfield", kVersion}};
  return j;
}

const std::vector<TestFunction>& bounded_test_functions() {
  static const std::vector<TestFunction> fs = {
      {"cos", [](double x) { return std::cos(x); }, 1.0},
      {"sin", [](double x) { return std::sin(x); }, 1.0},
      {"clamp", [](double x) { return std::clamp(x, -1.0, 1.0); }, 1.0},
      {"step", [](double x) { return x > 0.0 ? 1.0 : 0.0; }, 1.0},
      {"bump", [](double x) { return std::exp(-x * x); }, 1.0},
  };
  return fs;
}

double kernel_expectation(const KernelSpec& k, const TestFunction& f, double x) {
  if (k.dim != 1) throw UnsupportedError("kernel_expectation requires d = 1");
  const double lam = k.bandwidth;
  if (k.family == KernelFamily::Gaussian) {
    if (f.name == "cos") return std::exp(-0.5 * lam * lam) * std::cos(x);
    if (f.name == "sin") return std::exp(-0.5 * lam * lam) * std::sin(x);
    if (f.name == "step") return normal_cdf(x / lam);
    if (f.name == "bump") {
      double s = 1.0 + 2.0 * lam * lam;
      return std::exp(-x * x / s) / std::sqrt(s);
    }
    if (f.name == "clamp") {
      double a = (-1.0 - x) / lam, b = (1.0 - x) / lam;
      double inside = x * (normal_cdf(b) - normal_cdf(a)) - lam * (normal_pdf(b) - normal_pdf(a));
      return -normal_cdf(a) + (1.0 - normal_cdf(b)) + inside;
    }
  }
  // Laplace density, split at the kinks of the integrand.
  auto g = [&](double y) { return f.f(x + y) * std::exp(-std::abs(y) / lam) / (2.0 * lam); };
  std::vector<double> cuts{0.0, -x, -1.0 - x, 1.0 - x};
  std::sort(cuts.begin(), cuts.end());
  const double inf = std::numeric_limits<double>::infinity();
  double total = integrate(g, -inf, cuts.front(), 1e-12);
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) total += integrate(g, cuts[i], cuts[i + 1], 1e-12);
  return total + integrate(g, cuts.back(), inf, 1e-12);
}

std::vector<LimitState> reference_trajectory(const ModelParams& p, const InitialCondition& init, long n_steps,
                                             const LimitOptions& opt, double stop_tol) {
  std::vector<LimitState> t;
  t.push_back(limit_initial(p, init, opt));
  for (long n = 0; n < n_steps; ++n) {
    LimitState next = psi_step(t.back(), p, opt);
    bool still = stop_tol > 0.0 && limit_distance(t.back(), next) < stop_tol;
    t.push_back(std::move(next));
    if (still) break;
  }
  return t;
}

std::string simulate_trajectory_csv(const ExperimentConfig& cfg) {
  cfg.params.validate();
  const auto& o = cfg.simulate;
  std::ostringstream os;
  write_trajectory_header(os, cfg.params.dim);
  simulate(cfg.params, cfg.init, cfg.system, o.N, o.M, o.n_steps, cfg.seed,
           [&](const ParticleEnsemble& e, const MixtureField&) { write_trajectory_rows(os, e); });
  return os.str();
}

// Rates -----------------------------------------------------------------------

ExperimentResult run_convergence_rate(const ExperimentConfig& cfg) {
  const ModelParams& p = cfg.params;
  p.validate();
  const auto& o = cfg.rates;
  ExperimentResult res = start("rates", cfg, {"N", "M", "rep", "step", "w1_mu", "w1_eta", "w1_sum"});
  StabilityReport st = compute_constants(p, cfg.tau);
  if (!st.cond_contraction || !st.cond_delta_a0)
    res.notes.push_back("stability hypotheses not satisfied; rate claims may not apply");
  if (p.dim != 1) res.notes.push_back("d > 1 distances use the dyadic upper bound and sampled field distances");

  std::vector<long> steps;
  for (long n = 0; n <= o.n_steps; n += o.eval_every) steps.push_back(n);
  LimitOptions lopt = cfg.limit;
  if (p.dim != 1) lopt.method = LimitMethod::Ensemble;
  std::vector<LimitState> ref = reference_trajectory(p, cfg.init, o.n_steps, lopt);
  std::vector<LimitState> ref_half = reference_trajectory(p, cfg.init, o.n_steps, half_nodes(lopt));
  std::vector<CdfGrid> grids;
  if (p.dim == 1)
    for (long n : steps) grids.push_back(reference_grid(ref_at(ref, n).eta));

  double floor = 0.0;
  for (long n : steps)
    if (n >= o.window_start) floor = std::max(floor, limit_distance(ref_at(ref, n), ref_at(ref_half, n)));

  nlohmann::json cells = nlohmann::json::array();
  std::vector<double> logN, logSup, wts;
  bool all_flat = true;
  for (std::size_t gi = 0; gi < o.grid.size(); ++gi) {
    const std::size_t N = o.grid[gi];
    const std::size_t M = o.m_grid.empty() ? N : o.m_grid[gi];
    std::vector<std::vector<std::array<double, 2>>> dist(o.replications);
    parallel_for(o.replications, [&](std::size_t r) {
      auto& out = dist[r];
      std::size_t next = 0;
      simulate(p, cfg.init, cfg.system, N, M, o.n_steps, cell_seed(cfg.seed, gi, r),
               [&](const ParticleEnsemble& e, const MixtureField& f) {
                 if (next >= steps.size() || e.step != steps[next]) return;
                 const LimitState& s = ref_at(ref, e.step);
                 double dm, de;
                 if (p.dim == 1) {
                   dm = w1_exact_1d(e.view(), s.mu.view());
                   de = w1_mixture_vs_grid_1d(f, grids[next]);
                 } else {
                   dm = measure_distance(DiscreteMeasure::uniform(p.dim, e.positions), s.mu);
                   de = field_distance(f, s.eta);
                 }
                 out.push_back({dm, de});
                 ++next;
               });
    });
    std::vector<double> means, ses;
    std::vector<std::vector<double>> series(o.replications);
    std::vector<double> wx;
    for (std::size_t k = 0; k < steps.size(); ++k) {
      std::vector<double> v;
      for (std::size_t r = 0; r < o.replications; ++r) {
        double s = dist[r][k][0] + dist[r][k][1];
        v.push_back(s);
        if (steps[k] >= o.window_start) series[r].push_back(s);
      }
      if (steps[k] >= o.window_start) wx.push_back(double(steps[k]));
      MeanSe ms = mean_se(v);
      means.push_back(ms.mean);
      ses.push_back(ms.se);
    }
    for (std::size_t r = 0; r < o.replications; ++r)
      for (std::size_t k = 0; k < steps.size(); ++k)
        res.rows.push_back({double(N), double(M), double(r), double(steps[k]), dist[r][k][0], dist[r][k][1],
                            dist[r][k][0] + dist[r][k][1]});
    std::size_t arg = 0;
    double sup = -1.0;
    for (std::size_t k = 0; k < steps.size(); ++k)
      if (steps[k] >= o.window_start && means[k] > sup) {
        sup = means[k];
        arg = k;
      }
    MeanSe tr = wx.size() >= 2 ? trend(series, wx) : MeanSe{};
    bool flat = !(tr.mean > 3.0 * tr.se);
    all_flat = all_flat && flat;
    logN.push_back(std::log(double(std::min(N, M))));
    logSup.push_back(std::log(sup));
    wts.push_back(ses[arg] > 0.0 ? (sup / ses[arg]) * (sup / ses[arg]) : 1.0);
    cells.push_back({{"N", N},
                     {"M", M},
                     {"sup_mean", sup},
                     {"sup_se", ses[arg]},
                     {"sup_step", steps[arg]},
                     {"trend_slope", tr.mean},
                     {"trend_se", tr.se},
                     {"flat", flat}});
  }
  LineFit fit = fit_line(logN, logSup, wts);
  const double target = -st.rate.min_reading;
  const double smallest = std::exp(logSup.back());
  res.summary["cells"] = cells;
  res.summary["slope"] = fit.slope;
  res.summary["slope_se"] = fit.slope_se;
  res.summary["target_slope"] = target;
  res.summary["printed_exponent"] = st.rate.printed;
  res.summary["tolerance"] = o.slope_tolerance;
  res.summary["noise_floor"] = floor;
  res.summary["flat"] = all_flat;
  res.summary["reference_steps"] = ref.size() - 1;
  const bool slope_ok = std::abs(fit.slope - target) <= o.slope_tolerance;
  if (floor >= 0.3 * smallest) {
    res.verdict = Verdict::Inconclusive;
    res.notes.push_back("reference noise floor is at least 30% of the smallest signal");
  } else if (slope_ok && all_flat) {
    res.verdict = Verdict::Pass;
  } else {
    res.verdict = Verdict::Fail;
  }
  return res;
}

// Contraction and fixed point --------------------------------------------------

ExperimentResult run_contraction(const ExperimentConfig& cfg) {
  const ModelParams& p = cfg.params;
  p.validate();
  const auto& o = cfg.contract;
  ExperimentResult res = start("contract", cfg, {"phase", "step", "w1_mu", "w1_eta", "w1_sum"});
  StabilityReport st = compute_constants(p, cfg.tau);
  InitialCondition ib = shifted(cfg.init, o.separation);

  LimitTrajectory ta = run_limit(p, cfg.init, o.n_steps, cfg.limit);
  LimitTrajectory tb = run_limit(p, ib, o.n_steps, cfg.limit);
  std::vector<double> dist;
  for (long n = 0; n <= o.n_steps; ++n) {
    const auto& a = ta.states[n];
    const auto& b = tb.states[n];
    double dm = measure_distance(a.mu, b.mu), de = field_distance(a.eta, b.eta);
    dist.push_back(dm + de);
    res.rows.push_back({0.0, double(n), dm, de, dm + de});
  }
  // Merge noise: the first trajectory again with twice the component budget.
  LimitOptions wide = cfg.limit;
  wide.budget *= 2;
  LimitTrajectory tw = run_limit(p, cfg.init, o.n_steps, wide);
  double merge_noise = 0.0;
  for (long n = 0; n <= o.n_steps; ++n) merge_noise = std::max(merge_noise, limit_distance(ta.states[n], tw.states[n]));
  const double floor = std::max(o.floor, 10.0 * merge_noise);
  std::size_t used = 0;
  for (std::size_t n = 1; n < dist.size() && dist[n] > floor; ++n) ++used;
  double rate = fit_geometric_rate(dist, floor, 1);

  // Fixed point from both inits.
  FixedPointResult fa = iterate_to_fixed_point(p, ta.states.front(), o.fp_tol, o.fp_max_iter, cfg.limit,
                                               st.c1 + st.c2);
  FixedPointResult fb = iterate_to_fixed_point(p, tb.states.front(), o.fp_tol, o.fp_max_iter, cfg.limit,
                                               st.c1 + st.c2);
  for (std::size_t k = 0; k < fa.report.distances.size(); ++k)
    res.rows.push_back({1.0, double(k + 1), kNaN, kNaN, fa.report.distances[k]});
  for (std::size_t k = 0; k < fb.report.distances.size(); ++k)
    res.rows.push_back({2.0, double(k + 1), kNaN, kNaN, fb.report.distances[k]});
  double fp_gap = limit_distance(fa.state, fb.state);

  res.summary["c1"] = st.c1;
  res.summary["c2"] = st.c2;
  res.summary["theta_star"] = st.theta_star;
  res.summary["a0"] = num(st.a0);
  res.summary["cond_contraction"] = st.cond_contraction;
  res.summary["cond_delta_a0"] = st.cond_delta_a0;
  res.summary["fitted_rate"] = num(rate);
  res.summary["points_used"] = used;
  res.summary["floor"] = floor;
  res.summary["merge_noise"] = merge_noise;
  res.summary["fixed_point_gap"] = fp_gap;
  res.summary["fixed_point_tol"] = o.fp_tol;
  res.summary["fixed_point_converged"] = fa.report.converged && fb.report.converged;
  res.summary["fixed_point_iterations"] = {fa.report.iterations, fb.report.iterations};

  Verdict contraction = Verdict::Inconclusive;
  if (!st.cond_contraction) res.notes.push_back("c1 + c2 >= 1: contraction hypothesis not satisfied");
  else if (used < 3 || !std::isfinite(rate)) res.notes.push_back("fewer than 3 distances above the noise floor");
  else contraction = rate <= st.theta_star + 0.05 ? Verdict::Pass : Verdict::Fail;

  Verdict fixed = Verdict::Inconclusive;
  if (!st.cond_delta_a0) res.notes.push_back("delta >= a0: fixed-point uniqueness hypothesis not satisfied");
  else if (!(fa.report.converged && fb.report.converged)) res.notes.push_back("fixed-point iteration did not converge");
  else fixed = fp_gap <= 2.0 * o.fp_tol ? Verdict::Pass : Verdict::Fail;
  if (!st.cond_contraction) fixed = Verdict::Inconclusive;

  res.summary["contraction_verdict"] = to_string(contraction);
  res.summary["fixed_point_verdict"] = to_string(fixed);
  res.verdict = combine(contraction, fixed);
  return res;
}

// Chaos ------------------------------------------------------------------------

namespace {

const std::vector<std::pair<int, int>>& chaos_pairs() {
  static const std::vector<std::pair<int, int>> pairs = {{0, 0}, {0, 1}, {2, 2}, {3, 3}, {4, 4}, {2, 3}};
  return pairs;
}

}  // namespace

ExperimentResult run_chaos(const ExperimentConfig& cfg) {
  const ModelParams& p = cfg.params;
  p.validate();
  require_dim1(cfg, "chaos");
  const auto& o = cfg.chaos;
  const auto& fs = bounded_test_functions();
  const auto& pairs = chaos_pairs();
  std::vector<std::string> cols{"N", "rep"};
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    std::string tag = fs[pairs[k].first].name + "_" + fs[pairs[k].second].name;
    cols.push_back("m1_" + tag);
    cols.push_back("m2_" + tag);
    cols.push_back("s12_" + tag);
  }
  cols.push_back("w1_mu_inf");
  ExperimentResult res = start("chaos", cfg, cols);
  if (o.replications < 8) throw InputError("chaos needs at least 8 replications");

  LimitState init = limit_initial(p, cfg.init, cfg.limit);
  FixedPointResult fp = iterate_to_fixed_point(p, init, 1e-5, 200, cfg.limit);
  const DiscreteMeasure& mu_inf = fp.state.mu;

  nlohmann::json cells = nlohmann::json::array();
  std::vector<double> stat, stat_se, mean_w1;
  std::vector<double> pooled;
  for (std::size_t gi = 0; gi < o.grid.size(); ++gi) {
    const std::size_t N = o.grid[gi];
    const std::size_t R = o.replications;
    std::vector<std::vector<double>> rows(R);
    std::vector<std::vector<double>> finals(R);
    parallel_for(R, [&](std::size_t r) {
      std::vector<double> x;
      simulate(p, cfg.init, cfg.system, N, N, o.burn_in, cell_seed(cfg.seed, gi, r),
               [&](const ParticleEnsemble& e, const MixtureField&) {
                 if (e.step == o.burn_in) x = e.positions;
               });
      auto& row = rows[r];
      row = {double(N), double(r)};
      for (auto [a, b] : pairs) {
        double m1 = 0, m2 = 0, s12 = 0;
        for (double v : x) {
          double u = fs[a].f(v), w = fs[b].f(v);
          m1 += u;
          m2 += w;
          s12 += u * w;
        }
        row.push_back(m1 / N);
        row.push_back(m2 / N);
        row.push_back(s12 / N);
      }
      row.push_back(w1_exact_1d(DiscreteMeasure::uniform(1, x).view(), mu_inf.view()));
      finals[r] = std::move(x);
    });
    double total = 0.0, var = 0.0;
    nlohmann::json per_pair = nlohmann::json::array();
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      std::vector<double> m1(R), m2(R), s12(R);
      for (std::size_t r = 0; r < R; ++r) {
        m1[r] = rows[r][2 + 3 * k];
        m2[r] = rows[r][3 + 3 * k];
        s12[r] = rows[r][4 + 3 * k];
      }
      double a1 = mean_se(m1).mean, a2 = mean_se(m2).mean;
      std::vector<double> prod(R);
      for (std::size_t r = 0; r < R; ++r) prod[r] = (m1[r] - a1) * (m2[r] - a2);
      MeanSe cv = mean_se(prod);
      double cov = cv.mean * R / (R - 1.0);
      double same = mean_se(s12).mean - a1 * a2;
      double scale = double(N) / (N - 1.0);
      double c12 = N > 1 ? (cov - same / N) * scale : 0.0;
      double se = cv.se * scale;
      total += std::abs(c12);
      var += se * se;
      per_pair.push_back({{"c12", c12}, {"se", se}});
    }
    std::vector<double> w(R);
    for (std::size_t r = 0; r < R; ++r) w[r] = rows[r].back();
    MeanSe mw = mean_se(w);
    stat.push_back(total);
    stat_se.push_back(std::sqrt(var));
    mean_w1.push_back(mw.mean);
    cells.push_back({{"N", N}, {"decorrelation", total}, {"se", std::sqrt(var)}, {"pairs", per_pair},
                     {"w1_mu_inf_mean", mw.mean}, {"w1_mu_inf_se", mw.se}});
    for (auto& row : rows) res.rows.push_back(std::move(row));
    if (gi + 1 == o.grid.size()) {
      pooled.reserve(N * R);
      for (auto& x : finals) pooled.insert(pooled.end(), x.begin(), x.end());
    }
  }
  int inversions = 0, significant = 0;
  for (std::size_t k = 1; k < stat.size(); ++k) {
    if (stat[k] <= stat[k - 1]) continue;
    double se = std::hypot(stat_se[k], stat_se[k - 1]);
    ++inversions;
    if (stat[k] - stat[k - 1] > se) ++significant;
  }
  double marginal = w1_exact_1d(DiscreteMeasure::uniform(1, pooled).view(), mu_inf.view());
  double marginal_bound = 3.0 * mean_w1.back();
  res.summary["cells"] = cells;
  res.summary["inversions"] = inversions;
  res.summary["unexplained_inversions"] = significant;
  res.summary["marginal_w1"] = marginal;
  res.summary["marginal_bound"] = marginal_bound;
  res.summary["fixed_point_iterations"] = fp.report.iterations;
  res.summary["fixed_point_converged"] = fp.report.converged;
  bool trend_ok = inversions == 0 || (inversions == 1 && significant == 0);
  bool marginal_ok = marginal <= marginal_bound;
  res.summary["trend_ok"] = trend_ok;
  res.summary["marginal_ok"] = marginal_ok;
  if (p.delta == 0.0) {
    res.notes.push_back("delta = 0: particles are independent; decorrelation is pure noise");
    res.verdict = marginal_ok ? Verdict::Inconclusive : Verdict::Fail;
  } else {
    res.verdict = trend_ok && marginal_ok ? Verdict::Pass : Verdict::Fail;
  }
  return res;
}

// Concentration ------------------------------------------------------------------

ExperimentResult run_concentration(const ExperimentConfig& cfg) {
  const ModelParams& p = cfg.params;
  p.validate();
  require_dim1(cfg, "concentrate");
  const auto& o = cfg.concentrate;
  ExperimentResult res = start("concentrate", cfg, {"N", "rep", "step", "w1_mu"});
  res.notes.push_back("theorem constants are existential; only the shape of the tail curves is tested");
  long last = *std::max_element(o.check_steps.begin(), o.check_steps.end());
  std::vector<LimitState> ref = reference_trajectory(p, cfg.init, last, cfg.limit);
  const std::size_t R = o.replications;
  const std::size_t S = o.check_steps.size();

  // w[gi][r][s]
  std::vector<std::vector<std::vector<double>>> w(o.grid.size());
  for (std::size_t gi = 0; gi < o.grid.size(); ++gi) {
    const std::size_t N = o.grid[gi];
    w[gi].assign(R, std::vector<double>(S, kNaN));
    parallel_for(R, [&](std::size_t r) {
      simulate(p, cfg.init, cfg.system, N, N, last, cell_seed(cfg.seed, gi, r),
               [&](const ParticleEnsemble& e, const MixtureField&) {
                 for (std::size_t s = 0; s < S; ++s)
                   if (o.check_steps[s] == e.step) w[gi][r][s] = w1_exact_1d(e.view(), ref_at(ref, e.step).mu.view());
               });
    });
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t s = 0; s < S; ++s)
        res.rows.push_back({double(N), double(r), double(o.check_steps[s]), w[gi][r][s]});
  }
  nlohmann::json curves = nlohmann::json::array();
  int negative = 0, positive = 0, informative = 0;
  bool any_exceed = false;
  for (double eps : o.epsilons) {
    for (std::size_t s = 0; s < S; ++s) {
      std::vector<double> xs, ys, ws, freq;
      std::size_t total_hits = 0, full = 0;
      for (std::size_t gi = 0; gi < o.grid.size(); ++gi) {
        std::size_t k = 0;
        for (std::size_t r = 0; r < R; ++r) k += w[gi][r][s] > eps;
        total_hits += k;
        if (k == R) ++full;
        double pt = (k + 0.5) / (R + 1.0);
        xs.push_back(double(o.grid[gi]));
        ys.push_back(std::log(pt));
        ws.push_back(R * pt / (1.0 - pt));
        freq.push_back(double(k) / R);
      }
      any_exceed = any_exceed || total_hits > 0;
      nlohmann::json c = {{"epsilon", eps}, {"step", o.check_steps[s]}, {"frequency", freq}};
      if (total_hits > 0 && full < o.grid.size() && xs.size() >= 2) {
        LineFit f = fit_line(xs, ys, ws);
        double z = f.slope_se > 0.0 ? f.slope / f.slope_se : (f.slope < 0 ? -kInfinity : kInfinity);
        c["log_slope"] = f.slope;
        c["log_slope_se"] = f.slope_se;
        c["z"] = num(z);
        ++informative;
        if (z < -2.326) ++negative;
        if (z > 2.326) ++positive;
      }
      curves.push_back(c);
    }
  }
  res.summary["curves"] = curves;
  res.summary["significant_negative"] = negative;
  res.summary["significant_positive"] = positive;
  if (!any_exceed) {
    res.notes.push_back("no exceedances in any cell; widen epsilon");
    res.verdict = Verdict::Inconclusive;
  } else if (positive > 0) {
    res.verdict = Verdict::Fail;
  } else if (negative > 0) {
    res.verdict = Verdict::Pass;
  } else {
    res.verdict = Verdict::Inconclusive;
  }
  return res;
}

// Coupling -------------------------------------------------------------------------

ExperimentResult run_coupling_check(const ExperimentConfig& cfg) {
  const ModelParams& p = cfg.params;
  p.validate();
  require_dim1(cfg, "couple");
  const auto& o = cfg.couple;
  ExperimentResult res = start("couple", cfg, {"path", "step", "lhs", "rhs", "w1_zeta", "coupling_gap"});
  StabilityReport st = compute_constants(p, cfg.tau);
  if (!st.iid_available) throw ConstantsUnavailable("coupling check needs a bounded A1 (noise.sL = 0)");
  const double C1 = st.C1, chi1 = st.chi1;

  std::vector<LimitState> ref = reference_trajectory(p, cfg.init, o.n_steps, cfg.limit, 0.0);
  std::vector<LimitState> ref_half = reference_trajectory(p, cfg.init, o.n_steps, half_nodes(cfg.limit), 0.0);
  double floor = 0.0;
  for (long n = 0; n <= o.n_steps; ++n)
    floor = std::max(floor, w1_exact_1d(ref[n].mu.view(), ref_half[n].mu.view()));
  const double amplification = chi1 < 1.0 ? 2.0 + C1 / (1.0 - chi1) : 2.0 + C1 * (o.n_steps + 1);
  const double tol = floor * amplification;

  std::vector<std::vector<std::array<double, 4>>> out(o.paths);
  parallel_for(o.paths, [&](std::size_t path) {
    const std::uint64_t seed = cell_seed(cfg.seed, 0, path);
    ParticleEnsemble x0 = initial_ensemble(p, cfg.init, o.N, seed);
    CoupledState cs = make_coupled_state(x0, initial_field(p, cfg.init));
    std::vector<double> z;
    auto& rows = out[path];
    for (long n = 0;; ++n) {
      const DiscreteMeasure& mu = ref[n].mu;
      double lhs = w1_exact_1d(cs.primary.view(), mu.view());
      double zeta = w1_exact_1d(cs.auxiliary.view(), mu.view());
      double acc = 0.0;
      for (std::size_t k = 0; k < z.size(); ++k) acc += std::pow(chi1, double(z.size() - 1 - k)) * z[k];
      double gap = 0.0;
      for (std::size_t i = 0; i < cs.primary.positions.size(); ++i)
        gap += std::abs(cs.primary.positions[i] - cs.auxiliary.positions[i]);
      rows.push_back({lhs, zeta + C1 * acc, zeta, gap / o.N});
      z.push_back(zeta);
      if (n == o.n_steps) break;
      cs = step_coupled(cs, n, mu.view(), ref[n].eta, p, seed);
    }
  });
  std::size_t ok = 0;
  double worst = 0.0;
  for (std::size_t path = 0; path < o.paths; ++path) {
    bool good = true;
    for (std::size_t n = 0; n < out[path].size(); ++n) {
      const auto& v = out[path][n];
      res.rows.push_back({double(path), double(n), v[0], v[1], v[2], v[3]});
      double excess = v[0] - v[1];
      worst = std::max(worst, excess);
      if (excess > tol) good = false;
    }
    ok += good;
  }
  double frac = o.paths ? double(ok) / o.paths : 0.0;
  res.summary["C1"] = C1;
  res.summary["chi1"] = chi1;
  res.summary["chi1_proof"] = st.chi1_proof;
  res.summary["K"] = st.K_bound;
  res.summary["noise_floor"] = floor;
  res.summary["tolerance"] = tol;
  res.summary["pass_fraction"] = frac;
  res.summary["worst_excess"] = worst;
  if (!(chi1 < 1.0)) {
    res.notes.push_back("chi1 >= 1: hypothesis not satisfied");
    res.verdict = Verdict::Inconclusive;
  } else {
    res.verdict = frac >= o.min_pass_fraction ? Verdict::Pass : Verdict::Fail;
  }
  return res;
}

// Moments ----------------------------------------------------------------------------

ExperimentResult run_moment_monitor(const ExperimentConfig& cfg) {
  const ModelParams& p = cfg.params;
  p.validate();
  const auto& o = cfg.moments;
  if (o.replications < 8) throw InputError("moments needs at least 8 replications");
  ExperimentResult res = start("moments", cfg, {"rep", "step", "particle_m1", "particle_m1ptau", "field_m1"});
  StabilityReport st = compute_constants(p, cfg.tau);
  const bool bounded = st.cond_delta_a0;
  const std::size_t R = o.replications;
  const double q = 1.0 + cfg.tau;

  std::vector<std::vector<std::array<double, 3>>> traj(R);
  std::vector<long> diverged(R, -1);
  parallel_for(R, [&](std::size_t r) {
    try {
      simulate(p, cfg.init, cfg.system, o.N, o.N, o.n_steps, cell_seed(cfg.seed, 0, r),
               [&](const ParticleEnsemble& e, const MixtureField& f) {
                 double m1 = 0.0, mq = 0.0;
                 for (std::size_t i = 0; i < e.size(); ++i) {
                   auto x = e.particle(i);
                   double a = 0.0;
                   for (double v : x) a += v * v;
                   a = std::sqrt(a);
                   m1 += a;
                   mq += std::pow(a, q);
                 }
                 traj[r].push_back({m1 / e.size(), mq / e.size(), first_moment(f)});
               });
    } catch (const NumericalDivergence& ex) {
      diverged[r] = ex.step();
    }
  });
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t n = 0; n < traj[r].size(); ++n)
      res.rows.push_back({double(r), double(n), traj[r][n][0], traj[r][n][1], traj[r][n][2]});

  bool any_diverged = std::any_of(diverged.begin(), diverged.end(), [](long s) { return s >= 0; });
  res.summary["mode"] = bounded ? "bounded" : "expect_unbounded";
  res.summary["a0"] = num(st.a0);
  res.summary["diverged_paths"] = std::count_if(diverged.begin(), diverged.end(), [](long s) { return s >= 0; });
  if (any_diverged) {
    res.summary["growth_detected"] = true;
    res.verdict = bounded ? Verdict::Fail : Verdict::Inconclusive;
    res.notes.push_back("non-finite particle state reached");
    return res;
  }

  std::vector<double> wx;
  for (long n = o.burn_in; n <= o.n_steps; ++n) wx.push_back(double(n));
  auto window = [&](int col) {
    std::vector<std::vector<double>> series(R);
    std::vector<double> plateau(R);
    for (std::size_t r = 0; r < R; ++r) {
      for (long n = o.burn_in; n <= o.n_steps; ++n) series[r].push_back(traj[r][n][col]);
      plateau[r] = mean_se(series[r]).mean;
    }
    return std::pair{trend(series, wx), mean_se(plateau)};
  };
  std::vector<double> x0(R);
  for (std::size_t r = 0; r < R; ++r) x0[r] = traj[r][0][0];
  const double x0_moment = mean_se(x0).mean;
  const double pc = particle_moment_ceiling(st, x0_moment);
  const double fc = field_moment_ceiling(p, st, pc, first_moment(initial_field(p, cfg.init)), o.n_steps);

  auto [pt, pp] = window(0);
  auto [qt, qp] = window(1);
  auto [ft, fpl] = window(2);
  bool rising = pt.mean > 3.0 * pt.se || ft.mean > 3.0 * ft.se;
  bool below = pp.mean - 3.0 * pp.se <= pc && (std::isnan(fc) || fpl.mean - 3.0 * fpl.se <= fc);
  res.summary["particle_plateau"] = pp.mean;
  res.summary["particle_plateau_se"] = pp.se;
  res.summary["particle_trend"] = pt.mean;
  res.summary["particle_trend_se"] = pt.se;
  res.summary["particle_m1ptau_plateau"] = qp.mean;
  res.summary["particle_m1ptau_plateau_se"] = qp.se;
  res.summary["field_plateau"] = fpl.mean;
  res.summary["field_plateau_se"] = fpl.se;
  res.summary["field_trend"] = ft.mean;
  res.summary["field_trend_se"] = ft.se;
  res.summary["particle_ceiling"] = num(pc);
  res.summary["field_ceiling"] = num(fc);
  res.summary["growth_detected"] = rising;
  if (!bounded) {
    res.notes.push_back("delta >= a0: moments are not expected to stay bounded");
    res.verdict = Verdict::Inconclusive;
  } else {
    res.verdict = !rising && below ? Verdict::Pass : Verdict::Fail;
  }
  return res;
}

// Kernel CLT bound ------------------------------------------------------------------

ExperimentResult check_kernel_clt_bound(const ExperimentConfig& cfg) {
  const ModelParams& p = cfg.params;
  p.validate();
  require_dim1(cfg, "cltbound");
  const auto& o = cfg.cltbound;
  if (o.replications < 8) throw InputError("cltbound needs at least 8 replications");
  ExperimentResult res = start("cltbound", cfg, {"function", "N", "rep", "value"});
  const auto& fs = bounded_test_functions();
  const KernelSpec& P = p.P;
  nlohmann::json cells = nlohmann::json::array();
  bool bound_ok = true, slope_ok = true;
  nlohmann::json slopes = nlohmann::json::array();
  for (std::size_t fi = 0; fi < fs.size(); ++fi) {
    std::vector<double> lx, ly, lw;
    for (std::size_t gi = 0; gi < o.grid.size(); ++gi) {
      const std::size_t N = o.grid[gi];
      std::vector<double> v(o.replications);
      parallel_for(o.replications, [&](std::size_t r) {
        Rng rng = substream(cell_seed(cfg.seed, fi * 1000 + gi, r), StreamTag::kMonteCarlo, 0);
        std::normal_distribution<double> gauss(0.0, 1.0);
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
          double x = gauss(rng), y;
          sample(P, std::span(&x, 1), rng, std::span(&y, 1));
          s += fs[fi].f(y) - kernel_expectation(P, fs[fi], x);
        }
        v[r] = std::abs(s / N);
      });
      for (std::size_t r = 0; r < o.replications; ++r) res.rows.push_back({double(fi), double(N), double(r), v[r]});
      MeanSe ms = mean_se(v);
      double bound = 2.0 * fs[fi].sup_norm / std::sqrt(double(N));
      bool ok = ms.mean + 3.0 * ms.se <= bound;
      bound_ok = bound_ok && ok;
      cells.push_back({{"function", fs[fi].name}, {"N", N}, {"mean", ms.mean}, {"se", ms.se}, {"bound", bound},
                       {"ok", ok}});
      if (ms.mean > 0.0) {
        lx.push_back(std::log(double(N)));
        ly.push_back(std::log(ms.mean));
        lw.push_back(ms.se > 0.0 ? (ms.mean / ms.se) * (ms.mean / ms.se) : 1.0);
      }
    }
    if (lx.size() >= 2) {
      LineFit f = fit_line(lx, ly, lw);
      bool ok = std::abs(f.slope + 0.5) <= o.slope_tolerance;
      slope_ok = slope_ok && ok;
      slopes.push_back({{"function", fs[fi].name}, {"slope", f.slope}, {"slope_se", f.slope_se}, {"ok", ok}});
    }
  }
  res.summary["cells"] = cells;
  res.summary["slopes"] = slopes;
  res.summary["bound_ok"] = bound_ok;
  res.summary["slope_ok"] = slope_ok;
  res.verdict = bound_ok && slope_ok ? Verdict::Pass : Verdict::Fail;
  return res;
}

}  // namespace meanfield
