#include "meanfield/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "meanfield/errors.hpp"

namespace meanfield {

using nlohmann::json;

namespace {

std::string system_name(System s) { return s == System::Ips1 ? "ips1" : "ips2"; }

std::string variant_name(DriftVariant v) {
  return v == DriftVariant::LinearMeanField ? "linear_mean_field" : "interaction_kernel";
}

json kernel_json(const KernelSpec& k) { return {{"family", to_string(k.family)}, {"bandwidth", k.bandwidth}}; }

// Collects every problem found while reading a JSON tree.
class Reader {
 public:
  std::vector<std::string> problems;

  void keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) {
      problems.push_back(path + ": expected an object");
      return;
    }
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!ok.count(it.key())) problems.push_back("unknown key '" + join(path, it.key()) + "'");
  }

  template <class T>
  void get(const json& obj, const std::string& path, const char* key, T& out) {
    if (!obj.is_object() || !obj.contains(key)) return;
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception&) {
      problems.push_back(join(path, key) + ": wrong type");
    }
  }

  const json* section(const json& obj, const char* key) {
    if (!obj.is_object() || !obj.contains(key)) return nullptr;
    return &obj.at(key);
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  void check(bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  }
};

template <class T>
bool strictly_increasing(const std::vector<T>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i - 1] < v[i])) return false;
  return true;
}

void read_kernel(Reader& rd, const json& j, const std::string& path, KernelSpec& k) {
  rd.keys(j, path, {"family", "bandwidth"});
  std::string fam = to_string(k.family);
  rd.get(j, path, "family", fam);
  try {
    k.family = family_from_string(fam);
  } catch (const Error&) {
    rd.problems.push_back(path + ".family: unknown kernel family '" + fam + "'");
  }
  rd.get(j, path, "bandwidth", k.bandwidth);
}

void read_model(Reader& rd, const json& j, ModelParams& p) {
  const std::string path = "model";
  rd.keys(j, path, {"dim", "A", "delta", "alpha", "drift", "noise", "P", "P_prime"});
  rd.get(j, path, "dim", p.dim);
  if (p.dim < 1 || p.dim > kMaxDim) {
    rd.problems.push_back("model.dim must lie in [1, " + std::to_string(kMaxDim) + "]");
    p.dim = 1;
  }
  p.A = Eigen::MatrixXd::Identity(p.dim, p.dim) * 0.2;
  if (j.contains("A")) {
    const json& a = j.at("A");
    if (a.is_number()) {
      p.A = Eigen::MatrixXd::Identity(p.dim, p.dim) * a.get<double>();
    } else if (a.is_array() && a.size() == std::size_t(p.dim)) {
      for (int r = 0; r < p.dim; ++r) {
        if (!a[r].is_array() || a[r].size() != std::size_t(p.dim)) {
          rd.problems.push_back("model.A must be a number or a dim x dim array");
          break;
        }
        for (int c = 0; c < p.dim; ++c) {
          if (!a[r][c].is_number()) {
            rd.problems.push_back("model.A entries must be numbers");
            r = p.dim;
            break;
          }
          p.A(r, c) = a[r][c].get<double>();
        }
      }
    } else {
      rd.problems.push_back("model.A must be a number or a dim x dim array");
    }
  }
  rd.get(j, path, "delta", p.delta);
  rd.get(j, path, "alpha", p.alpha);
  if (const json* d = rd.section(j, "drift")) {
    rd.keys(*d, "model.drift", {"variant", "a1", "a2", "a3", "l_K"});
    std::string v = variant_name(p.drift.variant);
    rd.get(*d, "model.drift", "variant", v);
    if (v == "linear_mean_field") p.drift.variant = DriftVariant::LinearMeanField;
    else if (v == "interaction_kernel") p.drift.variant = DriftVariant::InteractionKernel;
    else rd.problems.push_back("model.drift.variant: unknown variant '" + v + "'");
    rd.get(*d, "model.drift", "a1", p.drift.a1);
    rd.get(*d, "model.drift", "a2", p.drift.a2);
    rd.get(*d, "model.drift", "a3", p.drift.a3);
    rd.get(*d, "model.drift", "l_K", p.drift.l_K);
  }
  if (const json* n = rd.section(j, "noise")) {
    rd.keys(*n, "model.noise", {"b", "L0", "sL", "c0", "sc"});
    rd.get(*n, "model.noise", "b", p.noise.b);
    rd.get(*n, "model.noise", "L0", p.noise.L0);
    rd.get(*n, "model.noise", "sL", p.noise.sL);
    rd.get(*n, "model.noise", "c0", p.noise.c0);
    rd.get(*n, "model.noise", "sc", p.noise.sc);
  }
  p.P.dim = p.Pp.dim = p.dim;
  if (const json* k = rd.section(j, "P")) read_kernel(rd, *k, "model.P", p.P);
  if (const json* k = rd.section(j, "P_prime")) read_kernel(rd, *k, "model.P_prime", p.Pp);
  try {
    p.validate();
  } catch (const ValidationError& e) {
    for (const auto& s : e.problems()) rd.problems.push_back("model: " + s);
  }
}

}  // namespace

bool RunConfig::operator==(const RunConfig& o) const { return to_json(*this) == to_json(o); }

json to_json(const ModelParams& p) {
  json A = json::array();
  for (int r = 0; r < p.A.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < p.A.cols(); ++c) row.push_back(p.A(r, c));
    A.push_back(row);
  }
  return {{"dim", p.dim},
          {"A", A},
          {"delta", p.delta},
          {"alpha", p.alpha},
          {"drift",
           {{"variant", variant_name(p.drift.variant)},
            {"a1", p.drift.a1},
            {"a2", p.drift.a2},
            {"a3", p.drift.a3},
            {"l_K", p.drift.l_K}}},
          {"noise", {{"b", p.noise.b}, {"L0", p.noise.L0}, {"sL", p.noise.sL}, {"c0", p.noise.c0}, {"sc", p.noise.sc}}},
          {"P", kernel_json(p.P)},
          {"P_prime", kernel_json(p.Pp)}};
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["model"] = to_json(c.params);
  j["init"] = {{"particle_mean", c.init.particle_mean},
               {"particle_std", c.init.particle_std},
               {"field_center", c.init.field_center},
               {"field_bandwidth", c.init.field_bandwidth}};
  j["system"] = system_name(c.system);
  j["seed"] = c.seed;
  j["tau"] = c.tau;
  j["limit"] = {{"method", to_string(c.limit.method)},
                {"nodes", c.limit.nodes},
                {"budget", c.limit.budget},
                {"seed", c.limit.seed}};
  const auto& r = c.rates;
  j["rates"] = {{"grid", r.grid},
                {"m_grid", r.m_grid},
                {"n_steps", r.n_steps},
                {"replications", r.replications},
                {"window_start", r.window_start},
                {"eval_every", r.eval_every},
                {"slope_tolerance", r.slope_tolerance}};
  const auto& ct = c.contract;
  j["contract"] = {{"separation", ct.separation},
                   {"n_steps", ct.n_steps},
                   {"floor", ct.floor},
                   {"fp_tol", ct.fp_tol},
                   {"fp_max_iter", ct.fp_max_iter}};
  j["chaos"] = {{"grid", c.chaos.grid}, {"burn_in", c.chaos.burn_in}, {"replications", c.chaos.replications}};
  j["concentrate"] = {{"grid", c.concentrate.grid},
                      {"epsilons", c.concentrate.epsilons},
                      {"check_steps", c.concentrate.check_steps},
                      {"replications", c.concentrate.replications}};
  j["couple"] = {{"N", c.couple.N},
                 {"n_steps", c.couple.n_steps},
                 {"paths", c.couple.paths},
                 {"min_pass_fraction", c.couple.min_pass_fraction}};
  j["moments"] = {{"N", c.moments.N},
                  {"n_steps", c.moments.n_steps},
                  {"burn_in", c.moments.burn_in},
                  {"replications", c.moments.replications}};
  j["cltbound"] = {{"grid", c.cltbound.grid},
                   {"replications", c.cltbound.replications},
                   {"slope_tolerance", c.cltbound.slope_tolerance}};
  j["simulate"] = {{"N", c.simulate.N}, {"M", c.simulate.M}, {"n_steps", c.simulate.n_steps}};
  return j;
}

json to_json(const RunConfig& c) {
  json j = to_json(c.experiment);
  j["output"] = {{"dir", c.out_dir}, {"threads", c.threads}};
  return j;
}

RunConfig config_from_json(const json& j) {
  Reader rd;
  RunConfig rc;
  ExperimentConfig& c = rc.experiment;
  rd.keys(j, "", {"model", "init", "system", "seed", "tau", "limit", "rates", "contract", "chaos", "concentrate",
                  "couple", "moments", "cltbound", "simulate", "output"});
  if (!j.is_object()) throw ValidationError(rd.problems);

  if (const json* m = rd.section(j, "model")) read_model(rd, *m, c.params);
  const int d = c.params.dim;
  c.init.particle_mean.assign(d, 0.0);
  c.init.field_center.assign(d, 0.0);
  if (const json* s = rd.section(j, "init")) {
    rd.keys(*s, "init", {"particle_mean", "particle_std", "field_center", "field_bandwidth"});
    rd.get(*s, "init", "particle_mean", c.init.particle_mean);
    rd.get(*s, "init", "particle_std", c.init.particle_std);
    rd.get(*s, "init", "field_center", c.init.field_center);
    rd.get(*s, "init", "field_bandwidth", c.init.field_bandwidth);
  }
  rd.check(c.init.particle_mean.size() == std::size_t(d), "init.particle_mean must have dim entries");
  rd.check(c.init.field_center.size() == std::size_t(d), "init.field_center must have dim entries");
  rd.check(c.init.particle_std >= 0.0, "init.particle_std >= 0");
  rd.check(c.init.field_bandwidth > 0.0, "init.field_bandwidth > 0");

  std::string sys = system_name(c.system);
  rd.get(j, "", "system", sys);
  if (sys == "ips1") c.system = System::Ips1;
  else if (sys == "ips2") c.system = System::Ips2;
  else rd.problems.push_back("system: expected 'ips1' or 'ips2'");
  rd.get(j, "", "seed", c.seed);
  rd.get(j, "", "tau", c.tau);
  rd.check(c.tau > 0.0, "tau > 0");

  if (const json* s = rd.section(j, "limit")) {
    rd.keys(*s, "limit", {"method", "nodes", "budget", "seed"});
    std::string m = to_string(c.limit.method);
    rd.get(*s, "limit", "method", m);
    try {
      c.limit.method = limit_method_from_string(m);
    } catch (const Error&) {
      rd.problems.push_back("limit.method: expected 'ensemble' or 'quantile_grid'");
    }
    rd.get(*s, "limit", "nodes", c.limit.nodes);
    rd.get(*s, "limit", "budget", c.limit.budget);
    rd.get(*s, "limit", "seed", c.limit.seed);
  }
  rd.check(c.limit.nodes >= 2, "limit.nodes >= 2");
  rd.check(c.limit.budget >= 16, "limit.budget >= 16");
  rd.check(d == 1 || c.limit.method == LimitMethod::Ensemble, "limit.method quantile_grid requires dim = 1");

  auto& r = c.rates;
  if (const json* s = rd.section(j, "rates")) {
    rd.keys(*s, "rates",
            {"grid", "m_grid", "n_steps", "replications", "window_start", "eval_every", "slope_tolerance"});
    rd.get(*s, "rates", "grid", r.grid);
    rd.get(*s, "rates", "m_grid", r.m_grid);
    rd.get(*s, "rates", "n_steps", r.n_steps);
    rd.get(*s, "rates", "replications", r.replications);
    rd.get(*s, "rates", "window_start", r.window_start);
    rd.get(*s, "rates", "eval_every", r.eval_every);
    rd.get(*s, "rates", "slope_tolerance", r.slope_tolerance);
  }
  rd.check(r.grid.size() >= 3, "rates.grid needs at least 3 values for a slope fit");
  rd.check(strictly_increasing(r.grid), "rates.grid must be strictly increasing");
  rd.check(r.grid.empty() || r.grid.front() >= 1, "rates.grid: N >= 1");
  rd.check(r.m_grid.empty() || r.m_grid.size() == r.grid.size(), "rates.m_grid must be empty or match rates.grid");
  rd.check(r.m_grid.empty() || strictly_increasing(r.m_grid), "rates.m_grid must be strictly increasing");
  rd.check(r.m_grid.empty() || r.m_grid.front() >= 1, "rates.m_grid: M >= 1");
  rd.check(r.replications >= 8, "rates.replications >= 8");
  rd.check(r.n_steps >= 1, "rates.n_steps >= 1");
  rd.check(r.eval_every >= 1, "rates.eval_every >= 1");
  rd.check(r.window_start >= 0 && r.window_start <= r.n_steps, "rates.window_start must lie in [0, n_steps]");
  rd.check(r.slope_tolerance > 0.0, "rates.slope_tolerance > 0");

  auto& ct = c.contract;
  if (const json* s = rd.section(j, "contract")) {
    rd.keys(*s, "contract", {"separation", "n_steps", "floor", "fp_tol", "fp_max_iter"});
    rd.get(*s, "contract", "separation", ct.separation);
    rd.get(*s, "contract", "n_steps", ct.n_steps);
    rd.get(*s, "contract", "floor", ct.floor);
    rd.get(*s, "contract", "fp_tol", ct.fp_tol);
    rd.get(*s, "contract", "fp_max_iter", ct.fp_max_iter);
  }
  rd.check(ct.n_steps >= 3, "contract.n_steps >= 3");
  rd.check(ct.floor > 0.0, "contract.floor > 0");
  rd.check(ct.fp_tol > 0.0, "contract.fp_tol > 0");
  rd.check(ct.fp_max_iter >= 1, "contract.fp_max_iter >= 1");

  auto& ch = c.chaos;
  if (const json* s = rd.section(j, "chaos")) {
    rd.keys(*s, "chaos", {"grid", "burn_in", "replications"});
    rd.get(*s, "chaos", "grid", ch.grid);
    rd.get(*s, "chaos", "burn_in", ch.burn_in);
    rd.get(*s, "chaos", "replications", ch.replications);
  }
  rd.check(!ch.grid.empty() && strictly_increasing(ch.grid), "chaos.grid must be non-empty and strictly increasing");
  rd.check(ch.grid.empty() || ch.grid.front() >= 2, "chaos.grid: N >= 2");
  rd.check(ch.burn_in >= 0, "chaos.burn_in >= 0");
  rd.check(ch.replications >= 8, "chaos.replications >= 8");

  auto& co = c.concentrate;
  if (const json* s = rd.section(j, "concentrate")) {
    rd.keys(*s, "concentrate", {"grid", "epsilons", "check_steps", "replications"});
    rd.get(*s, "concentrate", "grid", co.grid);
    rd.get(*s, "concentrate", "epsilons", co.epsilons);
    rd.get(*s, "concentrate", "check_steps", co.check_steps);
    rd.get(*s, "concentrate", "replications", co.replications);
  }
  rd.check(co.grid.size() >= 2 && strictly_increasing(co.grid),
           "concentrate.grid needs at least 2 strictly increasing values");
  rd.check(co.grid.empty() || co.grid.front() >= 1, "concentrate.grid: N >= 1");
  rd.check(!co.epsilons.empty(), "concentrate.epsilons must be non-empty");
  for (double e : co.epsilons) rd.check(e > 0.0, "concentrate.epsilons must be > 0");
  rd.check(!co.check_steps.empty(), "concentrate.check_steps must be non-empty");
  for (long s : co.check_steps) rd.check(s >= 0, "concentrate.check_steps must be >= 0");
  rd.check(co.replications >= 8, "concentrate.replications >= 8");

  auto& cu = c.couple;
  if (const json* s = rd.section(j, "couple")) {
    rd.keys(*s, "couple", {"N", "n_steps", "paths", "min_pass_fraction"});
    rd.get(*s, "couple", "N", cu.N);
    rd.get(*s, "couple", "n_steps", cu.n_steps);
    rd.get(*s, "couple", "paths", cu.paths);
    rd.get(*s, "couple", "min_pass_fraction", cu.min_pass_fraction);
  }
  rd.check(cu.N >= 1, "couple.N >= 1");
  rd.check(cu.n_steps >= 0, "couple.n_steps >= 0");
  rd.check(cu.paths >= 1, "couple.paths >= 1");
  rd.check(cu.min_pass_fraction >= 0.0 && cu.min_pass_fraction <= 1.0, "couple.min_pass_fraction must lie in [0,1]");

  auto& mo = c.moments;
  if (const json* s = rd.section(j, "moments")) {
    rd.keys(*s, "moments", {"N", "n_steps", "burn_in", "replications"});
    rd.get(*s, "moments", "N", mo.N);
    rd.get(*s, "moments", "n_steps", mo.n_steps);
    rd.get(*s, "moments", "burn_in", mo.burn_in);
    rd.get(*s, "moments", "replications", mo.replications);
  }
  rd.check(mo.N >= 1, "moments.N >= 1");
  rd.check(mo.burn_in >= 0 && mo.burn_in + 2 <= mo.n_steps, "moments.burn_in must leave at least 2 steps");
  rd.check(mo.replications >= 8, "moments.replications >= 8");

  auto& cl = c.cltbound;
  if (const json* s = rd.section(j, "cltbound")) {
    rd.keys(*s, "cltbound", {"grid", "replications", "slope_tolerance"});
    rd.get(*s, "cltbound", "grid", cl.grid);
    rd.get(*s, "cltbound", "replications", cl.replications);
    rd.get(*s, "cltbound", "slope_tolerance", cl.slope_tolerance);
  }
  rd.check(cl.grid.size() >= 2 && strictly_increasing(cl.grid),
           "cltbound.grid needs at least 2 strictly increasing values");
  rd.check(cl.grid.empty() || cl.grid.front() >= 1, "cltbound.grid: N >= 1");
  rd.check(cl.replications >= 8, "cltbound.replications >= 8");
  rd.check(cl.slope_tolerance > 0.0, "cltbound.slope_tolerance > 0");

  auto& si = c.simulate;
  if (const json* s = rd.section(j, "simulate")) {
    rd.keys(*s, "simulate", {"N", "M", "n_steps"});
    rd.get(*s, "simulate", "N", si.N);
    rd.get(*s, "simulate", "M", si.M);
    rd.get(*s, "simulate", "n_steps", si.n_steps);
  }
  rd.check(si.N >= 1, "simulate.N >= 1");
  rd.check(si.M >= 1, "simulate.M >= 1");
  rd.check(si.n_steps >= 0, "simulate.n_steps >= 0");

  if (const json* s = rd.section(j, "output")) {
    rd.keys(*s, "output", {"dir", "threads"});
    rd.get(*s, "output", "dir", rc.out_dir);
    rd.get(*s, "output", "threads", rc.threads);
  }
  rd.check(!rc.out_dir.empty(), "output.dir must be non-empty");

  if (!rd.problems.empty()) throw ValidationError(rd.problems);
  return rc;
}

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into line and column.
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw InputError("config parse error at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                     e.what());
  }
  return config_from_json(j);
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace meanfield
