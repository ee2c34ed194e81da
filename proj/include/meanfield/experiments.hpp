#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "meanfield/dynamics.hpp"
#include "meanfield/limit.hpp"
#include "meanfield/model.hpp"

namespace meanfield {

inline constexpr const char* kVersion = "meanfield 0.1.0";

enum class Verdict { Pass, Inconclusive, Fail };
std::string to_string(Verdict v);
// 0 pass, 10 inconclusive, 20 failed theorem check.
int exit_code(Verdict v);
// Worst of the two: Fail over Inconclusive over Pass.
Verdict combine(Verdict a, Verdict b);

struct RatesOptions {
  std::vector<std::size_t> grid{64, 128, 256, 512, 1024};
  // Empty means M = N.
  std::vector<std::size_t> m_grid;
  long n_steps = 200;
  std::size_t replications = 32;
  long window_start = 20;
  long eval_every = 10;
  double slope_tolerance = 0.15;
};

struct ContractOptions {
  double separation = 4.0;  // shift of the second particle and field init
  long n_steps = 40;
  double floor = 1e-7;
  double fp_tol = 1e-3;
  long fp_max_iter = 200;
};

struct ChaosOptions {
  std::vector<std::size_t> grid{8, 32, 128, 512};
  long burn_in = 60;
  std::size_t replications = 400;
};

struct ConcentrationOptions {
  std::vector<std::size_t> grid{16, 32, 64, 128};
  std::vector<double> epsilons{0.1, 0.2, 0.3};
  std::vector<long> check_steps{10, 30};
  std::size_t replications = 500;
};

struct CouplingOptions {
  std::size_t N = 64;
  long n_steps = 50;
  std::size_t paths = 200;
  double min_pass_fraction = 0.99;
};

struct MomentOptions {
  std::size_t N = 256;
  long n_steps = 100;
  long burn_in = 20;
  std::size_t replications = 32;
};

struct CltOptions {
  std::vector<std::size_t> grid{100, 1000, 10000};
  std::size_t replications = 200;
  double slope_tolerance = 0.1;
};

struct SimulateOptions {
  std::size_t N = 64;
  std::size_t M = 64;
  long n_steps = 20;
};

struct ExperimentConfig {
  ModelParams params;
  InitialCondition init;
  System system = System::Ips2;
  std::uint64_t seed = 1;
  double tau = 1.0;
  LimitOptions limit;
  RatesOptions rates;
  ContractOptions contract;
  ChaosOptions chaos;
  ConcentrationOptions concentrate;
  CouplingOptions couple;
  MomentOptions moments;
  CltOptions cltbound;
  SimulateOptions simulate;
};

// Raw rows plus the summary and verdict derived from them.
struct ExperimentResult {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  nlohmann::json summary = nlohmann::json::object();
  Verdict verdict = Verdict::Inconclusive;
  std::vector<std::string> notes;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  nlohmann::json manifest(const nlohmann::json& config) const;
};

ExperimentResult run_convergence_rate(const ExperimentConfig& cfg);
// Geometric decay between two separated limit trajectories, plus the
// fixed-point uniqueness check from the same pair of inits.
ExperimentResult run_contraction(const ExperimentConfig& cfg);
ExperimentResult run_chaos(const ExperimentConfig& cfg);
ExperimentResult run_concentration(const ExperimentConfig& cfg);
ExperimentResult run_coupling_check(const ExperimentConfig& cfg);
ExperimentResult run_moment_monitor(const ExperimentConfig& cfg);
ExperimentResult check_kernel_clt_bound(const ExperimentConfig& cfg);

// Trajectory CSV (step, particle, coordinates) of one simulate run.
std::string simulate_trajectory_csv(const ExperimentConfig& cfg);

// Limit trajectory up to n_steps. It ends early once successive states agree
// to stop_tol; index it through ref_at.
std::vector<LimitState> reference_trajectory(const ModelParams& p, const InitialCondition& init, long n_steps,
                                             const LimitOptions& opt, double stop_tol = 1e-12);
inline const LimitState& ref_at(const std::vector<LimitState>& t, long n) {
  return t[std::min<std::size_t>(std::size_t(n), t.size() - 1)];
}

// Bounded test functions of the chaos battery and of the kernel bound check.
struct TestFunction {
  std::string name;
  double (*f)(double);
  double sup_norm;
};
const std::vector<TestFunction>& bounded_test_functions();
// (P f)(x) for a d = 1 kernel.
double kernel_expectation(const KernelSpec& k, const TestFunction& f, double x);

// Writes the CSV and then renames it into place.
void write_csv(const std::filesystem::path& path, const ExperimentResult& r);
// Writes text to a sibling temporary file and renames it over path.
void write_atomic(const std::filesystem::path& path, const std::string& contents);
std::string format_double(double v);
std::string to_csv(const ExperimentResult& r);

// 64-bit FNV-1a of a string.
std::uint64_t fnv1a(const std::string& s);

}  // namespace meanfield
