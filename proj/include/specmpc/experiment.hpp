#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "specmpc/config.hpp"

namespace specmpc {

// Everything a run needs, built once from a config.
struct Setup {
  Config cfg;
  std::shared_ptr<const Dynamics> dynamics;
  std::unique_ptr<WorldModel> model;
  std::unique_ptr<CemPlanner> planner;

  explicit Setup(const Config& c);
  Environment make_env() const { return Environment(dynamics, cfg.env.episode_steps); }
};

std::uint64_t probe_seed(std::uint64_t master);
std::uint64_t collection_seed(std::uint64_t master);

// Configured tau, or the calibrated percentile from a probe run.
double resolve_tau(const Setup& s);

DistillationDataset collect_dataset(const Setup& s, double tau);

struct ArmRun {
  std::uint64_t seed = 0;
  RunTelemetry telemetry;
};

struct Arm {
  std::string name;
  std::vector<ArmRun> runs;

  std::vector<double> rewards() const;
  std::vector<double> calls() const;
};

struct EvalMatrix {
  double tau = 0.0;
  std::vector<Arm> arms;

  const Arm& arm(const std::string& name) const;
};

// Arm names, in output order.
std::vector<std::string> eval_arm_names();

// baseline; spec_L3 (L = 3, tau = inf, no corrector); spec_tau (configured
// L and tau, no corrector); spec_gated; spec_temporal. Seeds are
// env.seed + i.
EvalMatrix run_eval_matrix(const Setup& s, int n_seeds, double tau, const Corrector& gated,
                           const Corrector& temporal, std::ostream* log = nullptr);

double mean_of(const std::vector<double>& v);
// Sample standard deviation; 0 for fewer than two values.
double stddev_of(const std::vector<double>& v);

void write_eval_csv(const EvalMatrix& m, const LatencyModel& lm, const std::string& aggregate_path,
                    const std::string& runs_path, int hist_columns);

}  // namespace specmpc
