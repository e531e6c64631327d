#include "specmpc/experiment.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "specmpc/csv.hpp"

namespace specmpc {

Setup::Setup(const Config& c) : cfg(c) {
  cfg.validate();
  dynamics = config_dynamics(cfg);
  model = config_world_model(cfg, dynamics);
  planner = std::make_unique<CemPlanner>(cfg.planner);
}

std::uint64_t probe_seed(std::uint64_t master) { return Rng(master).fork("tau.probe").next_u64(); }

std::uint64_t collection_seed(std::uint64_t master) { return Rng(master).fork("collect").next_u64(); }

double resolve_tau(const Setup& s) {
  if (s.cfg.speculation.tau) return *s.cfg.speculation.tau;
  Environment env = s.make_env();
  return calibrate_tau(env, s.cfg.spec_config(0.0), *s.model, *s.planner, probe_seed(s.cfg.env.seed),
                       s.cfg.speculation.tau_percentile);
}

DistillationDataset collect_dataset(const Setup& s, double tau) {
  Environment env = s.make_env();
  return collect_distillation_data(env, *s.model, *s.planner, s.cfg.spec_config(tau),
                                   s.cfg.corrector.n_episodes, collection_seed(s.cfg.env.seed));
}

std::vector<double> Arm::rewards() const {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(r.telemetry.cum_reward());
  return out;
}

std::vector<double> Arm::calls() const {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(static_cast<double>(r.telemetry.planner_calls()));
  return out;
}

const Arm& EvalMatrix::arm(const std::string& name) const {
  for (const auto& a : arms) {
    if (a.name == name) return a;
  }
  throw std::out_of_range("no eval arm named " + name);
}

std::vector<std::string> eval_arm_names() {
  return {"baseline", "spec_L3", "spec_tau", "spec_gated", "spec_temporal"};
}

EvalMatrix run_eval_matrix(const Setup& s, int n_seeds, double tau, const Corrector& gated,
                           const Corrector& temporal, std::ostream* log) {
  if (n_seeds < 1) throw std::invalid_argument("eval: n_seeds must be >= 1");
  EvalMatrix m;
  m.tau = tau;
  for (const auto& name : eval_arm_names()) m.arms.push_back(Arm{name, {}});
  Environment env = s.make_env();
  for (int i = 0; i < n_seeds; ++i) {
    const std::uint64_t seed = s.cfg.env.seed + static_cast<std::uint64_t>(i);
    for (auto& arm : m.arms) {
      EpisodeResult r;
      SpecConfig sc = s.cfg.spec_config(tau);
      sc.corrector_enabled = false;
      const Corrector* corrector = nullptr;
      if (arm.name == "baseline") {
        r = run_baseline(env, *s.model, *s.planner, seed);
      } else {
        if (arm.name == "spec_L3") {
          sc.L = 3;
          sc.tau = std::numeric_limits<double>::infinity();
        } else if (arm.name == "spec_gated") {
          sc.corrector_enabled = true;
          corrector = &gated;
        } else if (arm.name == "spec_temporal") {
          sc.corrector_enabled = true;
          corrector = &temporal;
        }
        r = run_episode(env, sc, *s.model, *s.planner, corrector, seed);
      }
      if (log != nullptr) {
        *log << "seed " << seed << " " << arm.name << " reward " << format_double(r.telemetry.cum_reward())
             << " calls " << r.telemetry.planner_calls() << "\n";
      }
      arm.runs.push_back(ArmRun{seed, std::move(r.telemetry)});
    }
  }
  return m;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

void write_eval_csv(const EvalMatrix& m, const LatencyModel& lm, const std::string& aggregate_path,
                    const std::string& runs_path, int hist_columns) {
  CsvWriter agg(aggregate_path);
  agg.row({"arm", "n_seeds", "tau", "reward_mean", "reward_std", "calls_mean", "calls_std",
           "sim_ms_mean", "sim_ms_std", "speedup_pct_mean", "fallbacks_mean", "corrected_mean"});
  CsvWriter runs(runs_path);
  std::vector<std::string> header{"arm", "seed"};
  for (auto& h : summary_header(hist_columns)) header.push_back(h);
  runs.row(header);
  for (const auto& arm : m.arms) {
    std::vector<double> ms, speedup, fallbacks, corrected;
    for (const auto& r : arm.runs) {
      const LatencyReport lat = r.telemetry.latency(lm);
      ms.push_back(lat.per_step_ms);
      speedup.push_back(lat.speedup_pct);
      fallbacks.push_back(static_cast<double>(r.telemetry.fallbacks()));
      corrected.push_back(static_cast<double>(r.telemetry.corrected()));
      std::vector<std::string> row{arm.name, std::to_string(r.seed)};
      for (auto& f : summary_row(r.telemetry, lm, hist_columns)) row.push_back(f);
      runs.row(row);
    }
    const double arm_tau = arm.name == "baseline" ? 0.0
                           : arm.name == "spec_L3" ? std::numeric_limits<double>::infinity()
                                                   : m.tau;
    agg.row({arm.name, std::to_string(arm.runs.size()), format_double(arm_tau),
             format_double(mean_of(arm.rewards())), format_double(stddev_of(arm.rewards())),
             format_double(mean_of(arm.calls())), format_double(stddev_of(arm.calls())),
             format_double(mean_of(ms)), format_double(stddev_of(ms)), format_double(mean_of(speedup)),
             format_double(mean_of(fallbacks)), format_double(mean_of(corrected))});
  }
  agg.close();
  runs.close();
}

}  // namespace specmpc
