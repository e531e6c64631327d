#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "specmpc/tensor.hpp"

namespace specmpc {

enum class StepMode { fresh_plan, speculative, corrected, fallback };

const char* mode_name(StepMode m);

struct StepRecord {
  int t = 0;
  StepMode mode = StepMode::fresh_plan;
  double d_t = 0.0;
  bool planner_called = false;
  Vec action;
  double reward = 0.0;
};

struct LatencyModel {
  double c_plan = 36.2;
  double c_corr = 12.0;
  double c_enc = 0.0;

  void validate() const;
};

struct LatencyReport {
  double total_ms = 0.0;
  double per_step_ms = 0.0;
  double baseline_per_step_ms = 0.0;
  // Percent reduction of per-step latency against one plan call per step.
  double speedup_pct = 0.0;
  double reduction_ms() const { return baseline_per_step_ms - per_step_ms; }
};

// Counts from which the simulated latency is computed.
struct CallCounts {
  long steps = 0;
  long planner_calls = 0;
  long corrected = 0;
};

LatencyReport simulated_latency(const CallCounts& counts, const LatencyModel& lm);

// Accounting for one episode. Every planner call opens a bucket; each
// executed step is attributed to the call whose block produced its action;
// a bucket is closed when its block is exhausted or flushed, and its
// executed count lands in the histogram.
class RunTelemetry {
 public:
  using CallId = long;

  CallId open_call();
  void close_call(CallId id);
  // Closes every bucket still open (end of episode).
  void finalize();

  void record_step(const StepRecord& rec, CallId source);

  long planner_calls() const { return calls_; }
  long steps() const { return static_cast<long>(records_.size()); }
  long fallbacks() const { return fallbacks_; }
  long corrected() const { return corrected_; }
  double cum_reward() const { return cum_reward_; }
  // Executed-actions-per-call histogram over closed buckets (k -> calls).
  const std::map<int, long>& hist() const { return hist_; }
  long hist_at(int k) const;
  long open_calls() const { return static_cast<long>(open_.size()); }
  const std::vector<StepRecord>& records() const { return records_; }
  std::vector<double> mismatch_series() const;

  CallCounts counts() const { return {steps(), planner_calls(), corrected()}; }
  LatencyReport latency(const LatencyModel& lm) const { return simulated_latency(counts(), lm); }

  // Sum over closed buckets of k * hist[k].
  long histogram_steps() const;

  // Measured planner wall time, kept apart from the simulated figures.
  double wall_plan_ms = 0.0;

 private:
  long calls_ = 0;
  long fallbacks_ = 0;
  long corrected_ = 0;
  double cum_reward_ = 0.0;
  std::map<CallId, int> open_;
  std::map<int, long> hist_;
  std::vector<StepRecord> records_;
};

// Number of hist_k columns written: at least 3 and at least the largest
// observed bucket.
int histogram_columns(const RunTelemetry& tel, int min_columns = 3);

std::vector<std::string> summary_header(int hist_columns);
std::vector<std::string> summary_row(const RunTelemetry& tel, const LatencyModel& lm,
                                     int hist_columns);
std::vector<std::string> trace_header(int action_dim);

// summary.csv holds one row; trace.csv one row per step. An empty run gives
// header-only files.
void export_csv(const RunTelemetry& tel, const LatencyModel& lm, int action_dim,
                const std::string& summary_path, const std::string& trace_path,
                int hist_columns = 0);

}  // namespace specmpc
