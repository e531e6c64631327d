#include "specmpc/telemetry.hpp"

#include <algorithm>
#include <stdexcept>

#include "specmpc/csv.hpp"

namespace specmpc {

const char* mode_name(StepMode m) {
  switch (m) {
    case StepMode::fresh_plan: return "fresh_plan";
    case StepMode::speculative: return "speculative";
    case StepMode::corrected: return "corrected";
    case StepMode::fallback: return "fallback";
  }
  return "unknown";
}

void LatencyModel::validate() const {
  if (!(c_plan >= 0.0)) throw std::invalid_argument("latency.c_plan must be >= 0");
  if (!(c_corr >= 0.0)) throw std::invalid_argument("latency.c_corr must be >= 0");
  if (!(c_enc >= 0.0)) throw std::invalid_argument("latency.c_enc must be >= 0");
}

LatencyReport simulated_latency(const CallCounts& counts, const LatencyModel& lm) {
  if (counts.steps <= 0) throw std::invalid_argument("simulated_latency: total steps must be > 0");
  LatencyReport r;
  const double steps = static_cast<double>(counts.steps);
  r.total_ms = static_cast<double>(counts.planner_calls) * lm.c_plan +
               static_cast<double>(counts.corrected) * lm.c_corr + steps * lm.c_enc;
  r.per_step_ms = r.total_ms / steps;
  r.baseline_per_step_ms = lm.c_plan + lm.c_enc;
  r.speedup_pct = r.baseline_per_step_ms > 0.0
                      ? 100.0 * (r.baseline_per_step_ms - r.per_step_ms) / r.baseline_per_step_ms
                      : 0.0;
  return r;
}

RunTelemetry::CallId RunTelemetry::open_call() {
  const CallId id = calls_++;
  open_.emplace(id, 0);
  return id;
}

void RunTelemetry::close_call(CallId id) {
  auto it = open_.find(id);
  if (it == open_.end()) throw std::logic_error("telemetry: closing a call that is not open");
  ++hist_[it->second];
  open_.erase(it);
}

void RunTelemetry::finalize() {
  while (!open_.empty()) close_call(open_.begin()->first);
}

void RunTelemetry::record_step(const StepRecord& rec, CallId source) {
  auto it = open_.find(source);
  if (it == open_.end()) throw std::logic_error("telemetry: step attributed to a closed call");
  ++it->second;
  if (rec.mode == StepMode::fallback) ++fallbacks_;
  if (rec.mode == StepMode::corrected) ++corrected_;
  cum_reward_ += rec.reward;
  records_.push_back(rec);
}

long RunTelemetry::hist_at(int k) const {
  auto it = hist_.find(k);
  return it == hist_.end() ? 0 : it->second;
}

long RunTelemetry::histogram_steps() const {
  long total = 0;
  for (const auto& [k, n] : hist_) total += static_cast<long>(k) * n;
  return total;
}

std::vector<double> RunTelemetry::mismatch_series() const {
  std::vector<double> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.d_t);
  return out;
}

int histogram_columns(const RunTelemetry& tel, int min_columns) {
  int n = min_columns;
  if (!tel.hist().empty()) n = std::max(n, tel.hist().rbegin()->first);
  return n;
}

std::vector<std::string> summary_header(int hist_columns) {
  std::vector<std::string> h{"steps", "planner_calls"};
  for (int k = 1; k <= hist_columns; ++k) h.push_back("hist_k" + std::to_string(k));
  for (const char* c : {"fallbacks", "corrected", "cum_reward", "sim_ms_per_step", "speedup_pct"}) {
    h.emplace_back(c);
  }
  return h;
}

std::vector<std::string> summary_row(const RunTelemetry& tel, const LatencyModel& lm,
                                     int hist_columns) {
  std::vector<std::string> row{std::to_string(tel.steps()), std::to_string(tel.planner_calls())};
  for (int k = 1; k <= hist_columns; ++k) row.push_back(std::to_string(tel.hist_at(k)));
  row.push_back(std::to_string(tel.fallbacks()));
  row.push_back(std::to_string(tel.corrected()));
  row.push_back(format_double(tel.cum_reward()));
  if (tel.steps() > 0) {
    const LatencyReport lat = tel.latency(lm);
    row.push_back(format_double(lat.per_step_ms));
    row.push_back(format_double(lat.speedup_pct));
  } else {
    row.emplace_back("0");
    row.emplace_back("0");
  }
  return row;
}

std::vector<std::string> trace_header(int action_dim) {
  std::vector<std::string> h{"t", "mode", "d_t", "planner_called"};
  for (const auto& n : indexed_names("a", action_dim)) h.push_back(n);
  h.emplace_back("reward");
  h.emplace_back("cum_reward");
  return h;
}

void export_csv(const RunTelemetry& tel, const LatencyModel& lm, int action_dim,
                const std::string& summary_path, const std::string& trace_path,
                int hist_columns) {
  const int cols = hist_columns > 0 ? hist_columns : histogram_columns(tel);
  {
    CsvWriter out(summary_path);
    out.row(summary_header(cols));
    if (tel.steps() > 0) out.row(summary_row(tel, lm, cols));
    out.close();
  }
  CsvWriter out(trace_path);
  out.row(trace_header(action_dim));
  double cum = 0.0;
  for (const auto& r : tel.records()) {
    cum += r.reward;
    std::vector<std::string> row{std::to_string(r.t), mode_name(r.mode), format_double(r.d_t),
                                 r.planner_called ? "1" : "0"};
    for (Eigen::Index i = 0; i < r.action.size(); ++i) row.push_back(format_double(r.action(i)));
    row.push_back(format_double(r.reward));
    row.push_back(format_double(cum));
    out.row(row);
  }
  out.close();
}

}  // namespace specmpc
