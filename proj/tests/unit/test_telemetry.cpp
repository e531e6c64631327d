#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "specmpc/csv.hpp"
#include "specmpc/telemetry.hpp"

using namespace specmpc;

namespace {

StepRecord rec(int t, StepMode m, double d = 0.0, double r = -1.0) {
  StepRecord s;
  s.t = t;
  s.mode = m;
  s.d_t = d;
  s.planner_called = m == StepMode::fresh_plan || m == StepMode::fallback;
  s.action = Vec::Constant(1, 0.25 * (t % 3));
  s.reward = r;
  return s;
}

// Appends `calls` calls that each execute `k` actions.
void add_blocks(RunTelemetry& tel, int& t, int calls, int k) {
  for (int c = 0; c < calls; ++c) {
    const auto id = tel.open_call();
    for (int i = 0; i < k; ++i, ++t) tel.record_step(rec(t, i == 0 ? StepMode::fresh_plan : StepMode::corrected, 0.01 * i), id);
    tel.close_call(id);
  }
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tmp(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("specmpc_tel_" + name)).string();
}

}  // namespace

TEST_CASE("three calls of three actions") {
  RunTelemetry tel;
  int t = 0;
  add_blocks(tel, t, 3, 3);
  CHECK(tel.steps() == 9);
  CHECK(tel.planner_calls() == 3);
  CHECK(tel.hist().size() == 1);
  CHECK(tel.hist_at(3) == 3);
  CHECK(tel.hist_at(1) == 0);
  CHECK(tel.corrected() == 6);
  CHECK(tel.histogram_steps() == 9);
}

TEST_CASE("baseline shape") {
  RunTelemetry tel;
  int t = 0;
  add_blocks(tel, t, 500, 1);
  CHECK(tel.hist_at(1) == 500);
  CHECK(tel.planner_calls() == 500);
  CHECK(tel.latency(LatencyModel{}).speedup_pct == doctest::Approx(0.0));
}

TEST_CASE("the reported call histogram closes its books") {
  RunTelemetry tel;
  int t = 0;
  add_blocks(tel, t, 20, 3);
  add_blocks(tel, t, 178, 2);
  add_blocks(tel, t, 84, 1);
  CHECK(tel.planner_calls() == 282);
  CHECK(tel.steps() == 500);
  CHECK(tel.histogram_steps() == 500);
  CHECK(tel.hist_at(3) == 20);
  CHECK(tel.hist_at(2) == 178);
  CHECK(tel.hist_at(1) == 84);
  CHECK(3 * 20 + 2 * 178 + 1 * 84 == 500);
}

TEST_CASE("fallbacks and flushed calls") {
  RunTelemetry tel;
  const auto a = tel.open_call();
  const auto b = tel.open_call();
  tel.record_step(rec(0, StepMode::fresh_plan), a);
  tel.close_call(a);
  tel.close_call(b);  // flushed before executing anything
  const auto c = tel.open_call();
  tel.record_step(rec(1, StepMode::fallback, 0.7), c);
  tel.close_call(c);
  CHECK(tel.fallbacks() == 1);
  CHECK(tel.hist_at(0) == 1);
  CHECK(tel.hist_at(1) == 2);
  CHECK(tel.histogram_steps() == 2);
  CHECK_THROWS(tel.close_call(a));
  CHECK_THROWS(tel.record_step(rec(2, StepMode::speculative), a));
}

TEST_CASE("finalize closes open buckets") {
  RunTelemetry tel;
  const auto a = tel.open_call();
  tel.record_step(rec(0, StepMode::fresh_plan), a);
  tel.record_step(rec(1, StepMode::speculative), a);
  CHECK(tel.open_calls() == 1);
  tel.finalize();
  CHECK(tel.open_calls() == 0);
  CHECK(tel.hist_at(2) == 1);
  CHECK(tel.cum_reward() == doctest::Approx(-2.0));
  CHECK(tel.mismatch_series().size() == 2);
}

TEST_CASE("latency replay of the reported counts") {
  const LatencyModel lm;
  const auto rep = simulated_latency({500, 282, 282}, lm);
  CHECK(rep.baseline_per_step_ms == doctest::Approx(36.2));
  CHECK(std::abs(rep.reduction_ms() - 9.0) <= 0.5);
  CHECK(std::abs(rep.speedup_pct - 25.0) <= 1.0);
  CHECK(rep.total_ms == doctest::Approx(282 * 36.2 + 282 * 12.0));
}

TEST_CASE("latency arithmetic edge cases") {
  LatencyModel lm;
  const auto base = simulated_latency({100, 100, 0}, lm);
  CHECK(base.speedup_pct == doctest::Approx(0.0));
  CHECK(base.reduction_ms() == doctest::Approx(0.0));
  LatencyModel free_corr = lm;
  free_corr.c_corr = 0.0;
  CHECK(simulated_latency({500, 282, 282}, free_corr).speedup_pct >
        simulated_latency({500, 282, 282}, lm).speedup_pct);
  LatencyModel enc = lm;
  enc.c_enc = 5.0;
  CHECK(simulated_latency({10, 10, 0}, enc).per_step_ms == doctest::Approx(41.2));
  CHECK_THROWS(simulated_latency({0, 0, 0}, lm));
  LatencyModel bad = lm;
  bad.c_plan = -1.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("CSV export reads back") {
  RunTelemetry tel;
  int t = 0;
  add_blocks(tel, t, 2, 3);
  add_blocks(tel, t, 1, 4);
  const auto s = tmp("summary.csv"), tr = tmp("trace.csv");
  export_csv(tel, LatencyModel{}, 1, s, tr);
  const CsvTable sum = read_csv(s);
  REQUIRE(sum.rows.size() == 1);
  CHECK(sum.header == summary_header(4));
  CHECK(sum.number(0, "steps") == 10);
  CHECK(sum.number(0, "planner_calls") == 3);
  CHECK(sum.number(0, "hist_k3") == 2);
  CHECK(sum.number(0, "hist_k4") == 1);
  CHECK(sum.number(0, "hist_k1") == 0);
  CHECK(sum.number(0, "cum_reward") == tel.cum_reward());
  CHECK(sum.number(0, "speedup_pct") == tel.latency(LatencyModel{}).speedup_pct);

  const CsvTable trace = read_csv(tr);
  REQUIRE(trace.rows.size() == 10);
  CHECK(trace.header == trace_header(1));
  CHECK(trace.rows[0][trace.column("mode")] == "fresh_plan");
  CHECK(trace.rows[1][trace.column("mode")] == "corrected");
  CHECK(trace.number(9, "cum_reward") == doctest::Approx(-10.0));
  CHECK(trace.number(1, "d_t") == 0.01);

  const std::string first = slurp(s) + slurp(tr);
  export_csv(tel, LatencyModel{}, 1, s, tr);
  CHECK(slurp(s) + slurp(tr) == first);
  std::filesystem::remove(s);
  std::filesystem::remove(tr);
}

TEST_CASE("an empty run exports headers only") {
  RunTelemetry tel;
  const auto s = tmp("empty_summary.csv"), tr = tmp("empty_trace.csv");
  export_csv(tel, LatencyModel{}, 2, s, tr);
  CHECK(read_csv(s).rows.empty());
  CHECK(read_csv(tr).rows.empty());
  CHECK(read_csv(tr).header == trace_header(2));
  CHECK(read_csv(s).header.size() == summary_header(3).size());
  std::filesystem::remove(s);
  std::filesystem::remove(tr);
}

TEST_CASE("mode names") {
  CHECK(std::string(mode_name(StepMode::fresh_plan)) == "fresh_plan");
  CHECK(std::string(mode_name(StepMode::speculative)) == "speculative");
  CHECK(std::string(mode_name(StepMode::corrected)) == "corrected");
  CHECK(std::string(mode_name(StepMode::fallback)) == "fallback");
}
