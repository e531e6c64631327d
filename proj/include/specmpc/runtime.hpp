#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "specmpc/corrector.hpp"
#include "specmpc/env.hpp"
#include "specmpc/planner.hpp"
#include "specmpc/telemetry.hpp"
#include "specmpc/world_model.hpp"

namespace specmpc {

struct SpecConfig {
  int H = 3;
  int L = 3;
  double tau = std::numeric_limits<double>::infinity();
  bool corrector_enabled = false;
  int K = 4;

  void validate() const;
};

// ||z_real - z_hat||_2; throws ShapeError on a dimension mismatch.
double mismatch(const LatentState& z_real, const LatentState& z_hat);

// Linear-interpolated percentile (q in [0, 100]) of a non-empty sample.
double percentile(std::vector<double> values, double q);

// Plan factory for one episode. Each call draws planner randomness and
// canonical-rollout noise from sub-streams keyed by (seed time, kind), so a
// plan depends only on its seed latent, its time and its warm start, never
// on how many plans were made before it. Plans seeded at the real latent
// warm-start from the previous real-seeded plan shifted to the current
// time; chained plans start from a zero mean.
class PlanContext {
 public:
  PlanContext(const WorldModel& model, const CemPlanner& planner, std::uint64_t seed);

  // Plan from the real latent at time t and make it the warm-start source.
  Plan plan_real(const LatentState& z_real, int t);
  // The plan plan_real(z_real, t) would return, without side effects. This
  // is the teacher for distillation.
  Plan teacher(const LatentState& z_real, int t) const;
  // Plan from a predicted latent; `seed_time` is the step at which its
  // first action would be applied.
  Plan plan_chained(const LatentState& z_hat, int seed_time) const;

  const WorldModel& model() const { return model_; }
  const CemPlanner& planner() const { return planner_; }

 private:
  Plan run(const LatentState& seed, int seed_time, int kind, const Mat* init) const;
  std::optional<Mat> warm(int t) const;

  const WorldModel& model_;
  const CemPlanner& planner_;
  Rng plan_rng_;
  Rng noise_rng_;
  std::optional<Plan> last_real_;
  int last_real_time_ = 0;
  std::optional<Plan> prev_real_;
  int prev_real_time_ = 0;
};

// Action and latent FIFOs. latents[i] is the predicted latent of the state
// at which actions[i] is applied. Each entry also remembers which planner
// call produced it and whether it is the first action of a block seeded at
// the real latent.
struct SpecQueues {
  std::deque<Action> actions;
  std::deque<LatentState> latents;
  std::deque<RunTelemetry::CallId> calls;
  std::deque<bool> fresh;
  // Predicted latent after the last queued action; seeds the next chained
  // block.
  LatentState tail;

  int size() const;
  bool empty() const { return size() == 0; }
  void clear();
  void push(Action a, LatentState z, RunTelemetry::CallId call, bool is_fresh);
};

// Fills the queues with whole plan blocks until at least L pairs are
// queued, then trims the back down to L. The first block is seeded at
// z_real when the queues are empty; every further block is seeded at the
// queues' terminal predicted latent. Returns the number of planner calls
// made; `chained_seed_out` receives the seed of the first chained block.
int refill_queues(SpecQueues& q, const LatentState& z_real, int t, const SpecConfig& cfg,
                  PlanContext& ctx, RunTelemetry& tel, LatentState* chained_seed_out = nullptr);

struct StepOutcome {
  Action executed_action;
  StepMode mode = StepMode::fresh_plan;
  double d_t = 0.0;
  bool planner_called = false;
  int planner_calls = 0;
  double reward = 0.0;
};

// What the controller saw at a non-fallback pop, for dataset collection.
struct PopEvent {
  int t = 0;
  LatentState z_real;
  LatentState z_hat;
  Action a_spec;
  bool fresh = false;
};

class SpeculativeController {
 public:
  SpeculativeController(const SpecConfig& cfg, const WorldModel& model, const CemPlanner& planner,
                        const Corrector* corrector, std::uint64_t seed);

  // One control step on `env` (which must not be done).
  StepOutcome step(Environment& env);

  void set_pop_observer(std::function<void(const PopEvent&)> f) { observer_ = std::move(f); }

  const SpecQueues& queues() const { return queues_; }
  const HistoryBuffer& history() const { return history_; }
  RunTelemetry& telemetry() { return tel_; }
  PlanContext& context() { return ctx_; }

 private:
  SpecConfig cfg_;
  const WorldModel& model_;
  const Corrector* corrector_;
  PlanContext ctx_;
  SpecQueues queues_;
  HistoryBuffer history_;
  RunTelemetry tel_;
  std::function<void(const PopEvent&)> observer_;
};

struct EpisodeTrace {
  std::vector<Observation> states;  // s_0 .. s_T
  std::vector<Action> actions;
  std::vector<double> rewards;
  std::vector<StepMode> modes;
  std::vector<double> mismatch;
};

struct EpisodeResult {
  EpisodeTrace trace;
  RunTelemetry telemetry;
};

EpisodeResult run_episode(Environment& env, const SpecConfig& cfg, const WorldModel& model,
                          const CemPlanner& planner, const Corrector* corrector, std::uint64_t seed,
                          std::function<void(const PopEvent&)> observer = {});

// Replans from the real latent every step and executes the first action.
EpisodeResult run_baseline(Environment& env, const WorldModel& model, const CemPlanner& planner,
                           std::uint64_t seed);

// Percentile of d_t over a corrector-free, never-falling-back probe run.
double calibrate_tau(Environment& env, SpecConfig cfg, const WorldModel& model,
                     const CemPlanner& planner, std::uint64_t seed, double pct = 70.0);

}  // namespace specmpc
