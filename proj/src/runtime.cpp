#include "specmpc/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace specmpc {

namespace {

constexpr int kRealKind = 0;
constexpr int kChainedKind = 1;

std::uint64_t plan_key(int seed_time, int kind) {
  return static_cast<std::uint64_t>(seed_time) * 2u + static_cast<std::uint64_t>(kind);
}

}  // namespace

void SpecConfig::validate() const {
  if (H < 1) throw std::invalid_argument("speculation.H must be >= 1");
  if (L < 1) throw std::invalid_argument("speculation.L must be >= 1");
  if (!(tau >= 0.0)) throw std::invalid_argument("speculation.tau must be >= 0");
  if (K < 1) throw std::invalid_argument("speculation.history_K must be >= 1");
}

double mismatch(const LatentState& z_real, const LatentState& z_hat) {
  require_same_shape(z_real, z_hat, "mismatch");
  return (z_real - z_hat).norm();
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 100.0)) throw std::invalid_argument("percentile must be in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

PlanContext::PlanContext(const WorldModel& model, const CemPlanner& planner, std::uint64_t seed)
    : model_(model),
      planner_(planner),
      plan_rng_(Rng(seed).fork("planner")),
      noise_rng_(Rng(seed).fork("model.noise")) {
  if (planner.config().horizon < 1) throw std::invalid_argument("planner horizon must be >= 1");
}

std::optional<Mat> PlanContext::warm(int t) const {
  if (!planner_.config().warm_start || !last_real_) return std::nullopt;
  return warm_start(*last_real_, t - last_real_time_);
}

Plan PlanContext::run(const LatentState& seed, int seed_time, int kind, const Mat* init) const {
  const std::uint64_t key = plan_key(seed_time, kind);
  Rng rng = plan_rng_.fork(key);
  Rng noise = noise_rng_.fork(key);
  return planner_.plan(model_, seed, rng, &noise, init);
}

Plan PlanContext::plan_real(const LatentState& z_real, int t) {
  Plan p = teacher(z_real, t);
  if (!last_real_ || last_real_time_ != t) {
    prev_real_ = std::move(last_real_);
    prev_real_time_ = last_real_time_;
  }
  last_real_ = p;
  last_real_time_ = t;
  return p;
}

Plan PlanContext::teacher(const LatentState& z_real, int t) const {
  // A real plan already made at this step was warm-started from the one
  // before it; reproduce that instead of warm-starting from itself.
  std::optional<Mat> init;
  if (last_real_ && last_real_time_ == t) {
    if (planner_.config().warm_start && prev_real_) init = warm_start(*prev_real_, t - prev_real_time_);
  } else {
    init = warm(t);
  }
  return run(z_real, t, kRealKind, init ? &*init : nullptr);
}

Plan PlanContext::plan_chained(const LatentState& z_hat, int seed_time) const {
  return run(z_hat, seed_time, kChainedKind, nullptr);
}

int SpecQueues::size() const {
  const auto n = actions.size();
  if (latents.size() != n || calls.size() != n || fresh.size() != n) {
    throw std::logic_error("speculation queues out of sync");
  }
  return static_cast<int>(n);
}

void SpecQueues::clear() {
  actions.clear();
  latents.clear();
  calls.clear();
  fresh.clear();
  tail = LatentState();
}

void SpecQueues::push(Action a, LatentState z, RunTelemetry::CallId call, bool is_fresh) {
  actions.push_back(std::move(a));
  latents.push_back(std::move(z));
  calls.push_back(call);
  fresh.push_back(is_fresh);
}

int refill_queues(SpecQueues& q, const LatentState& z_real, int t, const SpecConfig& cfg,
                  PlanContext& ctx, RunTelemetry& tel, LatentState* chained_seed_out) {
  int calls = 0;
  bool seed_reported = false;
  while (q.size() < cfg.L) {
    const bool fresh = q.empty();
    const int seed_time = t + q.size();
    if (!fresh && q.tail.size() == 0) throw std::logic_error("chained refill without a terminal latent");
    if (!fresh && !seed_reported && chained_seed_out != nullptr) {
      *chained_seed_out = q.tail;
      seed_reported = true;
    }
    Plan p = fresh ? ctx.plan_real(z_real, t) : ctx.plan_chained(q.tail, seed_time);
    ++calls;
    if (p.horizon() < 1 || p.predicted_latents.size() != p.actions.size() + 1) {
      throw std::logic_error("planner returned a malformed plan");
    }
    const auto id = tel.open_call();
    for (int i = 0; i < p.horizon(); ++i) {
      q.push(p.actions[static_cast<std::size_t>(i)], p.predicted_latents[static_cast<std::size_t>(i)],
             id, fresh && i == 0);
    }
    q.tail = p.predicted_latents.back();
  }
  while (q.size() > cfg.L) {
    const auto id = q.calls.back();
    // The dropped action's pre-action latent is where the kept prefix ends.
    q.tail = q.latents.back();
    q.actions.pop_back();
    q.latents.pop_back();
    q.calls.pop_back();
    q.fresh.pop_back();
    if (q.calls.empty() || q.calls.back() != id) tel.close_call(id);
  }
  return calls;
}

SpeculativeController::SpeculativeController(const SpecConfig& cfg, const WorldModel& model,
                                             const CemPlanner& planner, const Corrector* corrector,
                                             std::uint64_t seed)
    : cfg_(cfg), model_(model), corrector_(corrector), ctx_(model, planner, seed), history_(cfg.K) {
  cfg_.validate();
  if (cfg_.corrector_enabled) {
    if (corrector_ == nullptr) throw std::invalid_argument("corrector enabled but none supplied");
    if (corrector_->latent_dim() != model.latent_dim() ||
        corrector_->action_dim() != model.action_dim()) {
      throw ShapeError("corrector dimensions do not match the world model");
    }
    if (corrector_->window() != 1 && corrector_->window() != cfg_.K) {
      throw ShapeError("temporal corrector window differs from speculation.history_K");
    }
  }
}

StepOutcome SpeculativeController::step(Environment& env) {
  if (env.done()) throw std::logic_error("controller step on a finished episode");
  const int t = env.t();
  const LatentState z_real = model_.encode(env.observation());
  StepOutcome out;

  const auto t0 = std::chrono::steady_clock::now();
  if (queues_.empty()) {
    out.planner_calls += refill_queues(queues_, z_real, t, cfg_, ctx_, tel_);
  }
  if (queues_.empty()) throw std::logic_error("queues empty after refill");

  const Action a_spec = queues_.actions.front();
  const LatentState z_hat = queues_.latents.front();
  const auto call = queues_.calls.front();
  const bool fresh = queues_.fresh.front();
  queues_.actions.pop_front();
  queues_.latents.pop_front();
  queues_.calls.pop_front();
  queues_.fresh.pop_front();
  const bool exhausted = queues_.empty() || queues_.calls.front() != call;

  out.d_t = mismatch(z_real, z_hat);
  RunTelemetry::CallId source = call;
  if (out.d_t > cfg_.tau) {
    // Flush: the popped block and everything queued behind it are closed.
    tel_.close_call(call);
    while (!queues_.empty()) {
      const auto id = queues_.calls.front();
      while (!queues_.empty() && queues_.calls.front() == id) {
        queues_.actions.pop_front();
        queues_.latents.pop_front();
        queues_.calls.pop_front();
        queues_.fresh.pop_front();
      }
      if (id != call) tel_.close_call(id);
    }
    queues_.clear();
    history_.clear();
    const Plan p = ctx_.plan_real(z_real, t);
    source = tel_.open_call();
    ++out.planner_calls;
    out.executed_action = p.actions.front();
    out.mode = StepMode::fallback;
  } else {
    if (observer_) observer_(PopEvent{t, z_real, z_hat, a_spec, fresh});
    if (cfg_.corrector_enabled) {
      history_.push(MismatchFeature{z_real, z_hat, a_spec});
    }
    if (fresh) {
      out.executed_action = a_spec;
      out.mode = StepMode::fresh_plan;
    } else if (cfg_.corrector_enabled) {
      out.executed_action = apply_correction(a_spec, corrector_->correct(history_));
      out.mode = StepMode::corrected;
    } else {
      out.executed_action = a_spec;
      out.mode = StepMode::speculative;
    }
  }
  tel_.wall_plan_ms +=
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  out.planner_called = out.planner_calls > 0;

  const StepResult r = env.step(out.executed_action);
  out.reward = r.reward;
  tel_.record_step(StepRecord{t, out.mode, out.d_t, out.planner_called, out.executed_action, r.reward},
                   source);
  if (out.mode == StepMode::fallback || exhausted) tel_.close_call(source);
  return out;
}

namespace {

void append(EpisodeTrace& tr, const StepOutcome& o, const Observation& next) {
  tr.actions.push_back(o.executed_action);
  tr.rewards.push_back(o.reward);
  tr.modes.push_back(o.mode);
  tr.mismatch.push_back(o.d_t);
  tr.states.push_back(next);
}

}  // namespace

EpisodeResult run_episode(Environment& env, const SpecConfig& cfg, const WorldModel& model,
                          const CemPlanner& planner, const Corrector* corrector, std::uint64_t seed,
                          std::function<void(const PopEvent&)> observer) {
  EpisodeResult res;
  res.trace.states.push_back(env.reset(seed));
  SpeculativeController ctl(cfg, model, planner, corrector, seed);
  if (observer) ctl.set_pop_observer(std::move(observer));
  while (!env.done()) append(res.trace, ctl.step(env), env.observation());
  ctl.telemetry().finalize();
  res.telemetry = ctl.telemetry();
  return res;
}

EpisodeResult run_baseline(Environment& env, const WorldModel& model, const CemPlanner& planner,
                           std::uint64_t seed) {
  EpisodeResult res;
  res.trace.states.push_back(env.reset(seed));
  PlanContext ctx(model, planner, seed);
  RunTelemetry& tel = res.telemetry;
  while (!env.done()) {
    const int t = env.t();
    const auto t0 = std::chrono::steady_clock::now();
    const Plan p = ctx.plan_real(model.encode(env.observation()), t);
    tel.wall_plan_ms +=
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const auto id = tel.open_call();
    StepOutcome o;
    o.executed_action = p.actions.front();
    o.mode = StepMode::fresh_plan;
    o.planner_called = true;
    o.planner_calls = 1;
    o.reward = env.step(o.executed_action).reward;
    tel.record_step(StepRecord{t, o.mode, 0.0, true, o.executed_action, o.reward}, id);
    tel.close_call(id);
    append(res.trace, o, env.observation());
  }
  return res;
}

double calibrate_tau(Environment& env, SpecConfig cfg, const WorldModel& model,
                     const CemPlanner& planner, std::uint64_t seed, double pct) {
  cfg.tau = std::numeric_limits<double>::infinity();
  cfg.corrector_enabled = false;
  const EpisodeResult r = run_episode(env, cfg, model, planner, nullptr, seed);
  return percentile(r.telemetry.mismatch_series(), pct);
}

}  // namespace specmpc
