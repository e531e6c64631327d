#pragma once

#include <optional>
#include <vector>

#include "specmpc/rng.hpp"
#include "specmpc/world_model.hpp"

namespace specmpc {

struct PlannerConfig {
  int horizon = 3;
  int n_samples = 256;
  int n_elites = 32;
  int n_iterations = 6;
  double init_std = 0.5;
  double min_std = 0.05;
  bool warm_start = true;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// Action sequence a_t..a_{t+H-1} with the latent rollout z_t..z_{t+H}
// (index 0 is the seed). predicted_latents[i + 1] is exactly
// model.latent_step(predicted_latents[i], actions[i], &noise) with the noise
// stream restored to `noise_stream`.
struct Plan {
  std::vector<Action> actions;
  std::vector<LatentState> predicted_latents;
  // Undiscounted mean-model reward sum of `actions` from the seed.
  double predicted_return = 0.0;
  // Stream state at the start of the canonical rollout; empty when the
  // rollout was produced without noise.
  std::optional<Rng> noise_stream;

  int horizon() const { return static_cast<int>(actions.size()); }
};

struct PlanDiagnostics {
  // Best sampled score in each CEM iteration.
  std::vector<double> best_score;
};

// Cross-entropy method over the mean latent model. Deterministic given
// (model, seed latent, config, rng state, initial mean). Scoring rolls every
// sample in one batch and ranks with index tie-breaks, so the result does not
// depend on evaluation order.
class CemPlanner {
 public:
  explicit CemPlanner(PlannerConfig cfg);

  // `init_mean` (H x d_a) replaces the zero initial mean when given. The
  // canonical rollout draws model noise from `noise` when non-null.
  Plan plan(const WorldModel& model, const LatentState& seed, Rng& rng, Rng* noise = nullptr,
            const Mat* init_mean = nullptr, PlanDiagnostics* diag = nullptr) const;

  const PlannerConfig& config() const { return cfg_; }

 private:
  PlannerConfig cfg_;
};

// Initial mean for the next plan: prev.actions shifted left by `shift`,
// zero-padded at the end. A shift outside [0, H) gives all zeros.
Mat warm_start(const Plan& prev, int shift = 1);

// Latent rollout of `actions` from `seed` (length actions.size() + 1).
std::vector<LatentState> rollout_latents(const WorldModel& model, const LatentState& seed,
                                         const std::vector<Action>& actions, Rng* noise);

// Mean-model undiscounted reward sum of `actions` from `seed`.
double rollout_return(const WorldModel& model, const LatentState& seed,
                      const std::vector<Action>& actions);

}  // namespace specmpc
