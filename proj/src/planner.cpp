#include "specmpc/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace specmpc {

void PlannerConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("planner.H must be >= 1");
  if (n_samples < 1) throw std::invalid_argument("planner.n_samples must be >= 1");
  if (n_elites < 1 || n_elites > n_samples) {
    throw std::invalid_argument("planner.n_elites must be in [1, n_samples]");
  }
  if (n_iterations < 1) throw std::invalid_argument("planner.n_iterations must be >= 1");
  if (!(init_std >= 0.0)) throw std::invalid_argument("planner.init_std must be >= 0");
  if (!(min_std >= 0.0)) throw std::invalid_argument("planner.min_std must be >= 0");
}

CemPlanner::CemPlanner(PlannerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::vector<LatentState> rollout_latents(const WorldModel& model, const LatentState& seed,
                                         const std::vector<Action>& actions, Rng* noise) {
  std::vector<LatentState> out;
  out.reserve(actions.size() + 1);
  out.push_back(seed);
  for (const auto& a : actions) out.push_back(model.latent_step(out.back(), a, noise));
  return out;
}

double rollout_return(const WorldModel& model, const LatentState& seed,
                      const std::vector<Action>& actions) {
  double total = 0.0;
  LatentState z = seed;
  for (const auto& a : actions) {
    total += model.predict_reward(z, a);
    z = model.latent_step(z, a, nullptr);
  }
  return total;
}

Mat warm_start(const Plan& prev, int shift) {
  const int h = prev.horizon();
  const auto da = h > 0 ? prev.actions.front().size() : 0;
  Mat mean = Mat::Zero(h, da);
  if (shift < 0 || shift >= h) return mean;
  for (int i = shift; i < h; ++i) mean.row(i - shift) = prev.actions[static_cast<std::size_t>(i)].transpose();
  return mean;
}

Plan CemPlanner::plan(const WorldModel& model, const LatentState& seed, Rng& rng, Rng* noise,
                      const Mat* init_mean, PlanDiagnostics* diag) const {
  require_dim(seed, model.latent_dim(), "planner seed latent");
  const int h = cfg_.horizon;
  const int da = model.action_dim();
  const int n = cfg_.n_samples;

  Mat mean = Mat::Zero(h, da);
  if (init_mean != nullptr) {
    if (init_mean->rows() != h || init_mean->cols() != da) {
      throw ShapeError("planner: initial mean shape mismatch " + shape_string(*init_mean) +
                       " vs (" + std::to_string(h) + "x" + std::to_string(da) + ")");
    }
    mean = *init_mean;
  }
  Mat stddev = Mat::Constant(h, da, std::max(cfg_.init_std, cfg_.min_std));

  // Sample s occupies row s; step k of the sequence lives in columns [k*da, (k+1)*da).
  Mat samples(n, h * da);
  Vec scores(n);
  std::vector<int> order(static_cast<std::size_t>(n));
  Vec best_seq;
  double best_score = -std::numeric_limits<double>::infinity();

  for (int it = 0; it < cfg_.n_iterations; ++it) {
    for (int s = 0; s < n; ++s) {
      for (int k = 0; k < h; ++k) {
        for (int j = 0; j < da; ++j) {
          const double x = mean(k, j) + stddev(k, j) * rng.normal();
          samples(s, k * da + j) = std::clamp(x, -1.0, 1.0);
        }
      }
    }
    // Keep the incumbent so the best score never decreases between iterations.
    if (it > 0) samples.row(0) = best_seq.transpose();

    Mat z = seed.transpose().replicate(n, 1);
    scores.setZero();
    for (int k = 0; k < h; ++k) {
      const Mat a = samples.middleCols(k * da, da);
      scores += model.predict_reward_batch(z, a);
      z = model.latent_step_batch(z, a);
    }
    for (int s = 0; s < n; ++s) {
      if (!std::isfinite(scores(s))) {
        throw std::runtime_error("planner: non-finite score at CEM iteration " + std::to_string(it) +
                                 ", sample " + std::to_string(s));
      }
    }

    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) {
      return scores(x) > scores(y) || (scores(x) == scores(y) && x < y);
    });
    best_seq = samples.row(order[0]).transpose();
    best_score = scores(order[0]);
    if (diag != nullptr) diag->best_score.push_back(best_score);

    Vec mu = Vec::Zero(h * da);
    for (int e = 0; e < cfg_.n_elites; ++e) mu += samples.row(order[static_cast<std::size_t>(e)]).transpose();
    mu /= static_cast<double>(cfg_.n_elites);
    Vec var = Vec::Zero(h * da);
    for (int e = 0; e < cfg_.n_elites; ++e) {
      var += (samples.row(order[static_cast<std::size_t>(e)]).transpose() - mu).cwiseAbs2();
    }
    var /= static_cast<double>(cfg_.n_elites);
    for (int k = 0; k < h; ++k) {
      for (int j = 0; j < da; ++j) {
        mean(k, j) = mu(k * da + j);
        stddev(k, j) = std::max(std::sqrt(var(k * da + j)), cfg_.min_std);
      }
    }
  }

  Plan plan;
  for (int k = 0; k < h; ++k) plan.actions.push_back(mean.row(k).transpose());
  plan.predicted_return = rollout_return(model, seed, plan.actions);
  if (!std::isfinite(plan.predicted_return)) {
    throw std::runtime_error("planner: non-finite return for the final CEM mean");
  }
  if (noise != nullptr) plan.noise_stream = *noise;
  plan.predicted_latents = rollout_latents(model, seed, plan.actions, noise);
  return plan;
}

}  // namespace specmpc
