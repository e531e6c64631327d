#pragma once

#include <memory>
#include <string>
#include <vector>

#include "specmpc/autodiff.hpp"
#include "specmpc/env.hpp"
#include "specmpc/nn.hpp"

namespace specmpc {

using LatentState = Vec;

// Encoder E and latent dynamics f. Implementations are read-only after
// construction; stochastic parts draw from a caller-supplied stream.
class WorldModel {
 public:
  virtual ~WorldModel() = default;

  virtual int state_dim() const = 0;
  virtual int latent_dim() const = 0;
  virtual int action_dim() const = 0;

  virtual LatentState encode(const Observation& s) const = 0;
  // One latent step. When `noise` is non-null any stochastic error term is
  // drawn from it; with nullptr the deterministic mean model is used.
  virtual LatentState latent_step(const LatentState& z, const Action& a,
                                  Rng* noise = nullptr) const = 0;
  virtual double predict_reward(const LatentState& z, const Action& a) const = 0;

  // Mean-model batch versions (rows are samples).
  virtual Mat latent_step_batch(const Mat& z, const Mat& a) const;
  virtual Vec predict_reward_batch(const Mat& z, const Mat& a) const;

 protected:
  void check_latent_action(const LatentState& z, const Action& a) const;
};

// True environment dynamics acting on z = s, with a constant bias added to
// every predicted latent and optional white noise of scale noise_std.
class PerturbedOracle final : public WorldModel {
 public:
  PerturbedOracle(std::shared_ptr<const Dynamics> dynamics, Vec bias, double noise_std);
  // Zero-error configuration.
  explicit PerturbedOracle(std::shared_ptr<const Dynamics> dynamics);

  int state_dim() const override { return dynamics_->spec().state_dim; }
  int latent_dim() const override { return dynamics_->spec().state_dim; }
  int action_dim() const override { return dynamics_->spec().action_dim; }

  LatentState encode(const Observation& s) const override;
  LatentState latent_step(const LatentState& z, const Action& a,
                          Rng* noise = nullptr) const override;
  double predict_reward(const LatentState& z, const Action& a) const override;

  const Vec& bias() const { return bias_; }
  double noise_std() const { return noise_std_; }
  const Dynamics& dynamics() const { return *dynamics_; }

 private:
  std::shared_ptr<const Dynamics> dynamics_;
  Vec bias_;
  double noise_std_;
};

struct LearnedModelConfig {
  std::string encoder = "identity";  // identity | affine
  std::string dynamics = "mlp";      // linear | mlp
  std::string reward = "mlp";        // linear | quadratic | mlp
  int hidden = 64;
};

// Regression-trained encoder, dynamics and reward head. The MLP dynamics
// predict a residual: z' = z + mlp([z, a]).
class LearnedWorldModel final : public WorldModel {
 public:
  static LearnedWorldModel create(int state_dim, int action_dim, const LearnedModelConfig& cfg,
                                  Rng& rng);

  int state_dim() const override { return state_dim_; }
  int latent_dim() const override { return state_dim_; }
  int action_dim() const override { return action_dim_; }

  LatentState encode(const Observation& s) const override;
  LatentState latent_step(const LatentState& z, const Action& a,
                          Rng* noise = nullptr) const override;
  double predict_reward(const LatentState& z, const Action& a) const override;
  Mat latent_step_batch(const Mat& z, const Mat& a) const override;
  Vec predict_reward_batch(const Mat& z, const Mat& a) const override;

  Mat encode_batch(const Mat& s) const;

  // Differentiable forward passes for training.
  Var encode(Tape& tape, const Var& s);
  Var latent_step(Tape& tape, const Var& z, const Var& a);
  Var predict_reward(Tape& tape, const Var& z, const Var& a);

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const LearnedModelConfig& config() const { return cfg_; }

  nlohmann::json to_json() const;
  static LearnedWorldModel from_json(const nlohmann::json& doc);

 private:
  LearnedModelConfig cfg_;
  int state_dim_ = 0;
  int action_dim_ = 0;
  ParameterSet params_;
  Linear encoder_;
  Linear dyn_linear_;
  Mlp dyn_mlp_;
  Linear reward_linear_;
  int reward_quad_ = -1;
  Mlp reward_mlp_;
};

struct Transition {
  Observation s;
  Action a;
  Observation s_next;
  double r = 0.0;
};

struct WorldModelTrainConfig {
  int epochs = 100;
  double lr = 1e-3;
  int batch_size = 256;
  std::uint64_t seed = 0;
};

struct WorldModelLoss {
  double dynamics = 0.0;
  double reward = 0.0;
  double total() const { return dynamics + reward; }
};

struct WorldModelTrainResult {
  LearnedWorldModel model;
  // Epoch-averaged minibatch losses, one entry per epoch.
  std::vector<WorldModelLoss> history;
};

// Mean one-step latent MSE (target encoding held fixed) plus reward MSE.
WorldModelLoss world_model_loss(const LearnedWorldModel& model, const std::vector<Transition>& data);

// Minibatch Adam with cosine decay. Throws on an empty dataset.
WorldModelTrainResult train_world_model(const std::vector<Transition>& data,
                                        LearnedWorldModel init, const WorldModelTrainConfig& cfg);

// Random-action rollouts from reset states.
std::vector<Transition> sample_transitions(const Dynamics& dynamics, int count, int episode_length,
                                           Rng& rng);

// Header: s[0..d_s), a[0..d_a), s_next[0..d_s), r
void write_transitions_csv(const std::string& path, const std::vector<Transition>& data);
std::vector<Transition> read_transitions_csv(const std::string& path, int state_dim,
                                             int action_dim);

}  // namespace specmpc
