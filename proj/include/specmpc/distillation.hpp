#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "specmpc/corrector.hpp"
#include "specmpc/runtime.hpp"

namespace specmpc {

struct DistillationSample {
  int episode = 0;
  int t = 0;
  LatentState z_real;
  LatentState z_hat;
  Action a_spec;
  Action a_star;

  MismatchFeature feature() const { return {z_real, z_hat, a_spec}; }
};

struct DistillationDataset {
  int latent_dim = 0;
  int action_dim = 0;
  std::vector<DistillationSample> samples;

  int size() const { return static_cast<int>(samples.size()); }
  int episodes() const;
};

// Seed of collection episode `e`, derived from the collection seed.
std::uint64_t collection_episode_seed(std::uint64_t seed, int e);

// Runs speculation with the corrector disabled and, at every step with
// d_t <= tau, records the popped feature and the teacher action (the first
// action of a replan from the real latent). Teacher plans are not counted
// in the run's telemetry.
DistillationDataset collect_distillation_data(Environment& env, const WorldModel& model,
                                              const CemPlanner& planner, SpecConfig cfg,
                                              int n_episodes, std::uint64_t seed);

// Window of K feature rows ending at sample i, walking back over samples of
// the same episode with consecutive t; zero rows fill the front.
Mat sample_window(const DistillationDataset& data, int i, int k);
// Stacked windows for `indices` ((n*k) x F).
Mat stack_windows(const DistillationDataset& data, const std::vector<int>& indices, int k);

// Header: episode, t, z_real_i, z_hat_i, a_spec_i, a_star_i
void write_dataset_csv(const std::string& path, const DistillationDataset& data);
DistillationDataset read_dataset_csv(const std::string& path);

struct CorrectorTrainConfig {
  std::string arch = "gated";
  double lambda = 1e-3;
  int hidden = 64;
  int K = 4;
  int epochs = 600;
  double lr = 1e-3;
  int batch_size = 256;
  int unroll_n = 1;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CorrectorTrainResult {
  std::unique_ptr<Corrector> corrector;
  // Epoch-averaged training loss and end-of-epoch holdout loss per epoch.
  std::vector<double> train_loss;
  std::vector<double> holdout_loss;
  std::vector<int> train_indices;
  std::vector<int> holdout_indices;
};

struct ResidualStats {
  // Mean ||a_spec - a*||^2 (no correction) and mean ||a_corr - a*||^2.
  double uncorrected = 0.0;
  double corrected = 0.0;
};

// Mean of ||clip(a_spec + da) - a*||^2 + lambda ||da||^2 over `indices`.
double corrector_loss(const Corrector& c, const DistillationDataset& data,
                      const std::vector<int>& indices, double lambda);
ResidualStats residual_stats(const Corrector& c, const DistillationDataset& data,
                             const std::vector<int>& indices);

// Splits by episode: a deterministic shuffle of the episode ids puts
// ceil(fraction * episodes) of them in the holdout set. A single-episode
// dataset is split by time instead.
void split_holdout(const DistillationDataset& data, double fraction, std::uint64_t seed,
                   std::vector<int>& train, std::vector<int>& holdout);

// Minibatch Adam with cosine decay on the distillation loss. With
// unroll_n > 1 a training item is a run of unroll_n consecutive samples
// from one episode and contributes the mean of its per-step losses.
CorrectorTrainResult train_corrector(const DistillationDataset& data, const CorrectorTrainConfig& cfg);

}  // namespace specmpc
