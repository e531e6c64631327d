#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "specmpc/distillation.hpp"
#include "specmpc/planner.hpp"
#include "specmpc/runtime.hpp"
#include "specmpc/telemetry.hpp"
#include "specmpc/world_model.hpp"

namespace specmpc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EnvSection {
  std::string name = "point_mass";
  std::uint64_t seed = 0;
  int episode_steps = 200;
};

struct ModelSection {
  std::string variant = "oracle";  // oracle | learned
  std::vector<double> bias;        // empty means all zeros
  double noise_std = 0.0;
  int d_z = 0;                     // 0 means "same as the environment state"
  std::string checkpoint;          // learned world-model checkpoint
};

struct SpeculationSection {
  std::string mode = "spec";  // baseline | spec
  int H = 3;
  int L = 3;
  std::optional<double> tau;  // empty means calibrate ("auto")
  double tau_percentile = 70.0;
  std::string corrector = "none";  // none | gated | temporal
  int history_K = 4;
};

struct CorrectorSection {
  std::string arch = "gated";
  double lambda = 1e-3;
  int K = 4;
  int hidden = 64;
  int epochs = 600;
  double lr = 1e-3;
  int batch = 256;
  int unroll_n = 1;
  int n_episodes = 10;
  double holdout_fraction = 0.2;
};

struct WorldModelSection {
  std::string encoder = "identity";
  std::string dynamics = "mlp";
  std::string reward = "mlp";
  int hidden = 64;
  int epochs = 100;
  double lr = 1e-3;
  int batch = 256;
  int n_transitions = 10000;
};

struct EvalSection {
  int n_seeds = 10;
};

struct PathsSection {
  std::string out_dir = "out";
  std::string dataset;
  std::string checkpoint;
  std::string gated_checkpoint;
  std::string temporal_checkpoint;
};

struct Config {
  std::string run_name = "default";
  EnvSection env;
  ModelSection model;
  PlannerConfig planner;
  SpeculationSection speculation;
  CorrectorSection corrector;
  WorldModelSection world_model;
  LatencyModel latency;
  EvalSection eval;
  PathsSection paths;

  // Cross-field checks; throws ConfigError.
  void validate() const;

  std::string run_dir() const;
  SpecConfig spec_config(double tau) const;
  CorrectorTrainConfig corrector_train_config(const std::string& arch) const;
};

// Strict parse: unknown keys, wrong types and invalid values throw
// ConfigError. `//` comments are accepted.
Config parse_config(const std::string& text);
Config load_config(const std::string& path);
nlohmann::json config_to_json(const Config& cfg);

// Complete default configuration, with a comment above every section.
std::string reference_config_text(const Config& cfg);

// Tuned pendulum setup used by the acceptance suite.
Config pendulum_preset();

// Pieces built from a config.
std::shared_ptr<const Dynamics> config_dynamics(const Config& cfg);
std::unique_ptr<WorldModel> config_world_model(const Config& cfg,
                                               std::shared_ptr<const Dynamics> dynamics);

}  // namespace specmpc
