#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "specmpc/autodiff.hpp"
#include "specmpc/rng.hpp"

namespace specmpc {

// Affine map x W + b on row-major batches (rows are samples). Holds indices
// into a ParameterSet so owners stay copyable.
struct Linear {
  int weight = -1;  // in x out
  int bias = -1;    // 1 x out

  static Linear create(ParameterSet& params, const std::string& name, int in, int out, Rng& rng);
  // Same shapes, all entries zero.
  static Linear create_zero(ParameterSet& params, const std::string& name, int in, int out);

  Var forward(Tape& tape, ParameterSet& params, const Var& x) const;
  // Uses pre-bound parameter nodes (see bind_parameters / bind_constants).
  Var forward(const std::vector<Var>& bound, const Var& x) const;
  Mat forward(const ParameterSet& params, const Mat& x) const;
  int in_dim(const ParameterSet& params) const;
  int out_dim(const ParameterSet& params) const;
};

// tanh MLP with a linear output layer.
struct Mlp {
  std::vector<Linear> layers;

  // sizes = {in, hidden..., out}
  static Mlp create(ParameterSet& params, const std::string& name, const std::vector<int>& sizes,
                    Rng& rng);

  Var forward(Tape& tape, ParameterSet& params, const Var& x) const;
  Var forward(const std::vector<Var>& bound, const Var& x) const;
  Mat forward(const ParameterSet& params, const Mat& x) const;
};

// One tape node per parameter, indexed like the set. Trainable bindings
// route gradients into the parameters; constant bindings do not.
std::vector<Var> bind_parameters(Tape& tape, ParameterSet& params);
std::vector<Var> bind_constants(Tape& tape, const ParameterSet& params);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const ParameterSet& params, AdamConfig cfg);

  // One update with the given learning rate, using the gradients currently
  // stored in `params`.
  void step(ParameterSet& params, double lr);
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Mat> m_, v_;
  long t_ = 0;
};

// lr * (1 + cos(pi * step / total)) / 2
double cosine_lr(double base_lr, long step, long total);

// Checkpoint document: named fp64 arrays with shapes, plus free-form meta.
nlohmann::json params_to_json(const ParameterSet& params, const nlohmann::json& meta);
// Loads values by name into an existing set; every parameter must be present
// with the matching shape.
void params_from_json(const nlohmann::json& doc, ParameterSet& params);

void write_json_file(const std::string& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::string& path);

}  // namespace specmpc
