#pragma once

#include <deque>
#include <memory>
#include <string>

#include "specmpc/autodiff.hpp"
#include "specmpc/nn.hpp"
#include "specmpc/world_model.hpp"

namespace specmpc {

// (z_real, z_hat, a_spec); the mismatch is always derived on demand.
struct MismatchFeature {
  LatentState z_real;
  LatentState z_hat;
  Action a_spec;

  Vec delta_z() const { return z_real - z_hat; }
  // [z_real, z_hat, z_real - z_hat, a_spec]
  Vec flat() const;
};

int feature_width(int latent_dim, int action_dim);

// Last K features in chronological order.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(int k);

  void push(MismatchFeature f);
  void clear() { items_.clear(); }
  int size() const { return static_cast<int>(items_.size()); }
  int capacity() const { return k_; }
  bool empty() const { return items_.empty(); }
  const MismatchFeature& back() const { return items_.back(); }

  // K x feature_width, oldest first, zero rows at the front when fewer than
  // K features have been pushed.
  Mat window(int latent_dim, int action_dim) const;

 private:
  int k_;
  std::deque<MismatchFeature> items_;
};

// Residual corrector C_phi. Inputs are windows of K feature rows stacked
// per sample: a batch of B samples is a (B*K) x F matrix. The gated
// architecture uses K = 1.
class Corrector {
 public:
  virtual ~Corrector() = default;

  virtual std::string arch() const = 0;
  virtual int window() const = 0;
  int latent_dim() const { return latent_dim_; }
  int action_dim() const { return action_dim_; }
  int hidden() const { return hidden_; }

  // Returns the B x d_a residual.
  virtual Var forward(const std::vector<Var>& bound, const Var& windows) const = 0;

  Vec correct(const Mat& window) const;
  Mat correct_batch(const Mat& windows) const;
  Vec correct(const HistoryBuffer& hist) const;

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  nlohmann::json to_json() const;

 protected:
  Corrector(int latent_dim, int action_dim, int hidden)
      : latent_dim_(latent_dim), action_dim_(action_dim), hidden_(hidden) {}
  void check_windows(const Mat& windows) const;

  int latent_dim_;
  int action_dim_;
  int hidden_;
  ParameterSet params_;
};

class GatedTwoTower final : public Corrector {
 public:
  static constexpr double kGateBiasInit = -2.0;

  GatedTwoTower(int latent_dim, int action_dim, int hidden, Rng& rng);

  std::string arch() const override { return "gated"; }
  int window() const override { return 1; }
  Var forward(const std::vector<Var>& bound, const Var& windows) const override;

  struct Output {
    Mat delta;
    Vec gate;
  };
  Output forward_with_gate(const Mat& features) const;

 private:
  struct Nodes {
    Var delta;
    Var gate;
  };
  Nodes build(const std::vector<Var>& bound, const Var& x) const;

  Linear tower_real_, tower_pred_, tower_delta_, embed_action_, fusion_, residual_head_, gate_head_;
};

class TemporalCorrector final : public Corrector {
 public:
  TemporalCorrector(int latent_dim, int action_dim, int hidden, int k, Rng& rng);

  std::string arch() const override { return "temporal"; }
  int window() const override { return k_; }
  Var forward(const std::vector<Var>& bound, const Var& windows) const override;

  // Attention weights of every window, stacked (B*K) x K.
  Mat attention(const Mat& windows) const;

 private:
  int k_;
  Linear embed_;
  int positions_ = -1;
  Linear query_, key_, value_, out_proj_, ffn_in_, ffn_out_, head_;
};

std::unique_ptr<Corrector> make_corrector(const std::string& arch, int latent_dim, int action_dim,
                                          int hidden, int k, Rng& rng);
std::unique_ptr<Corrector> corrector_from_json(const nlohmann::json& doc);
void save_corrector(const Corrector& c, const std::string& path);
std::unique_ptr<Corrector> load_corrector(const std::string& path);

// clip(a_spec + delta, -1, 1) componentwise.
Action apply_correction(const Action& a_spec, const Vec& delta);

}  // namespace specmpc
