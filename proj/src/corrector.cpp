#include "specmpc/corrector.hpp"

#include <algorithm>
#include <stdexcept>

namespace specmpc {

Vec MismatchFeature::flat() const {
  require_same_shape(z_real, z_hat, "mismatch feature");
  Vec out(3 * z_real.size() + a_spec.size());
  out << z_real, z_hat, z_real - z_hat, a_spec;
  return out;
}

int feature_width(int latent_dim, int action_dim) { return 3 * latent_dim + action_dim; }

HistoryBuffer::HistoryBuffer(int k) : k_(k) {
  if (k < 1) throw std::invalid_argument("history length K must be >= 1");
}

void HistoryBuffer::push(MismatchFeature f) {
  items_.push_back(std::move(f));
  while (static_cast<int>(items_.size()) > k_) items_.pop_front();
}

Mat HistoryBuffer::window(int latent_dim, int action_dim) const {
  Mat w = Mat::Zero(k_, feature_width(latent_dim, action_dim));
  const int pad = k_ - size();
  for (int i = 0; i < size(); ++i) {
    const Vec f = items_[static_cast<std::size_t>(i)].flat();
    if (f.size() != w.cols()) throw ShapeError("history feature width mismatch");
    w.row(pad + i) = f.transpose();
  }
  return w;
}

void Corrector::check_windows(const Mat& windows) const {
  if (windows.cols() != feature_width(latent_dim_, action_dim_) || windows.rows() % window() != 0 ||
      windows.rows() == 0) {
    throw ShapeError("corrector " + arch() + ": input " + shape_string(windows) +
                     " does not match window " + std::to_string(window()) + " x " +
                     std::to_string(feature_width(latent_dim_, action_dim_)));
  }
}

Mat Corrector::correct_batch(const Mat& windows) const {
  check_windows(windows);
  Tape tape;
  const auto bound = bind_constants(tape, params_);
  return forward(bound, tape.constant(windows)).value();
}

Vec Corrector::correct(const Mat& window_rows) const {
  if (window_rows.rows() != window()) {
    throw ShapeError("corrector " + arch() + ": expected a single window of " +
                     std::to_string(window()) + " rows");
  }
  return correct_batch(window_rows).row(0).transpose();
}

Vec Corrector::correct(const HistoryBuffer& hist) const {
  if (hist.empty()) throw std::logic_error("corrector: empty history");
  if (window() == 1) return correct(Mat(hist.back().flat().transpose()));
  if (hist.capacity() != window()) throw ShapeError("corrector: history length differs from K");
  return correct(hist.window(latent_dim_, action_dim_));
}

nlohmann::json Corrector::to_json() const {
  nlohmann::json meta{{"arch", arch()},       {"latent_dim", latent_dim_}, {"action_dim", action_dim_},
                      {"hidden", hidden_},    {"K", window()}};
  return params_to_json(params_, meta);
}

GatedTwoTower::GatedTwoTower(int latent_dim, int action_dim, int hidden, Rng& rng)
    : Corrector(latent_dim, action_dim, hidden) {
  tower_real_ = Linear::create(params_, "tower_real", latent_dim, hidden, rng);
  tower_pred_ = Linear::create(params_, "tower_pred", latent_dim, hidden, rng);
  tower_delta_ = Linear::create(params_, "tower_delta", latent_dim, hidden, rng);
  embed_action_ = Linear::create(params_, "embed_action", action_dim, hidden, rng);
  fusion_ = Linear::create(params_, "fusion", 4 * hidden, hidden, rng);
  residual_head_ = Linear::create_zero(params_, "residual_head", hidden, action_dim);
  gate_head_ = Linear::create(params_, "gate_head", hidden, 1, rng);
  params_[gate_head_.bias].value.setConstant(kGateBiasInit);
}

GatedTwoTower::Nodes GatedTwoTower::build(const std::vector<Var>& bound, const Var& x) const {
  const Eigen::Index dz = latent_dim_;
  const Var real = ad::tanh(tower_real_.forward(bound, ad::slice_cols(x, 0, dz)));
  const Var pred = ad::tanh(tower_pred_.forward(bound, ad::slice_cols(x, dz, dz)));
  const Var delta = ad::tanh(tower_delta_.forward(bound, ad::slice_cols(x, 2 * dz, dz)));
  const Var act = ad::tanh(embed_action_.forward(bound, ad::slice_cols(x, 3 * dz, action_dim_)));
  const Var fused = ad::tanh(fusion_.forward(bound, ad::concat_cols({real, pred, delta, act})));
  const Var gate = ad::sigmoid(gate_head_.forward(bound, fused));
  return {ad::mul_col(residual_head_.forward(bound, fused), gate), gate};
}

Var GatedTwoTower::forward(const std::vector<Var>& bound, const Var& windows) const {
  return build(bound, windows).delta;
}

GatedTwoTower::Output GatedTwoTower::forward_with_gate(const Mat& features) const {
  check_windows(features);
  Tape tape;
  const auto bound = bind_constants(tape, params_);
  const Nodes n = build(bound, tape.constant(features));
  return {n.delta.value(), n.gate.value().col(0)};
}

TemporalCorrector::TemporalCorrector(int latent_dim, int action_dim, int hidden, int k, Rng& rng)
    : Corrector(latent_dim, action_dim, hidden), k_(k) {
  if (k < 1) throw std::invalid_argument("temporal corrector: K must be >= 1");
  embed_ = Linear::create(params_, "embed", feature_width(latent_dim, action_dim), hidden, rng);
  Mat pos(k, hidden);
  for (Eigen::Index i = 0; i < pos.size(); ++i) pos(i) = 0.1 * rng.normal();
  positions_ = params_.add("positions", std::move(pos));
  query_ = Linear::create(params_, "attn.query", hidden, hidden, rng);
  key_ = Linear::create(params_, "attn.key", hidden, hidden, rng);
  value_ = Linear::create(params_, "attn.value", hidden, hidden, rng);
  out_proj_ = Linear::create(params_, "attn.out", hidden, hidden, rng);
  ffn_in_ = Linear::create(params_, "ffn.in", hidden, hidden, rng);
  ffn_out_ = Linear::create(params_, "ffn.out", hidden, hidden, rng);
  head_ = Linear::create_zero(params_, "residual_head", hidden, action_dim);
}

Var TemporalCorrector::forward(const std::vector<Var>& bound, const Var& windows) const {
  const Var pos = bound.at(static_cast<std::size_t>(positions_));
  const Var e = ad::add_tiled(ad::tanh(embed_.forward(bound, windows)), pos, k_);
  const Var att = ad::block_attention(query_.forward(bound, e), key_.forward(bound, e),
                                      value_.forward(bound, e), k_);
  const Var h1 = ad::add(e, out_proj_.forward(bound, att));
  const Var h2 = ad::add(h1, ffn_out_.forward(bound, ad::tanh(ffn_in_.forward(bound, h1))));
  return head_.forward(bound, ad::take_block_rows(h2, k_, k_ - 1));
}

Mat TemporalCorrector::attention(const Mat& windows) const {
  check_windows(windows);
  Mat e = specmpc::tanh(embed_.forward(params_, windows));
  const Mat& pos = params_[positions_].value;
  for (Eigen::Index r = 0; r < e.rows(); ++r) e.row(r) += pos.row(r % k_);
  const Mat q = query_.forward(params_, e);
  const Mat kk = key_.forward(params_, e);
  Mat out(e.rows(), k_);
  for (Eigen::Index r = 0; r < e.rows(); r += k_) {
    out.middleRows(r, k_) = attention_weights(q.middleRows(r, k_), kk.middleRows(r, k_));
  }
  return out;
}

std::unique_ptr<Corrector> make_corrector(const std::string& arch, int latent_dim, int action_dim,
                                          int hidden, int k, Rng& rng) {
  if (latent_dim < 1 || action_dim < 1 || hidden < 1) {
    throw std::invalid_argument("corrector dimensions must be positive");
  }
  if (arch == "gated") return std::make_unique<GatedTwoTower>(latent_dim, action_dim, hidden, rng);
  if (arch == "temporal") {
    return std::make_unique<TemporalCorrector>(latent_dim, action_dim, hidden, k, rng);
  }
  throw std::invalid_argument("unknown corrector arch '" + arch + "' (expected gated|temporal)");
}

std::unique_ptr<Corrector> corrector_from_json(const nlohmann::json& doc) {
  const auto& meta = doc.at("meta");
  Rng rng(0);
  auto c = make_corrector(meta.at("arch").get<std::string>(), meta.at("latent_dim").get<int>(),
                          meta.at("action_dim").get<int>(), meta.at("hidden").get<int>(),
                          meta.at("K").get<int>(), rng);
  params_from_json(doc, c->params());
  return c;
}

void save_corrector(const Corrector& c, const std::string& path) { write_json_file(path, c.to_json()); }

std::unique_ptr<Corrector> load_corrector(const std::string& path) {
  return corrector_from_json(read_json_file(path));
}

Action apply_correction(const Action& a_spec, const Vec& delta) {
  require_same_shape(a_spec, delta, "apply_correction");
  return (a_spec + delta).cwiseMax(-1.0).cwiseMin(1.0);
}

}  // namespace specmpc
