#include "specmpc/world_model.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "specmpc/csv.hpp"

namespace specmpc {

void WorldModel::check_latent_action(const LatentState& z, const Action& a) const {
  require_dim(z, latent_dim(), "latent state");
  require_dim(a, action_dim(), "action");
}

Mat WorldModel::latent_step_batch(const Mat& z, const Mat& a) const {
  if (z.rows() != a.rows()) {
    throw ShapeError("latent_step_batch: shape mismatch " + shape_string(z) + " vs " +
                     shape_string(a));
  }
  Mat out(z.rows(), latent_dim());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    out.row(i) = latent_step(z.row(i).transpose(), a.row(i).transpose(), nullptr).transpose();
  }
  return out;
}

Vec WorldModel::predict_reward_batch(const Mat& z, const Mat& a) const {
  if (z.rows() != a.rows()) {
    throw ShapeError("predict_reward_batch: shape mismatch " + shape_string(z) + " vs " +
                     shape_string(a));
  }
  Vec out(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    out(i) = predict_reward(z.row(i).transpose(), a.row(i).transpose());
  }
  return out;
}

PerturbedOracle::PerturbedOracle(std::shared_ptr<const Dynamics> dynamics, Vec bias,
                                 double noise_std)
    : dynamics_(std::move(dynamics)), bias_(std::move(bias)), noise_std_(noise_std) {
  if (!dynamics_) throw std::invalid_argument("PerturbedOracle: null dynamics");
  if (bias_.size() == 0) bias_ = Vec::Zero(dynamics_->spec().state_dim);
  require_dim(bias_, dynamics_->spec().state_dim, "PerturbedOracle bias");
  if (!(noise_std_ >= 0.0)) throw std::invalid_argument("PerturbedOracle: noise_std must be >= 0");
}

PerturbedOracle::PerturbedOracle(std::shared_ptr<const Dynamics> dynamics)
    : PerturbedOracle(std::move(dynamics), Vec(), 0.0) {}

LatentState PerturbedOracle::encode(const Observation& s) const {
  require_dim(s, state_dim(), "observation");
  return s;
}

LatentState PerturbedOracle::latent_step(const LatentState& z, const Action& a, Rng* noise) const {
  check_latent_action(z, a);
  LatentState next = dynamics_->transition(z, a) + bias_;
  if (noise != nullptr && noise_std_ > 0.0) {
    for (Eigen::Index i = 0; i < next.size(); ++i) next(i) += noise_std_ * noise->normal();
  }
  return next;
}

double PerturbedOracle::predict_reward(const LatentState& z, const Action& a) const {
  check_latent_action(z, a);
  return dynamics_->reward(z, a);
}

LearnedWorldModel LearnedWorldModel::create(int state_dim, int action_dim,
                                            const LearnedModelConfig& cfg, Rng& rng) {
  LearnedWorldModel m;
  m.cfg_ = cfg;
  m.state_dim_ = state_dim;
  m.action_dim_ = action_dim;
  const int d = state_dim;
  const int in = d + action_dim;
  if (cfg.encoder == "affine") {
    m.encoder_ = Linear::create_zero(m.params_, "encoder", d, d);
    m.params_[m.encoder_.weight].value = Mat::Identity(d, d);
  } else if (cfg.encoder != "identity") {
    throw std::invalid_argument("unknown encoder kind: " + cfg.encoder);
  }
  if (cfg.dynamics == "linear") {
    m.dyn_linear_ = Linear::create(m.params_, "dynamics", in, d, rng);
  } else if (cfg.dynamics == "mlp") {
    m.dyn_mlp_ = Mlp::create(m.params_, "dynamics", {in, cfg.hidden, cfg.hidden, d}, rng);
  } else {
    throw std::invalid_argument("unknown dynamics kind: " + cfg.dynamics);
  }
  if (cfg.reward == "linear" || cfg.reward == "quadratic") {
    m.reward_linear_ = Linear::create(m.params_, "reward", in, 1, rng);
    if (cfg.reward == "quadratic") m.reward_quad_ = m.params_.add("reward.quad", Mat::Zero(in, in));
  } else if (cfg.reward == "mlp") {
    m.reward_mlp_ = Mlp::create(m.params_, "reward", {in, cfg.hidden, cfg.hidden, 1}, rng);
  } else {
    throw std::invalid_argument("unknown reward kind: " + cfg.reward);
  }
  return m;
}

Mat LearnedWorldModel::encode_batch(const Mat& s) const {
  if (s.cols() != state_dim_) {
    throw ShapeError("encode: expected dimension " + std::to_string(state_dim_) + ", got " +
                     std::to_string(s.cols()));
  }
  if (cfg_.encoder == "identity") return s;
  return encoder_.forward(params_, s);
}

LatentState LearnedWorldModel::encode(const Observation& s) const {
  require_dim(s, state_dim_, "observation");
  return encode_batch(s.transpose()).transpose();
}

namespace {

Mat hcat(const Mat& a, const Mat& b) {
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

Mat LearnedWorldModel::latent_step_batch(const Mat& z, const Mat& a) const {
  if (z.rows() != a.rows() || z.cols() != state_dim_ || a.cols() != action_dim_) {
    throw ShapeError("latent_step_batch: shape mismatch " + shape_string(z) + " vs " +
                     shape_string(a));
  }
  const Mat x = hcat(z, a);
  if (cfg_.dynamics == "linear") return dyn_linear_.forward(params_, x);
  return z + dyn_mlp_.forward(params_, x);
}

Vec LearnedWorldModel::predict_reward_batch(const Mat& z, const Mat& a) const {
  if (z.rows() != a.rows() || z.cols() != state_dim_ || a.cols() != action_dim_) {
    throw ShapeError("predict_reward_batch: shape mismatch " + shape_string(z) + " vs " +
                     shape_string(a));
  }
  const Mat x = hcat(z, a);
  if (cfg_.reward == "mlp") return reward_mlp_.forward(params_, x).col(0);
  Vec r = reward_linear_.forward(params_, x).col(0);
  if (reward_quad_ >= 0) r += (x * params_[reward_quad_].value).cwiseProduct(x).rowwise().sum();
  return r;
}

LatentState LearnedWorldModel::latent_step(const LatentState& z, const Action& a, Rng*) const {
  check_latent_action(z, a);
  return latent_step_batch(z.transpose(), a.transpose()).row(0).transpose();
}

double LearnedWorldModel::predict_reward(const LatentState& z, const Action& a) const {
  check_latent_action(z, a);
  return predict_reward_batch(z.transpose(), a.transpose())(0);
}

Var LearnedWorldModel::encode(Tape& tape, const Var& s) {
  if (cfg_.encoder == "identity") return s;
  return encoder_.forward(tape, params_, s);
}

Var LearnedWorldModel::latent_step(Tape& tape, const Var& z, const Var& a) {
  const Var x = ad::concat_cols({z, a});
  if (cfg_.dynamics == "linear") return dyn_linear_.forward(tape, params_, x);
  return ad::add(z, dyn_mlp_.forward(tape, params_, x));
}

Var LearnedWorldModel::predict_reward(Tape& tape, const Var& z, const Var& a) {
  const Var x = ad::concat_cols({z, a});
  if (cfg_.reward == "mlp") return reward_mlp_.forward(tape, params_, x);
  Var r = reward_linear_.forward(tape, params_, x);
  if (reward_quad_ >= 0) {
    const Var q = tape.parameter(params_[reward_quad_]);
    r = ad::add(r, ad::row_sum(ad::mul(ad::matmul(x, q), x)));
  }
  return r;
}

nlohmann::json LearnedWorldModel::to_json() const {
  nlohmann::json meta = {{"arch", "world_model"},
                         {"encoder", cfg_.encoder},
                         {"dynamics", cfg_.dynamics},
                         {"reward", cfg_.reward},
                         {"hidden", cfg_.hidden},
                         {"state_dim", state_dim_},
                         {"action_dim", action_dim_}};
  return params_to_json(params_, meta);
}

LearnedWorldModel LearnedWorldModel::from_json(const nlohmann::json& doc) {
  const auto& meta = doc.at("meta");
  if (meta.value("arch", "") != "world_model") {
    throw std::runtime_error("checkpoint is not a world model");
  }
  LearnedModelConfig cfg;
  cfg.encoder = meta.at("encoder").get<std::string>();
  cfg.dynamics = meta.at("dynamics").get<std::string>();
  cfg.reward = meta.at("reward").get<std::string>();
  cfg.hidden = meta.at("hidden").get<int>();
  Rng unused(0);
  LearnedWorldModel m =
      create(meta.at("state_dim").get<int>(), meta.at("action_dim").get<int>(), cfg, unused);
  params_from_json(doc, m.params_);
  return m;
}

namespace {

struct Batch {
  Mat s, a, s_next, r;
};

Batch gather(const std::vector<Transition>& data, const std::vector<std::size_t>& idx,
             std::size_t begin, std::size_t end) {
  const auto n = static_cast<Eigen::Index>(end - begin);
  const auto ds = data[idx[begin]].s.size();
  const auto da = data[idx[begin]].a.size();
  Batch b{Mat(n, ds), Mat(n, da), Mat(n, ds), Mat(n, 1)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = data[idx[begin + static_cast<std::size_t>(i)]];
    b.s.row(i) = t.s.transpose();
    b.a.row(i) = t.a.transpose();
    b.s_next.row(i) = t.s_next.transpose();
    b.r(i, 0) = t.r;
  }
  return b;
}

void check_dataset(const std::vector<Transition>& data, int state_dim, int action_dim) {
  if (data.empty()) throw std::invalid_argument("world model training: empty dataset");
  for (const auto& t : data) {
    require_dim(t.s, state_dim, "transition s");
    require_dim(t.a, action_dim, "transition a");
    require_dim(t.s_next, state_dim, "transition s_next");
  }
}

}  // namespace

WorldModelLoss world_model_loss(const LearnedWorldModel& model, const std::vector<Transition>& data) {
  check_dataset(data, model.state_dim(), model.action_dim());
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  const Batch b = gather(data, idx, 0, data.size());
  const Mat z = model.encode_batch(b.s);
  const Mat target = model.encode_batch(b.s_next);
  WorldModelLoss loss;
  loss.dynamics = mse(model.latent_step_batch(z, b.a), target);
  loss.reward = mse(model.predict_reward_batch(z, b.a), b.r);
  return loss;
}

WorldModelTrainResult train_world_model(const std::vector<Transition>& data,
                                        LearnedWorldModel init, const WorldModelTrainConfig& cfg) {
  check_dataset(data, init.state_dim(), init.action_dim());
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  WorldModelTrainResult result{std::move(init), {}};
  LearnedWorldModel& model = result.model;
  Adam adam(model.params(), AdamConfig{cfg.lr});
  Rng rng = Rng(cfg.seed).fork("world_model.shuffle");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const long batches_per_epoch = static_cast<long>((data.size() + bs - 1) / bs);
  const long total_steps = batches_per_epoch * cfg.epochs;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with our own stream so the order is platform independent.
    for (std::size_t i = idx.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.next_u64() % i);
      std::swap(idx[i - 1], idx[j]);
    }
    WorldModelLoss sum;
    for (std::size_t begin = 0; begin < data.size(); begin += bs) {
      const std::size_t end = std::min(data.size(), begin + bs);
      const Batch b = gather(data, idx, begin, end);
      Tape tape;
      const Var z = model.encode(tape, tape.constant(b.s));
      const Var target = tape.constant(model.encode_batch(b.s_next));
      const Var a = tape.constant(b.a);
      const Var dyn = ad::mse(model.latent_step(tape, z, a), target);
      const Var rew = ad::mse(model.predict_reward(tape, z, a), tape.constant(b.r));
      model.params().zero_grad();
      tape.backward(ad::add(dyn, rew));
      adam.step(model.params(), cosine_lr(cfg.lr, adam.steps(), total_steps));
      const double w = static_cast<double>(end - begin) / static_cast<double>(data.size());
      sum.dynamics += w * dyn.value()(0, 0);
      sum.reward += w * rew.value()(0, 0);
    }
    result.history.push_back(sum);
  }
  return result;
}

std::vector<Transition> sample_transitions(const Dynamics& dynamics, int count, int episode_length,
                                           Rng& rng) {
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(count));
  const int da = dynamics.spec().action_dim;
  Observation s;
  int t = episode_length;
  while (static_cast<int>(out.size()) < count) {
    if (t >= episode_length) {
      s = dynamics.initial_state(rng);
      t = 0;
    }
    Action a(da);
    for (int i = 0; i < da; ++i) a(i) = 2.0 * rng.uniform() - 1.0;
    Observation next = dynamics.transition(s, a);
    out.push_back(Transition{s, a, next, dynamics.reward(s, a, next)});
    s = std::move(next);
    ++t;
  }
  return out;
}

void write_transitions_csv(const std::string& path, const std::vector<Transition>& data) {
  CsvWriter w(path);
  if (data.empty()) {
    w.close();
    return;
  }
  const int ds = static_cast<int>(data.front().s.size());
  const int da = static_cast<int>(data.front().a.size());
  std::vector<std::string> header = indexed_names("s", ds);
  for (auto& n : indexed_names("a", da)) header.push_back(n);
  for (auto& n : indexed_names("s_next", ds)) header.push_back(n);
  header.emplace_back("r");
  w.row(header);
  for (const auto& t : data) {
    std::vector<std::string> f;
    for (Eigen::Index i = 0; i < t.s.size(); ++i) f.push_back(format_double(t.s(i)));
    for (Eigen::Index i = 0; i < t.a.size(); ++i) f.push_back(format_double(t.a(i)));
    for (Eigen::Index i = 0; i < t.s_next.size(); ++i) f.push_back(format_double(t.s_next(i)));
    f.push_back(format_double(t.r));
    w.row(f);
  }
  w.close();
}

std::vector<Transition> read_transitions_csv(const std::string& path, int state_dim,
                                             int action_dim) {
  const CsvTable table = read_csv(path);
  const auto s_cols = indexed_names("s", state_dim);
  const auto a_cols = indexed_names("a", action_dim);
  const auto n_cols = indexed_names("s_next", state_dim);
  std::vector<Transition> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    Transition t{Observation(state_dim), Action(action_dim), Observation(state_dim), 0.0};
    for (int i = 0; i < state_dim; ++i) {
      t.s(i) = table.number(r, s_cols[static_cast<std::size_t>(i)]);
      t.s_next(i) = table.number(r, n_cols[static_cast<std::size_t>(i)]);
    }
    for (int i = 0; i < action_dim; ++i) t.a(i) = table.number(r, a_cols[static_cast<std::size_t>(i)]);
    t.r = table.number(r, "r");
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace specmpc
