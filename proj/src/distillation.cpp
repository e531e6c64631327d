#include "specmpc/distillation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "specmpc/csv.hpp"

namespace specmpc {

int DistillationDataset::episodes() const {
  std::set<int> ids;
  for (const auto& s : samples) ids.insert(s.episode);
  return static_cast<int>(ids.size());
}

std::uint64_t collection_episode_seed(std::uint64_t seed, int e) {
  Rng r = Rng(seed).fork("collect.episode").fork(static_cast<std::uint64_t>(e));
  return r.next_u64();
}

DistillationDataset collect_distillation_data(Environment& env, const WorldModel& model,
                                              const CemPlanner& planner, SpecConfig cfg,
                                              int n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw std::invalid_argument("collect: n_episodes must be >= 1");
  cfg.corrector_enabled = false;
  DistillationDataset data;
  data.latent_dim = model.latent_dim();
  data.action_dim = model.action_dim();
  for (int e = 0; e < n_episodes; ++e) {
    const std::uint64_t ep_seed = collection_episode_seed(seed, e);
    env.reset(ep_seed);
    SpeculativeController ctl(cfg, model, planner, nullptr, ep_seed);
    const PlanContext& ctx = ctl.context();
    ctl.set_pop_observer([&](const PopEvent& ev) {
      DistillationSample s;
      s.episode = e;
      s.t = ev.t;
      s.z_real = ev.z_real;
      s.z_hat = ev.z_hat;
      s.a_spec = ev.a_spec;
      s.a_star = ctx.teacher(ev.z_real, ev.t).actions.front();
      data.samples.push_back(std::move(s));
    });
    while (!env.done()) ctl.step(env);
  }
  return data;
}

Mat sample_window(const DistillationDataset& data, int i, int k) {
  const int width = feature_width(data.latent_dim, data.action_dim);
  Mat w = Mat::Zero(k, width);
  int row = k - 1;
  int j = i;
  while (row >= 0) {
    const auto& s = data.samples.at(static_cast<std::size_t>(j));
    w.row(row) = s.feature().flat().transpose();
    --row;
    if (j == 0) break;
    const auto& prev = data.samples[static_cast<std::size_t>(j - 1)];
    if (prev.episode != s.episode || prev.t != s.t - 1) break;
    --j;
  }
  return w;
}

Mat stack_windows(const DistillationDataset& data, const std::vector<int>& indices, int k) {
  Mat out(static_cast<Eigen::Index>(indices.size()) * k, feature_width(data.latent_dim, data.action_dim));
  for (std::size_t n = 0; n < indices.size(); ++n) {
    out.middleRows(static_cast<Eigen::Index>(n) * k, k) = sample_window(data, indices[n], k);
  }
  return out;
}

void write_dataset_csv(const std::string& path, const DistillationDataset& data) {
  std::vector<std::string> header{"episode", "t"};
  for (const char* name : {"z_real", "z_hat"}) {
    for (auto& n : indexed_names(name, data.latent_dim)) header.push_back(n);
  }
  for (const char* name : {"a_spec", "a_star"}) {
    for (auto& n : indexed_names(name, data.action_dim)) header.push_back(n);
  }
  CsvWriter out(path);
  out.row(header);
  for (const auto& s : data.samples) {
    std::vector<std::string> row{std::to_string(s.episode), std::to_string(s.t)};
    for (const Vec* v : {&s.z_real, &s.z_hat, &s.a_spec, &s.a_star}) {
      for (Eigen::Index i = 0; i < v->size(); ++i) row.push_back(format_double((*v)(i)));
    }
    out.row(row);
  }
  out.close();
}

DistillationDataset read_dataset_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  auto count = [&](const std::string& prefix) {
    int n = 0;
    while (std::find(table.header.begin(), table.header.end(), prefix + "_" + std::to_string(n)) !=
           table.header.end()) {
      ++n;
    }
    return n;
  };
  DistillationDataset data;
  data.latent_dim = count("z_real");
  data.action_dim = count("a_spec");
  if (data.latent_dim == 0 || data.action_dim == 0 || count("z_hat") != data.latent_dim ||
      count("a_star") != data.action_dim) {
    throw std::runtime_error("dataset " + path + ": missing feature columns");
  }
  const std::size_t ep = table.column("episode");
  const std::size_t tc = table.column("t");
  auto read_vec = [&](std::size_t row, const std::string& prefix, int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = table.number(row, prefix + "_" + std::to_string(i));
    return v;
  };
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    DistillationSample s;
    s.episode = static_cast<int>(parse_double(table.rows[r][ep]));
    s.t = static_cast<int>(parse_double(table.rows[r][tc]));
    s.z_real = read_vec(r, "z_real", data.latent_dim);
    s.z_hat = read_vec(r, "z_hat", data.latent_dim);
    s.a_spec = read_vec(r, "a_spec", data.action_dim);
    s.a_star = read_vec(r, "a_star", data.action_dim);
    data.samples.push_back(std::move(s));
  }
  return data;
}

void CorrectorTrainConfig::validate() const {
  if (arch != "gated" && arch != "temporal") {
    throw std::invalid_argument("corrector.arch must be gated or temporal");
  }
  if (!(lambda >= 0.0)) throw std::invalid_argument("corrector.lambda must be >= 0");
  if (hidden < 1) throw std::invalid_argument("corrector.hidden must be >= 1");
  if (K < 1) throw std::invalid_argument("corrector.K must be >= 1");
  if (epochs < 0) throw std::invalid_argument("corrector.epochs must be >= 0");
  if (!(lr > 0.0)) throw std::invalid_argument("corrector.lr must be > 0");
  if (batch_size < 1) throw std::invalid_argument("corrector.batch must be >= 1");
  if (unroll_n < 1 || unroll_n > 5) throw std::invalid_argument("corrector.unroll_n must be in [1, 5]");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw std::invalid_argument("corrector.holdout_fraction must be in [0, 1)");
  }
}

namespace {

struct Targets {
  Mat a_spec;
  Mat a_star;
};

Targets gather(const DistillationDataset& data, const std::vector<int>& indices) {
  Targets t{Mat(indices.size(), data.action_dim), Mat(indices.size(), data.action_dim)};
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const auto& s = data.samples[static_cast<std::size_t>(indices[n])];
    t.a_spec.row(static_cast<Eigen::Index>(n)) = s.a_spec.transpose();
    t.a_star.row(static_cast<Eigen::Index>(n)) = s.a_star.transpose();
  }
  return t;
}

Var loss_graph(const Corrector& c, const std::vector<Var>& bound, Tape& tape,
               const DistillationDataset& data, const std::vector<int>& indices, double lambda) {
  const Targets tg = gather(data, indices);
  const Var delta = c.forward(bound, tape.constant(stack_windows(data, indices, c.window())));
  const Var corrected = ad::clip(ad::add(tape.constant(tg.a_spec), delta), -1.0, 1.0);
  Var total = ad::sum_squares(ad::sub(corrected, tape.constant(tg.a_star)));
  if (lambda > 0.0) total = ad::add(total, ad::scale(ad::sum_squares(delta), lambda));
  return ad::scale(total, 1.0 / static_cast<double>(indices.size()));
}

}  // namespace

double corrector_loss(const Corrector& c, const DistillationDataset& data,
                      const std::vector<int>& indices, double lambda) {
  if (indices.empty()) throw std::invalid_argument("corrector_loss: no samples");
  Tape tape;
  const auto bound = bind_constants(tape, c.params());
  return loss_graph(c, bound, tape, data, indices, lambda).value()(0, 0);
}

ResidualStats residual_stats(const Corrector& c, const DistillationDataset& data,
                             const std::vector<int>& indices) {
  if (indices.empty()) throw std::invalid_argument("residual_stats: no samples");
  const Targets tg = gather(data, indices);
  const Mat delta = c.correct_batch(stack_windows(data, indices, c.window()));
  const Mat corrected = (tg.a_spec + delta).cwiseMax(-1.0).cwiseMin(1.0);
  const double n = static_cast<double>(indices.size());
  return {(tg.a_spec - tg.a_star).squaredNorm() / n, (corrected - tg.a_star).squaredNorm() / n};
}

void split_holdout(const DistillationDataset& data, double fraction, std::uint64_t seed,
                   std::vector<int>& train, std::vector<int>& holdout) {
  train.clear();
  holdout.clear();
  std::vector<int> ids;
  for (const auto& s : data.samples) {
    if (ids.empty() || std::find(ids.begin(), ids.end(), s.episode) == ids.end()) ids.push_back(s.episode);
  }
  std::sort(ids.begin(), ids.end());
  if (fraction <= 0.0) {
    train.resize(data.samples.size());
    std::iota(train.begin(), train.end(), 0);
    return;
  }
  if (ids.size() >= 2) {
    Rng rng = Rng(seed).fork("holdout");
    for (std::size_t i = ids.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
      std::swap(ids[i], ids[j]);
    }
    auto n_hold = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ids.size())));
    n_hold = std::clamp<std::size_t>(n_hold, 1, ids.size() - 1);
    const std::set<int> held(ids.begin(), ids.begin() + static_cast<long>(n_hold));
    for (int i = 0; i < data.size(); ++i) {
      (held.count(data.samples[static_cast<std::size_t>(i)].episode) ? holdout : train).push_back(i);
    }
    return;
  }
  const int n = data.size();
  const int n_train = std::max(1, static_cast<int>(std::floor((1.0 - fraction) * n)));
  for (int i = 0; i < n; ++i) (i < n_train ? train : holdout).push_back(i);
}

CorrectorTrainResult train_corrector(const DistillationDataset& data, const CorrectorTrainConfig& cfg) {
  cfg.validate();
  if (data.samples.empty()) throw std::invalid_argument("train_corrector: empty dataset");
  Rng rng = Rng(cfg.seed).fork("corrector.train");
  Rng init_rng = Rng(cfg.seed).fork("corrector.init");
  CorrectorTrainResult res;
  res.corrector = make_corrector(cfg.arch, data.latent_dim, data.action_dim, cfg.hidden, cfg.K, init_rng);
  split_holdout(data, cfg.holdout_fraction, cfg.seed, res.train_indices, res.holdout_indices);

  // Training items: start indices of runs of unroll_n consecutive samples.
  std::vector<int> starts;
  for (std::size_t n = 0; n < res.train_indices.size(); ++n) {
    const int i = res.train_indices[n];
    bool ok = n + static_cast<std::size_t>(cfg.unroll_n) <= res.train_indices.size();
    for (int u = 1; ok && u < cfg.unroll_n; ++u) {
      const auto& a = data.samples[static_cast<std::size_t>(res.train_indices[n + u - 1])];
      const auto& b = data.samples[static_cast<std::size_t>(res.train_indices[n + u])];
      ok = res.train_indices[n + u] == i + u && a.episode == b.episode && b.t == a.t + 1;
    }
    if (ok) starts.push_back(static_cast<int>(n));
  }
  if (starts.empty()) throw std::invalid_argument("train_corrector: no training windows of length unroll_n");

  Corrector& c = *res.corrector;
  Adam adam(c.params(), AdamConfig{});
  const long batches_per_epoch =
      (static_cast<long>(starts.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps = batches_per_epoch * cfg.epochs;
  long step = 0;
  std::vector<int> order(starts.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
      std::swap(order[i], order[j]);
    }
    double weighted = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      std::vector<int> idx;
      for (std::size_t n = b; n < e; ++n) {
        const auto s = static_cast<std::size_t>(starts[static_cast<std::size_t>(order[n])]);
        for (int u = 0; u < cfg.unroll_n; ++u) idx.push_back(res.train_indices[s + static_cast<std::size_t>(u)]);
      }
      c.params().zero_grad();
      Tape tape;
      const auto bound = bind_parameters(tape, c.params());
      const Var loss = loss_graph(c, bound, tape, data, idx, cfg.lambda);
      tape.backward(loss);
      adam.step(c.params(), cosine_lr(cfg.lr, step, total_steps));
      ++step;
      weighted += loss.value()(0, 0) * static_cast<double>(e - b);
      seen += e - b;
    }
    res.train_loss.push_back(weighted / static_cast<double>(seen));
    res.holdout_loss.push_back(res.holdout_indices.empty()
                                   ? std::nan("")
                                   : corrector_loss(c, data, res.holdout_indices, cfg.lambda));
  }
  return res;
}

}  // namespace specmpc
