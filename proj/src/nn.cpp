#include "specmpc/nn.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace specmpc {

Linear Linear::create(ParameterSet& params, const std::string& name, int in, int out, Rng& rng) {
  // Glorot-uniform weights, zero bias.
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Mat w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = (2.0 * rng.uniform() - 1.0) * limit;
  Linear l;
  l.weight = params.add(name + ".weight", std::move(w));
  l.bias = params.add(name + ".bias", Mat::Zero(1, out));
  return l;
}

Linear Linear::create_zero(ParameterSet& params, const std::string& name, int in, int out) {
  Linear l;
  l.weight = params.add(name + ".weight", Mat::Zero(in, out));
  l.bias = params.add(name + ".bias", Mat::Zero(1, out));
  return l;
}

Var Linear::forward(Tape& tape, ParameterSet& params, const Var& x) const {
  return ad::add_row(ad::matmul(x, tape.parameter(params[weight])), tape.parameter(params[bias]));
}

Var Linear::forward(const std::vector<Var>& bound, const Var& x) const {
  return ad::add_row(ad::matmul(x, bound.at(static_cast<std::size_t>(weight))),
                     bound.at(static_cast<std::size_t>(bias)));
}

Mat Linear::forward(const ParameterSet& params, const Mat& x) const {
  Mat y = specmpc::matmul(x, params[weight].value);
  y.rowwise() += params[bias].value.row(0);
  return y;
}

int Linear::in_dim(const ParameterSet& params) const {
  return static_cast<int>(params[weight].value.rows());
}

int Linear::out_dim(const ParameterSet& params) const {
  return static_cast<int>(params[weight].value.cols());
}

Mlp Mlp::create(ParameterSet& params, const std::string& name, const std::vector<int>& sizes,
                Rng& rng) {
  if (sizes.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
  Mlp m;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    m.layers.push_back(
        Linear::create(params, name + "." + std::to_string(i), sizes[i], sizes[i + 1], rng));
  }
  return m;
}

Var Mlp::forward(Tape& tape, ParameterSet& params, const Var& x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(tape, params, h);
    if (i + 1 < layers.size()) h = ad::tanh(h);
  }
  return h;
}

Var Mlp::forward(const std::vector<Var>& bound, const Var& x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(bound, h);
    if (i + 1 < layers.size()) h = ad::tanh(h);
  }
  return h;
}

Mat Mlp::forward(const ParameterSet& params, const Mat& x) const {
  Mat h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(params, h);
    if (i + 1 < layers.size()) h = specmpc::tanh(h);
  }
  return h;
}

std::vector<Var> bind_parameters(Tape& tape, ParameterSet& params) {
  std::vector<Var> out;
  out.reserve(static_cast<std::size_t>(params.size()));
  for (auto& p : params) out.push_back(tape.parameter(p));
  return out;
}

std::vector<Var> bind_constants(Tape& tape, const ParameterSet& params) {
  std::vector<Var> out;
  out.reserve(static_cast<std::size_t>(params.size()));
  for (const auto& p : params) out.push_back(tape.constant(p.value));
  return out;
}

Adam::Adam(const ParameterSet& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& p : params) {
    m_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adam::step(ParameterSet& params, double lr) {
  if (static_cast<std::size_t>(params.size()) != m_.size()) {
    throw std::logic_error("Adam: parameter set changed since construction");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (int i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    Mat& m = m_[static_cast<std::size_t>(i)];
    Mat& v = v_[static_cast<std::size_t>(i)];
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * p.grad;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
  }
}

double cosine_lr(double base_lr, long step, long total) {
  if (total <= 0) return base_lr;
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

nlohmann::json params_to_json(const ParameterSet& params, const nlohmann::json& meta) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : params) {
    std::vector<double> data(static_cast<std::size_t>(p.value.size()));
    // Row-major order in the file regardless of Eigen's storage order.
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) data[k++] = p.value(r, c);
    }
    arr.push_back({{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}, {"data", data}});
  }
  return {{"format", "specmpc.params/1"}, {"meta", meta}, {"params", arr}};
}

void params_from_json(const nlohmann::json& doc, ParameterSet& params) {
  if (doc.value("format", "") != "specmpc.params/1") {
    throw std::runtime_error("checkpoint: unrecognized format tag");
  }
  const auto& arr = doc.at("params");
  for (auto& p : params) {
    const nlohmann::json* found = nullptr;
    for (const auto& e : arr) {
      if (e.at("name").get<std::string>() == p.name) found = &e;
    }
    if (found == nullptr) throw std::runtime_error("checkpoint: missing parameter " + p.name);
    const auto shape = found->at("shape").get<std::vector<long>>();
    if (shape.size() != 2 || shape[0] != p.value.rows() || shape[1] != p.value.cols()) {
      throw ShapeError("checkpoint: parameter " + p.name + " has shape mismatch, expected " +
                       shape_string(p.value));
    }
    const auto data = found->at("data").get<std::vector<double>>();
    if (data.size() != static_cast<std::size_t>(p.value.size())) {
      throw ShapeError("checkpoint: parameter " + p.name + " has wrong entry count");
    }
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) p.value(r, c) = data[k++];
    }
  }
}

void write_json_file(const std::string& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << doc.dump(1) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return nlohmann::json::parse(in);
}

}  // namespace specmpc
