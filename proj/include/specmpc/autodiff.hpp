#pragma once

#include <functional>
#include <string>
#include <vector>

#include "specmpc/tensor.hpp"

namespace specmpc {

// A named trainable matrix with its accumulated gradient.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
};

// Owns parameters in insertion order. Indices are stable; pointers into the
// set stay valid until the next add().
class ParameterSet {
 public:
  int add(std::string name, Mat value);

  Parameter& operator[](int i) { return params_.at(static_cast<std::size_t>(i)); }
  const Parameter& operator[](int i) const { return params_.at(static_cast<std::size_t>(i)); }
  int size() const { return static_cast<int>(params_.size()); }
  int find(const std::string& name) const;  // -1 when absent
  std::size_t total_entries() const;

  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

class Tape;

// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;

  const Mat& value() const;
  const Mat& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int index() const { return index_; }

 private:
  friend class Tape;
  Var(Tape* tape, int index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  int index_ = -1;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
// insertion order is a valid topological order for the backward sweep.
// A tape is built fresh for every forward pass.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  // Leaf whose gradient stays on the tape (read it with Var::grad()).
  Var input(Mat value);
  // Leaf bound to a parameter; backward() adds its gradient into p.grad.
  Var parameter(Parameter& p);

  // Populates gradients of every node w.r.t. the scalar `loss`. Parameter
  // gradients accumulate across calls until ParameterSet::zero_grad().
  void backward(const Var& loss);

  // Op-implementation interface.
  Var record(Mat value, Backprop backprop);
  const Mat& value_of(int i) const { return nodes_[static_cast<std::size_t>(i)].value; }
  const Mat& grad_of(int i) const { return nodes_[static_cast<std::size_t>(i)].grad; }
  Mat& grad_mut(int i) { return nodes_[static_cast<std::size_t>(i)].grad; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backprop backprop;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
};

namespace ad {

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& x, double c);
// x (n x m) plus a 1 x m row broadcast over rows.
Var add_row(const Var& x, const Var& row);
// x (n x m) with row i scaled by c(i, 0); c is n x 1.
Var mul_col(const Var& x, const Var& c);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var softmax_rows(const Var& x);
Var clip(const Var& x, double lo, double hi);
Var sum(const Var& x);
Var mean(const Var& x);
Var sum_squares(const Var& x);
Var row_sum(const Var& x);  // n x 1
Var mse(const Var& a, const Var& b);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count);
// Rows are grouped in consecutive blocks of `block` rows; adds row (i mod
// block) of `table` (block x m) to row i of x.
Var add_tiled(const Var& x, const Var& table, Eigen::Index block);
// Row `offset` of every consecutive block of `block` rows.
Var take_block_rows(const Var& x, Eigen::Index block, Eigen::Index offset);
// Scaled dot-product self-attention applied independently to each block of
// `block` consecutive rows of q, k, v (single head).
Var block_attention(const Var& q, const Var& k, const Var& v, Eigen::Index block);

}  // namespace ad

// Attention weights that block_attention uses for one block.
Mat attention_weights(const Mat& q, const Mat& k);

// Maximum over every parameter entry of
//   |analytic - central difference| / max(1, |central difference|).
// `loss` must rebuild the forward pass on the tape it is given.
double grad_check(const std::function<Var(Tape&)>& loss, ParameterSet& params, double eps);

}  // namespace specmpc
