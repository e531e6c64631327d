#include "specmpc/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace specmpc {

int ParameterSet::add(std::string name, Mat value) {
  if (find(name) >= 0) throw std::invalid_argument("duplicate parameter name: " + name);
  Mat grad = Mat::Zero(value.rows(), value.cols());
  params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad)});
  return size() - 1;
}

int ParameterSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::size_t ParameterSet::total_entries() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

const Mat& Var::value() const { return tape_->value_of(index_); }
const Mat& Var::grad() const { return tape_->grad_of(index_); }

Var Tape::record(Mat value, Backprop backprop) {
  nodes_.push_back(Node{std::move(value), Mat(), std::move(backprop), nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Mat value) { return record(std::move(value), nullptr); }

Var Tape::input(Mat value) { return record(std::move(value), nullptr); }

Var Tape::parameter(Parameter& p) {
  Var v = record(p.value, nullptr);
  nodes_.back().param = &p;
  return v;
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
  const Mat& lv = value_of(loss.index());
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_string(lv));
  }
  for (auto& n : nodes_) n.grad.setZero(n.value.rows(), n.value.cols());
  nodes_[static_cast<std::size_t>(loss.index())].grad(0, 0) = 1.0;
  for (int i = loss.index(); i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backprop) n.backprop(*this, i);
  }
  for (auto& n : nodes_) {
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

namespace ad {

namespace {

Tape& same_tape(const Var& a, const Var& b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw std::invalid_argument(std::string(op) + ": operands on different tapes");
  }
  return *a.tape();
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b, "matmul");
  const int ia = a.index(), ib = b.index();
  return t.record(specmpc::matmul(a.value(), b.value()), [ia, ib](Tape& tp, int self) {
    const Mat& g = tp.grad_of(self);
    tp.grad_mut(ia).noalias() += g * tp.value_of(ib).transpose();
    tp.grad_mut(ib).noalias() += tp.value_of(ia).transpose() * g;
  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b, "add");
  const int ia = a.index(), ib = b.index();
  return t.record(specmpc::add(a.value(), b.value()), [ia, ib](Tape& tp, int self) {
    tp.grad_mut(ia) += tp.grad_of(self);
    tp.grad_mut(ib) += tp.grad_of(self);
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  const int ia = a.index(), ib = b.index();
  return t.record(a.value() - b.value(), [ia, ib](Tape& tp, int self) {
    tp.grad_mut(ia) += tp.grad_of(self);
    tp.grad_mut(ib) -= tp.grad_of(self);
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  const int ia = a.index(), ib = b.index();
  return t.record(a.value().cwiseProduct(b.value()), [ia, ib](Tape& tp, int self) {
    const Mat& g = tp.grad_of(self);
    tp.grad_mut(ia) += g.cwiseProduct(tp.value_of(ib));
    tp.grad_mut(ib) += g.cwiseProduct(tp.value_of(ia));
  });
}

Var scale(const Var& x, double c) {
  const int ix = x.index();
  return x.tape()->record(x.value() * c, [ix, c](Tape& tp, int self) {
    tp.grad_mut(ix) += c * tp.grad_of(self);
  });
}

Var add_row(const Var& x, const Var& row) {
  Tape& t = same_tape(x, row, "add_row");
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw ShapeError("add_row: shape mismatch " + shape_string(x.value()) + " vs " +
                     shape_string(row.value()));
  }
  const int ix = x.index(), ir = row.index();
  Mat out = x.value();
  out.rowwise() += row.value().row(0);
  return t.record(std::move(out), [ix, ir](Tape& tp, int self) {
    const Mat& g = tp.grad_of(self);
    tp.grad_mut(ix) += g;
    tp.grad_mut(ir) += g.colwise().sum();
  });
}

Var mul_col(const Var& x, const Var& c) {
  Tape& t = same_tape(x, c, "mul_col");
  if (c.cols() != 1 || c.rows() != x.rows()) {
    throw ShapeError("mul_col: shape mismatch " + shape_string(x.value()) + " vs " +
                     shape_string(c.value()));
  }
  const int ix = x.index(), ic = c.index();
  Mat out = x.value().array().colwise() * c.value().col(0).array();
  return t.record(std::move(out), [ix, ic](Tape& tp, int self) {
    const Mat& g = tp.grad_of(self);
    tp.grad_mut(ix).array() += g.array().colwise() * tp.value_of(ic).col(0).array();
    tp.grad_mut(ic) += g.cwiseProduct(tp.value_of(ix)).rowwise().sum();
  });
}

Var tanh(const Var& x) {
  const int ix = x.index();
  return x.tape()->record(specmpc::tanh(x.value()), [ix](Tape& tp, int self) {
    const Mat& y = tp.value_of(self);
    tp.grad_mut(ix).array() += tp.grad_of(self).array() * (1.0 - y.array().square());
  });
}

Var sigmoid(const Var& x) {
  const int ix = x.index();
  Mat y = (1.0 / (1.0 + (-x.value().array()).exp())).matrix();
  return x.tape()->record(std::move(y), [ix](Tape& tp, int self) {
    const Mat& y = tp.value_of(self);
    tp.grad_mut(ix).array() += tp.grad_of(self).array() * y.array() * (1.0 - y.array());
  });
}

Var softmax_rows(const Var& x) {
  const int ix = x.index();
  return x.tape()->record(specmpc::softmax_rows(x.value()), [ix](Tape& tp, int self) {
    const Mat& y = tp.value_of(self);
    const Mat& g = tp.grad_of(self);
    const Vec dot = g.cwiseProduct(y).rowwise().sum();
    tp.grad_mut(ix).array() += y.array() * (g.colwise() - dot).array();
  });
}

Var clip(const Var& x, double lo, double hi) {
  const int ix = x.index();
  Mat y = x.value().cwiseMax(lo).cwiseMin(hi);
  return x.tape()->record(std::move(y), [ix, lo, hi](Tape& tp, int self) {
    const Mat& xv = tp.value_of(ix);
    const Mat& g = tp.grad_of(self);
    Mat& gx = tp.grad_mut(ix);
    for (Eigen::Index i = 0; i < xv.size(); ++i) {
      if (xv(i) > lo && xv(i) < hi) gx(i) += g(i);
    }
  });
}

Var sum(const Var& x) {
  const int ix = x.index();
  Mat s(1, 1);
  s(0, 0) = x.value().sum();
  return x.tape()->record(std::move(s), [ix](Tape& tp, int self) {
    tp.grad_mut(ix).array() += tp.grad_of(self)(0, 0);
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var sum_squares(const Var& x) {
  const int ix = x.index();
  Mat s(1, 1);
  s(0, 0) = x.value().squaredNorm();
  return x.tape()->record(std::move(s), [ix](Tape& tp, int self) {
    tp.grad_mut(ix) += (2.0 * tp.grad_of(self)(0, 0)) * tp.value_of(ix);
  });
}

Var row_sum(const Var& x) {
  const int ix = x.index();
  Mat s = x.value().rowwise().sum();
  return x.tape()->record(std::move(s), [ix](Tape& tp, int self) {
    tp.grad_mut(ix).colwise() += tp.grad_of(self).col(0);
  });
}

Var mse(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b, "mse");
  Mat s(1, 1);
  s(0, 0) = specmpc::mse(a.value(), b.value());
  const int ia = a.index(), ib = b.index();
  return t.record(std::move(s), [ia, ib](Tape& tp, int self) {
    const Mat& av = tp.value_of(ia);
    const double k = 2.0 * tp.grad_of(self)(0, 0) / static_cast<double>(av.size());
    const Mat d = k * (av - tp.value_of(ib));
    tp.grad_mut(ia) += d;
    tp.grad_mut(ib) -= d;
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  Tape& t = *parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    same_tape(parts.front(), p, "concat_cols");
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: shape mismatch " + shape_string(parts.front().value()) +
                       " vs " + shape_string(p.value()));
    }
    cols += p.cols();
  }
  Mat out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    layout.emplace_back(p.index(), c);
    c += p.cols();
  }
  return t.record(std::move(out), [layout](Tape& tp, int self) {
    const Mat& g = tp.grad_of(self);
    for (const auto& [idx, start] : layout) {
      tp.grad_mut(idx) += g.middleCols(start, tp.value_of(idx).cols());
    }
  });
}

Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " +
                     shape_string(x.value()));
  }
  const int ix = x.index();
  return x.tape()->record(x.value().middleCols(start, count), [ix, start, count](Tape& tp, int self) {
    tp.grad_mut(ix).middleCols(start, count) += tp.grad_of(self);
  });
}

Var add_tiled(const Var& x, const Var& table, Eigen::Index block) {
  Tape& t = same_tape(x, table, "add_tiled");
  if (table.rows() != block || table.cols() != x.cols() || x.rows() % block != 0) {
    throw ShapeError("add_tiled: shape mismatch " + shape_string(x.value()) + " vs " +
                     shape_string(table.value()));
  }
  Mat out = x.value();
  for (Eigen::Index r = 0; r < out.rows(); r += block) out.middleRows(r, block) += table.value();
  const int ix = x.index(), it = table.index();
  return t.record(std::move(out), [ix, it, block](Tape& tp, int self) {
    const Mat& g = tp.grad_of(self);
    tp.grad_mut(ix) += g;
    Mat& gt = tp.grad_mut(it);
    for (Eigen::Index r = 0; r < g.rows(); r += block) gt += g.middleRows(r, block);
  });
}

Var take_block_rows(const Var& x, Eigen::Index block, Eigen::Index offset) {
  if (block <= 0 || offset < 0 || offset >= block || x.rows() % block != 0) {
    throw ShapeError("take_block_rows: invalid block layout for " + shape_string(x.value()));
  }
  const Eigen::Index n = x.rows() / block;
  Mat out(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = x.value().row(i * block + offset);
  const int ix = x.index();
  return x.tape()->record(std::move(out), [ix, block, offset](Tape& tp, int self) {
    const Mat& g = tp.grad_of(self);
    Mat& gx = tp.grad_mut(ix);
    for (Eigen::Index i = 0; i < g.rows(); ++i) gx.row(i * block + offset) += g.row(i);
  });
}

Var block_attention(const Var& q, const Var& k, const Var& v, Eigen::Index block) {
  Tape& t = same_tape(q, k, "block_attention");
  same_tape(q, v, "block_attention");
  require_same_shape(q.value(), k.value(), "block_attention");
  if (v.rows() != q.rows() || block <= 0 || q.rows() % block != 0) {
    throw ShapeError("block_attention: shape mismatch " + shape_string(q.value()) + " vs " +
                     shape_string(v.value()));
  }
  const double s = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Mat out(q.rows(), v.cols());
  for (Eigen::Index r = 0; r < q.rows(); r += block) {
    const Mat p = specmpc::softmax_rows(s * q.value().middleRows(r, block) *
                               k.value().middleRows(r, block).transpose());
    out.middleRows(r, block).noalias() = p * v.value().middleRows(r, block);
  }
  const int iq = q.index(), ik = k.index(), iv = v.index();
  return t.record(std::move(out), [iq, ik, iv, block, s](Tape& tp, int self) {
    const Mat& g = tp.grad_of(self);
    const Mat& qv = tp.value_of(iq);
    const Mat& kv = tp.value_of(ik);
    const Mat& vv = tp.value_of(iv);
    for (Eigen::Index r = 0; r < g.rows(); r += block) {
      const auto qb = qv.middleRows(r, block);
      const auto kb = kv.middleRows(r, block);
      const auto gb = g.middleRows(r, block);
      const Mat p = specmpc::softmax_rows(s * qb * kb.transpose());
      const Mat gp = gb * vv.middleRows(r, block).transpose();
      const Vec dot = gp.cwiseProduct(p).rowwise().sum();
      const Mat gs = (p.array() * (gp.colwise() - dot).array()).matrix();
      tp.grad_mut(iv).middleRows(r, block).noalias() += p.transpose() * gb;
      tp.grad_mut(iq).middleRows(r, block).noalias() += s * gs * kb;
      tp.grad_mut(ik).middleRows(r, block).noalias() += s * gs.transpose() * qb;
    }
  });
}

}  // namespace ad

Mat attention_weights(const Mat& q, const Mat& k) {
  require_same_shape(q, k, "attention_weights");
  const double s = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return softmax_rows(s * q * k.transpose());
}

double grad_check(const std::function<Var(Tape&)>& loss, ParameterSet& params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  params.zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  auto eval = [&]() {
    Tape tape;
    return loss(tape).value()(0, 0);
  };
  double worst = 0.0;
  for (auto& p : params) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double saved = p.value(i);
      p.value(i) = saved + eps;
      const double up = eval();
      p.value(i) = saved - eps;
      const double down = eval();
      p.value(i) = saved;
      const double fd = (up - down) / (2.0 * eps);
      worst = std::max(worst, std::abs(p.grad(i) - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace specmpc
