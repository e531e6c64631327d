#include "specmpc/tensor.hpp"

#include <cmath>

namespace specmpc {

std::string shape_string(const Mat& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

std::string shape_string(const Vec& v) { return "(" + std::to_string(v.size()) + ")"; }

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                     shape_string(b));
  }
}

void require_dim(const Vec& v, Eigen::Index dim, const char* what) {
  if (v.size() != dim) {
    throw ShapeError(std::string(what) + ": expected dimension " + std::to_string(dim) +
                     ", got " + std::to_string(v.size()));
  }
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
  return a * b;
}

Mat add(const Mat& a, const Mat& b) {
  require_same_shape(a, b, "add");
  return a + b;
}

Mat tanh(const Mat& x) { return x.array().tanh().matrix(); }

Mat softmax_rows(const Mat& x) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    auto e = (x.row(r).array() - m).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  return out;
}

Vec softmax(const Vec& x) { return softmax_rows(x.transpose()).transpose(); }

double mse(const Mat& a, const Mat& b) {
  require_same_shape(a, b, "mse");
  if (a.size() == 0) return 0.0;
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace specmpc
