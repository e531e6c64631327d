#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace specmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Thrown for any operand-shape or dimension disagreement.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_string(const Mat& m);
std::string shape_string(const Vec& v);

void require_same_shape(const Mat& a, const Mat& b, const char* op);
void require_dim(const Vec& v, Eigen::Index dim, const char* what);

Mat matmul(const Mat& a, const Mat& b);
Mat add(const Mat& a, const Mat& b);
Mat tanh(const Mat& x);
// Row-wise softmax; every row sums to one.
Mat softmax_rows(const Mat& x);
Vec softmax(const Vec& x);
// Mean of squared differences over all entries.
double mse(const Mat& a, const Mat& b);

bool all_finite(const Mat& m);

// Stack row vectors (each of equal length) into a rows-are-samples matrix.
template <typename Range>
Mat stack_rows(const Range& rows) {
  Eigen::Index n = 0, d = 0;
  for (const auto& r : rows) {
    if (n == 0) d = r.size();
    if (r.size() != d) throw ShapeError("stack_rows: ragged rows");
    ++n;
  }
  Mat out(n, d);
  Eigen::Index i = 0;
  for (const auto& r : rows) out.row(i++) = r.transpose();
  return out;
}

}  // namespace specmpc
