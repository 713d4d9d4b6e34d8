#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace xnet {

/// Dense 64-bit row-major storage. Scalars are 1x1, batches are rows.
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Shape {
  Index rows = 0;
  Index cols = 0;
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline Shape shape_of(const Tensor& t) { return {t.rows(), t.cols()}; }

inline std::string to_string(Shape s) {
  return "[" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + "]";
}

inline Tensor scalar_tensor(double v) {
  Tensor t(1, 1);
  t(0, 0) = v;
  return t;
}

inline Tensor row_tensor(std::initializer_list<double> values) {
  Tensor t(1, static_cast<Index>(values.size()));
  Index j = 0;
  for (double v : values) t(0, j++) = v;
  return t;
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// True when `from` can be expanded to `to` by repeating rows and/or columns.
inline bool broadcastable(Shape from, Shape to) {
  return (from.rows == to.rows || from.rows == 1) && (from.cols == to.cols || from.cols == 1);
}

inline Tensor broadcast_to(const Tensor& x, Shape to) {
  const Shape from = shape_of(x);
  if (from == to) return x;
  if (!broadcastable(from, to)) {
    throw ShapeError("cannot broadcast " + to_string(from) + " to " + to_string(to));
  }
  if (from.rows == 1 && from.cols == 1) return Tensor::Constant(to.rows, to.cols, x(0, 0));
  if (from.rows == 1) return x.replicate(to.rows, 1);
  return x.replicate(1, to.cols);
}

/// Sums `g` down to `to`; the adjoint of broadcast_to.
inline Tensor reduce_to(const Tensor& g, Shape to) {
  const Shape from = shape_of(g);
  if (from == to) return g;
  if (!broadcastable(to, from)) {
    throw ShapeError("cannot reduce " + to_string(from) + " to " + to_string(to));
  }
  if (to.rows == 1 && to.cols == 1) return scalar_tensor(g.sum());
  if (to.rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

}  // namespace xnet
