#pragma once

// Tensor expression graph with reverse-mode differentiation.
//
// Nodes are appended in topological order and evaluated eagerly when created.
// After leaves are rebound, evaluate() replays the recorded list, so a graph
// built once (forward pass, input derivatives, loss) serves every training
// step. Two differentiation routes share the op set:
//   backward()  numeric reverse sweep, leaves the graph untouched;
//   gradient()  appends nodes computing the gradient, so the result can be
//               differentiated again (input derivatives inside PINN losses).

#include "xnet/elementwise.hpp"
#include "xnet/tensor.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace xnet::autograd {

using NodeId = std::uint32_t;

enum class Op : std::uint8_t {
  Parameter,
  Input,
  Constant,
  ZerosLike,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  Shift,
  MatMul,
  Transpose,
  SumAll,
  RowSum,
  ReduceLike,
  BroadcastLike,
  Column,
  ScatterColumn,
  Unary,
  Cauchy,
  LogSumExpRows,
  SoftmaxRows,
  MeanAll,
  SpreadMean,
};

inline std::string_view op_name(Op op) {
  static constexpr std::array<std::string_view, 25> names{
      "parameter", "input",   "constant",  "zeros_like",  "add",        "sub",
      "mul",       "div",     "neg",       "scale",       "shift",      "matmul",
      "transpose", "sum_all", "row_sum",   "reduce_like", "broadcast_like",
      "column",    "scatter_column",       "unary",       "cauchy",     "logsumexp_rows",
      "softmax_rows", "mean_all", "spread_mean"};
  return names[static_cast<std::size_t>(op)];
}

enum class CauchyMode : std::uint8_t { Full, Odd, Even };

struct Node {
  Op op = Op::Constant;
  std::array<NodeId, 4> parents{};
  std::uint8_t arity = 0;
  double attr = 0.0;  // Scale factor / Shift offset
  int k1 = 0;         // Unary order, Cauchy x-order, Column index, MatMul transpose flags
  int k2 = 0;         // Cauchy d-order
  Fn fn = Fn::Tanh;
  CauchyMode mode = CauchyMode::Full;
  Tensor value;

  [[nodiscard]] bool is_leaf() const {
    return op == Op::Parameter || op == Op::Input || op == Op::Constant;
  }
};

class Graph;

/// Handle to a node. Cheap to copy; valid while its graph lives.
struct Var {
  Graph* graph = nullptr;
  NodeId id = 0;

  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] Shape shape() const;
  [[nodiscard]] double item() const;
};

/// Gradients of one output with respect to the requested leaves, in request order.
struct GradientMap {
  std::vector<NodeId> leaves;
  std::vector<Tensor> grads;

  [[nodiscard]] const Tensor& at(Var v) const {
    for (std::size_t i = 0; i < leaves.size(); ++i)
      if (leaves[i] == v.id) return grads[i];
    throw std::out_of_range("leaf not in gradient map");
  }
  [[nodiscard]] std::size_t size() const { return grads.size(); }
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = delete;
  Graph& operator=(Graph&&) = delete;

  Var parameter(Tensor v) { return leaf(Op::Parameter, std::move(v)); }
  Var input(Tensor v) { return leaf(Op::Input, std::move(v)); }
  Var constant(Tensor v) { return leaf(Op::Constant, std::move(v)); }
  Var constant(double v) { return constant(scalar_tensor(v)); }

  /// Replaces a leaf value. Parameters keep their shape; inputs may change
  /// row count (batch size) between evaluations.
  void bind(Var leaf, const Tensor& v) {
    Node& n = node(leaf.id);
    if (!n.is_leaf()) throw std::invalid_argument("bind: node " + std::to_string(leaf.id) + " is not a leaf");
    if (n.op == Op::Parameter && shape_of(v) != shape_of(n.value)) {
      throw ShapeError("bind: parameter shape " + to_string(shape_of(n.value)) + " vs " + to_string(shape_of(v)));
    }
    check_finite(v, leaf.id);
    n.value = v;
  }

  [[nodiscard]] const Tensor& value(Var v) const { return node(v.id).value; }
  [[nodiscard]] const Node& node(NodeId id) const { return nodes_.at(id); }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// Recomputes every non-leaf node in recording order.
  void evaluate() {
    for (NodeId i = 0; i < nodes_.size(); ++i) {
      if (!nodes_[i].is_leaf()) compute(i);
    }
  }

  /// Recomputes only the ancestors of `outputs`.
  void evaluate(std::span<const Var> outputs) {
    const auto mask = ancestors(outputs);
    for (NodeId i = 0; i < nodes_.size(); ++i) {
      if (mask[i] && !nodes_[i].is_leaf()) compute(i);
    }
  }

  void evaluate(Var output) { evaluate(std::span<const Var>(&output, 1)); }

  /// d(output)/d(leaf) for each requested leaf. A non-scalar output needs a
  /// seed cotangent of its shape. Unreachable leaves get zero gradients.
  GradientMap backward(Var output, std::span<const Var> leaves, const Tensor* seed = nullptr);
  GradientMap backward(Var output, std::initializer_list<Var> leaves, const Tensor* seed = nullptr) {
    return backward(output, std::span<const Var>(leaves.begin(), leaves.size()), seed);
  }

  /// Records nodes computing d(output)/d(wrt[i]) and returns them.
  std::vector<Var> gradient(Var output, std::span<const Var> wrt, Var* seed = nullptr);
  std::vector<Var> gradient(Var output, std::initializer_list<Var> wrt) {
    return gradient(output, std::span<const Var>(wrt.begin(), wrt.size()));
  }

  // Node constructors. Shapes are checked and the value computed immediately.
  Var add(Var a, Var b) { return binary(Op::Add, a, b); }
  Var sub(Var a, Var b) { return binary(Op::Sub, a, b); }
  Var mul(Var a, Var b) { return binary(Op::Mul, a, b); }
  Var div(Var a, Var b) { return binary(Op::Div, a, b); }
  Var neg(Var a) { return make(Op::Neg, {a.id}); }
  Var scale(Var a, double c) {
    Node n = blank(Op::Scale, {a.id});
    n.attr = c;
    return push(std::move(n));
  }
  Var shift(Var a, double c) {
    Node n = blank(Op::Shift, {a.id});
    n.attr = c;
    return push(std::move(n));
  }
  /// op(a) * op(b), op = transpose when the flag is set.
  Var matmul(Var a, Var b, bool transpose_a = false, bool transpose_b = false) {
    Node n = blank(Op::MatMul, {a.id, b.id});
    n.k1 = (transpose_a ? 1 : 0) | (transpose_b ? 2 : 0);
    return push(std::move(n));
  }
  Var transpose(Var a) { return make(Op::Transpose, {a.id}); }
  Var sum(Var a) { return make(Op::SumAll, {a.id}); }
  Var row_sum(Var a) { return make(Op::RowSum, {a.id}); }
  Var mean(Var a) { return make(Op::MeanAll, {a.id}); }
  /// Scalar g spread over the shape of ref and divided by its element count.
  Var spread_mean(Var g, Var ref) { return make(Op::SpreadMean, {g.id, ref.id}); }
  Var reduce_like(Var a, Var ref) { return make(Op::ReduceLike, {a.id, ref.id}); }
  Var broadcast_like(Var a, Var ref) { return make(Op::BroadcastLike, {a.id, ref.id}); }
  Var zeros_like(Var ref) { return make(Op::ZerosLike, {ref.id}); }
  Var column(Var a, int index) {
    Node n = blank(Op::Column, {a.id});
    n.k1 = index;
    return push(std::move(n));
  }
  /// Matrix shaped like `ref`, zero except column `index` which holds `a`.
  Var scatter_column(Var a, Var ref, int index) {
    Node n = blank(Op::ScatterColumn, {a.id, ref.id});
    n.k1 = index;
    return push(std::move(n));
  }
  /// Elementwise k-th derivative of f.
  Var unary(Fn f, Var a, int order = 0) {
    Node n = blank(Op::Unary, {a.id});
    n.fn = f;
    n.k1 = order;
    return push(std::move(n));
  }
  /// Elementwise lambda1 * x/(x^2+d^2) + lambda2/(x^2+d^2), differentiated
  /// kx times in x and kd times in d. Parameters broadcast over rows of x.
  Var cauchy(Var x, Var lambda1, Var lambda2, Var d, CauchyMode mode = CauchyMode::Full, int kx = 0, int kd = 0) {
    Node n = blank(Op::Cauchy, {x.id, lambda1.id, lambda2.id, d.id});
    n.mode = mode;
    n.k1 = kx;
    n.k2 = kd;
    return push(std::move(n));
  }
  Var logsumexp_rows(Var a) { return make(Op::LogSumExpRows, {a.id}); }
  Var softmax_rows(Var a) { return make(Op::SoftmaxRows, {a.id}); }

 private:
  std::vector<Node> nodes_;
  std::vector<Tensor> adjoint_;  // scratch for backward()
  std::vector<char> has_adjoint_;

  Node& node(NodeId id) { return nodes_.at(id); }

  static void check_finite(const Tensor& t, NodeId id, std::string_view what = "value") {
    // Any NaN/Inf entry makes the sum non-finite; the full scan only runs to
    // rule out an overflowing sum of finite entries.
    if (!std::isfinite(t.sum()) && !t.allFinite()) {
      throw NonFiniteError("non-finite " + std::string(what) + " at node " + std::to_string(id));
    }
  }

  Var leaf(Op op, Tensor v) {
    Node n;
    n.op = op;
    n.value = std::move(v);
    const auto id = static_cast<NodeId>(nodes_.size());
    check_finite(n.value, id);
    nodes_.push_back(std::move(n));
    return {this, id};
  }

  Node blank(Op op, std::initializer_list<NodeId> parents) const {
    Node n;
    n.op = op;
    n.arity = static_cast<std::uint8_t>(parents.size());
    std::copy(parents.begin(), parents.end(), n.parents.begin());
    for (NodeId p : parents)
      if (p >= nodes_.size()) throw std::invalid_argument("parent node does not exist");
    return n;
  }

  Var make(Op op, std::initializer_list<NodeId> parents) { return push(blank(op, parents)); }

  Var push(Node n) {
    const auto id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(std::move(n));
    try {
      compute(id);
    } catch (...) {
      nodes_.pop_back();
      throw;
    }
    return {this, id};
  }

  // Elementwise binary op with implicit broadcasting of the smaller operand.
  Var binary(Op op, Var a, Var b) {
    const Shape sa = shape_of(value(a));
    const Shape sb = shape_of(value(b));
    if (sa != sb) {
      if (broadcastable(sb, sa)) {
        b = broadcast_like(b, a);
      } else if (broadcastable(sa, sb)) {
        a = broadcast_like(a, b);
      } else {
        throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + to_string(sa) + " and " + to_string(sb));
      }
    }
    return make(op, {a.id, b.id});
  }

  std::vector<char> ancestors(std::span<const Var> outputs) const {
    std::vector<char> mask(nodes_.size(), 0);
    NodeId top = 0;
    for (Var v : outputs) {
      mask.at(v.id) = 1;
      top = std::max(top, v.id);
    }
    for (NodeId i = top + 1; i-- > 0;) {
      if (!mask[i]) continue;
      const Node& n = nodes_[i];
      for (int p = 0; p < n.arity; ++p) mask[n.parents[static_cast<std::size_t>(p)]] = 1;
    }
    return mask;
  }

  // Nodes on a path between one of `leaves` and `output`.
  std::vector<char> active_set(NodeId output, std::span<const Var> leaves) const {
    std::vector<char> depends(output + 1, 0);
    for (Var l : leaves)
      if (l.id <= output) depends[l.id] = 1;
    for (NodeId i = 0; i <= output; ++i) {
      if (depends[i]) continue;
      const Node& n = nodes_[i];
      for (int p = 0; p < n.arity; ++p) {
        // Reference operands contribute shape only.
        if ((n.op == Op::ReduceLike || n.op == Op::BroadcastLike || n.op == Op::ScatterColumn ||
             n.op == Op::SpreadMean) && p == 1) continue;
        if (n.op == Op::ZerosLike) continue;
        if (depends[n.parents[static_cast<std::size_t>(p)]]) {
          depends[i] = 1;
          break;
        }
      }
    }
    std::vector<char> reach(output + 1, 0);
    reach[output] = 1;
    for (NodeId i = output + 1; i-- > 0;) {
      if (!reach[i]) continue;
      const Node& n = nodes_[i];
      for (int p = 0; p < n.arity; ++p) reach[n.parents[static_cast<std::size_t>(p)]] = 1;
    }
    for (NodeId i = 0; i <= output; ++i) depends[i] = static_cast<char>(depends[i] && reach[i]);
    return depends;
  }

  void compute(NodeId id);
  void numeric_vjp(NodeId id, const Tensor& g, const std::vector<char>& active);
  void accumulate(NodeId id, Tensor contribution);
  void symbolic_vjp(NodeId id, Var g, const std::vector<char>& active, std::vector<Var>& adj, std::vector<char>& has);
};

// ---------------------------------------------------------------------------
// Var helpers and operators

inline const Tensor& Var::value() const { return graph->value(*this); }
inline Shape Var::shape() const { return shape_of(value()); }
inline double Var::item() const {
  const Tensor& t = value();
  if (t.size() != 1) throw ShapeError("item() on non-scalar " + to_string(shape_of(t)));
  return t(0, 0);
}

inline Var operator+(Var a, Var b) { return a.graph->add(a, b); }
inline Var operator-(Var a, Var b) { return a.graph->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.graph->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.graph->div(a, b); }
inline Var operator-(Var a) { return a.graph->neg(a); }
inline Var operator*(Var a, double c) { return a.graph->scale(a, c); }
inline Var operator*(double c, Var a) { return a.graph->scale(a, c); }
inline Var operator/(Var a, double c) { return a.graph->scale(a, 1.0 / c); }
inline Var operator+(Var a, double c) { return a.graph->shift(a, c); }
inline Var operator+(double c, Var a) { return a.graph->shift(a, c); }
inline Var operator-(Var a, double c) { return a.graph->shift(a, -c); }
inline Var operator-(double c, Var a) { return a.graph->shift(a.graph->neg(a), c); }

inline Var matmul(Var a, Var b) { return a.graph->matmul(a, b); }
inline Var sum(Var a) { return a.graph->sum(a); }
inline Var mean(Var a) { return a.graph->mean(a); }
inline Var square(Var a) { return a * a; }
inline Var tanh(Var a) { return a.graph->unary(Fn::Tanh, a); }
inline Var sigmoid(Var a) { return a.graph->unary(Fn::Sigmoid, a); }
inline Var sin(Var a) { return a.graph->unary(Fn::Sin, a); }
inline Var cos(Var a) { return a.graph->unary(Fn::Sin, a, 1); }
inline Var exp(Var a) { return a.graph->unary(Fn::Exp, a); }
inline Var relu(Var a) { return a.graph->unary(Fn::Relu, a); }
inline Var leaky_relu(Var a) { return a.graph->unary(Fn::LeakyRelu, a); }
inline Var column(Var a, int i) { return a.graph->column(a, i); }

// ---------------------------------------------------------------------------
// Forward evaluation

namespace detail {

inline double bcast(const Tensor& t, Index i, Index j) {
  return t(t.rows() == 1 ? 0 : i, t.cols() == 1 ? 0 : j);
}

// Fast paths for row-broadcast parameters (the dense-layer case) with small
// derivative orders; everything else goes through the generic kernel.
inline constexpr int kFastCauchyMaxX = 4;
inline constexpr int kFastCauchyMaxD = 2;

inline bool cauchy_fast_eligible(const Tensor& x, const Tensor& l1, const Tensor& l2, const Tensor& d) {
  for (const Tensor* p : {&l1, &l2, &d}) {
    if (p->rows() != 1 || (p->cols() != x.cols() && p->cols() != 1)) return false;
  }
  return true;
}

struct CauchyColumns {
  std::vector<double> l1, l2, d, inv_d;
  CauchyColumns(const Tensor& l1_, const Tensor& l2_, const Tensor& d_, Index cols)
      : l1(static_cast<std::size_t>(cols)), l2(l1.size()), d(l1.size()), inv_d(l1.size()) {
    for (Index j = 0; j < cols; ++j) {
      const auto u = static_cast<std::size_t>(j);
      l1[u] = l1_(0, l1_.cols() == 1 ? 0 : j);
      l2[u] = l2_(0, l2_.cols() == 1 ? 0 : j);
      d[u] = d_(0, d_.cols() == 1 ? 0 : j);
      inv_d[u] = 1.0 / d[u];
    }
  }

  /// Weights (a, b) of the odd and even parts for `mode`.
  [[nodiscard]] std::pair<std::vector<double>, std::vector<double>> weights(CauchyMode mode) const {
    switch (mode) {
      case CauchyMode::Full: return {l1, l2};
      case CauchyMode::Odd: return {std::vector<double>(l1.size(), 1.0), std::vector<double>(l1.size(), 0.0)};
      case CauchyMode::Even: break;
    }
    return {std::vector<double>(l1.size(), 0.0), std::vector<double>(l1.size(), 1.0)};
  }
};

template <int KX, int KD>
void cauchy_apply_fixed(const Tensor& x, const CauchyColumns& c, CauchyMode mode, Tensor& out) {
  out.resize(x.rows(), x.cols());
  const Index cols = x.cols();
  const auto [wa, wb] = c.weights(mode);
  const double* __restrict a = wa.data();
  const double* __restrict b = wb.data();
  const double* __restrict d = c.d.data();
  const double* __restrict inv_d = c.inv_d.data();
  for (Index i = 0; i < x.rows(); ++i) {
    const double* __restrict xr = x.data() + i * cols;
    double* __restrict o = out.data() + i * cols;
    for (Index j = 0; j < cols; ++j) {
      const FixedCauchyKernel<KX + KD> k(xr[j], d[j], inv_d[j]);
      o[j] = a[j] * k.template odd<KX, KD>() + b[j] * k.template even<KX, KD>();
    }
  }
}

template <int KX, int KD>
void cauchy_vjp_fixed(const Tensor& g, const Tensor& x, const CauchyColumns& c, CauchyMode mode,
                      Tensor* const out[4]) {
  const Index cols = x.cols();
  const auto n = static_cast<std::size_t>(cols);
  std::vector<double> s1(n, 0.0), s2(n, 0.0), sd(n, 0.0), scratch;
  if (out[0] != nullptr) out[0]->resize(x.rows(), cols);
  else scratch.resize(n);
  const auto [wa, wb] = c.weights(mode);
  const double* __restrict a = wa.data();
  const double* __restrict b = wb.data();
  const double* __restrict d = c.d.data();
  const double* __restrict inv_d = c.inv_d.data();
  double* __restrict p1 = s1.data();
  double* __restrict p2 = s2.data();
  double* __restrict pd = sd.data();
  for (Index i = 0; i < x.rows(); ++i) {
    const double* __restrict xr = x.data() + i * cols;
    const double* __restrict gr = g.data() + i * cols;
    double* __restrict dx = out[0] != nullptr ? out[0]->data() + i * cols : scratch.data();
    for (Index j = 0; j < cols; ++j) {
      const FixedCauchyKernel<KX + KD + 1> k(xr[j], d[j], inv_d[j]);
      const double gij = gr[j];
      const double odd = k.template odd<KX, KD>();
      const double even = k.template even<KX, KD>();
      dx[j] = gij * (a[j] * k.template odd<KX + 1, KD>() + b[j] * k.template even<KX + 1, KD>());
      p1[j] += gij * odd;
      p2[j] += gij * even;
      pd[j] += gij * (a[j] * k.template odd<KX, KD + 1>() + b[j] * k.template even<KX, KD + 1>());
    }
  }
  auto store = [&](Tensor* t, const std::vector<double>& s) {
    if (t == nullptr) return;
    Tensor row(1, cols);
    for (Index j = 0; j < cols; ++j) row(0, j) = s[static_cast<std::size_t>(j)];
    *t = reduce_to(row, shape_of(*t));
  };
  store(out[1], s1);
  store(out[2], s2);
  store(out[3], sd);
}

template <int KX, int KD>
bool cauchy_dispatch_apply(int kx, int kd, const Tensor& x, const CauchyColumns& c, CauchyMode mode, Tensor& out) {
  if (kx == KX && kd == KD) {
    cauchy_apply_fixed<KX, KD>(x, c, mode, out);
    return true;
  }
  if constexpr (KD < kFastCauchyMaxD) return cauchy_dispatch_apply<KX, KD + 1>(kx, kd, x, c, mode, out);
  else if constexpr (KX < kFastCauchyMaxX) return cauchy_dispatch_apply<KX + 1, 0>(kx, kd, x, c, mode, out);
  else return false;
}

template <int KX, int KD>
bool cauchy_dispatch_vjp(int kx, int kd, const Tensor& g, const Tensor& x, const CauchyColumns& c, CauchyMode mode,
                         Tensor* const out[4]) {
  if (kx == KX && kd == KD) {
    cauchy_vjp_fixed<KX, KD>(g, x, c, mode, out);
    return true;
  }
  if constexpr (KD + 1 < kFastCauchyMaxD) return cauchy_dispatch_vjp<KX, KD + 1>(kx, kd, g, x, c, mode, out);
  else if constexpr (KX + 1 < kFastCauchyMaxX) return cauchy_dispatch_vjp<KX + 1, 0>(kx, kd, g, x, c, mode, out);
  else return false;
}

inline void cauchy_apply(const Tensor& x, const Tensor& l1, const Tensor& l2, const Tensor& d, CauchyMode mode,
                         int kx, int kd, Tensor& out) {
  for (const Tensor* p : {&l1, &l2, &d}) {
    if (!broadcastable(shape_of(*p), shape_of(x))) {
      throw ShapeError("cauchy: parameter " + to_string(shape_of(*p)) + " does not broadcast to " +
                       to_string(shape_of(x)));
    }
  }
  if (cauchy_fast_eligible(x, l1, l2, d) &&
      cauchy_dispatch_apply<0, 0>(kx, kd, x, CauchyColumns(l1, l2, d, x.cols()), mode, out)) {
    return;
  }
  out.resize(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      const CauchyBasis b = cauchy_basis(x(i, j), bcast(d, i, j), kx, kd);
      switch (mode) {
        case CauchyMode::Full: out(i, j) = bcast(l1, i, j) * b.odd + bcast(l2, i, j) * b.even; break;
        case CauchyMode::Odd: out(i, j) = b.odd; break;
        case CauchyMode::Even: out(i, j) = b.even; break;
      }
    }
  }
}

// Adjoints of a Cauchy node for x, lambda1, lambda2 and d in one pass.
// Parameter adjoints are reduced to their own (broadcast) shapes.
inline void cauchy_vjp(const Tensor& g, const Tensor& x, const Tensor& l1, const Tensor& l2, const Tensor& d,
                       CauchyMode mode, int kx, int kd, Tensor* const out[4]) {
  if (cauchy_fast_eligible(x, l1, l2, d)) {
    for (int p = 1; p < 4; ++p)
      if (out[p] != nullptr) out[p]->resize((p == 1 ? l1 : p == 2 ? l2 : d).rows(), (p == 1 ? l1 : p == 2 ? l2 : d).cols());
    if (cauchy_dispatch_vjp<0, 0>(kx, kd, g, x, CauchyColumns(l1, l2, d, x.cols()), mode, out)) return;
  }
  if (out[0] != nullptr) out[0]->resize(x.rows(), x.cols());
  if (out[1] != nullptr) out[1]->setZero(l1.rows(), l1.cols());
  if (out[2] != nullptr) out[2]->setZero(l2.rows(), l2.cols());
  if (out[3] != nullptr) out[3]->setZero(d.rows(), d.cols());
  auto pick = [](CauchyMode m, double a1, double a2, const CauchyBasis& b) {
    switch (m) {
      case CauchyMode::Full: return a1 * b.odd + a2 * b.even;
      case CauchyMode::Odd: return b.odd;
      case CauchyMode::Even: return b.even;
    }
    return 0.0;
  };
  auto slot = [](Tensor& t, Index i, Index j) -> double& {
    return t(t.rows() == 1 ? 0 : i, t.cols() == 1 ? 0 : j);
  };
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      const double gij = g(i, j);
      const double a1 = bcast(l1, i, j);
      const double a2 = bcast(l2, i, j);
      const CauchyKernel k(x(i, j), bcast(d, i, j), kx + kd + 1);
      if (out[0] != nullptr) (*out[0])(i, j) = gij * pick(mode, a1, a2, k.basis(kx + 1, kd));
      if (out[1] != nullptr || out[2] != nullptr) {
        const CauchyBasis b = k.basis(kx, kd);
        if (out[1] != nullptr) slot(*out[1], i, j) += gij * b.odd;
        if (out[2] != nullptr) slot(*out[2], i, j) += gij * b.even;
      }
      if (out[3] != nullptr) slot(*out[3], i, j) += gij * pick(mode, a1, a2, k.basis(kx, kd + 1));
    }
  }
}

inline void apply_fn(Fn f, int order, const Tensor& x, Tensor& out) {
  out.resize(x.rows(), x.cols());
  if (order == 0 && f == Fn::Tanh) {
    out.array() = x.array().tanh();
    return;
  }
  if (order == 0 && f == Fn::Exp) {
    out.array() = x.array().exp();
    return;
  }
  if (fn_vanishes_from(f, order)) {
    out.setZero();
    return;
  }
  if ((f == Fn::Tanh || f == Fn::Sigmoid) && order <= xnet::detail::kMaxPolyOrder) {
    // Derivatives are polynomials in the function value.
    const auto& c = (f == Fn::Tanh ? xnet::detail::tanh_polynomials() : xnet::detail::sigmoid_polynomials())[
        static_cast<std::size_t>(order)];
    Tensor t(x.rows(), x.cols());
    if (f == Fn::Tanh) {
      t.array() = x.array().tanh();
    } else {
      t = x.unaryExpr([](double v) { return xnet::detail::logistic(v); });
    }
    out.setZero();
    for (auto it = c.rbegin(); it != c.rend(); ++it) out.array() = out.array() * t.array() + *it;
    return;
  }
  const double* src = x.data();
  double* dst = out.data();
  for (Index i = 0; i < x.size(); ++i) dst[i] = fn_derivative(f, order, src[i]);
}

inline void softmax_rows(const Tensor& a, Tensor& out) {
  out.resize(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    const double m = a.row(i).maxCoeff();
    out.row(i) = (a.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
}

}  // namespace detail

inline void Graph::compute(NodeId id) {
  Node& n = nodes_[id];
  auto in = [&](int p) -> const Tensor& { return nodes_[n.parents[static_cast<std::size_t>(p)]].value; };
  auto same_shape = [&](const Tensor& a, const Tensor& b) {
    if (shape_of(a) != shape_of(b)) {
      throw ShapeError(std::string(op_name(n.op)) + ": shape mismatch " + to_string(shape_of(a)) + " vs " +
                       to_string(shape_of(b)));
    }
  };
  switch (n.op) {
    case Op::Parameter:
    case Op::Input:
    case Op::Constant:
      return;
    case Op::ZerosLike: n.value.setZero(in(0).rows(), in(0).cols()); break;
    case Op::Add: same_shape(in(0), in(1)); n.value = in(0) + in(1); break;
    case Op::Sub: same_shape(in(0), in(1)); n.value = in(0) - in(1); break;
    case Op::Mul: same_shape(in(0), in(1)); n.value = in(0).cwiseProduct(in(1)); break;
    case Op::Div: same_shape(in(0), in(1)); n.value = in(0).cwiseQuotient(in(1)); break;
    case Op::Neg: n.value = -in(0); break;
    case Op::Scale: n.value = n.attr * in(0); break;
    case Op::Shift: n.value = in(0).array() + n.attr; break;
    case Op::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const bool ta = (n.k1 & 1) != 0;
      const bool tb = (n.k1 & 2) != 0;
      const Index inner_a = ta ? a.rows() : a.cols();
      const Index inner_b = tb ? b.cols() : b.rows();
      if (inner_a != inner_b) {
        throw ShapeError("matmul: inner dimensions " + to_string(shape_of(a)) + " x " + to_string(shape_of(b)));
      }
      if (!ta && !tb) n.value.noalias() = a * b;
      else if (ta && !tb) n.value.noalias() = a.transpose() * b;
      else if (!ta && tb) n.value.noalias() = a * b.transpose();
      else n.value.noalias() = a.transpose() * b.transpose();
      break;
    }
    case Op::Transpose: n.value = in(0).transpose(); break;
    case Op::SumAll: n.value = scalar_tensor(in(0).sum()); break;
    case Op::MeanAll: n.value = scalar_tensor(in(0).mean()); break;
    case Op::SpreadMean:
      if (in(0).size() != 1) throw ShapeError("spread_mean: expects a scalar");
      n.value = Tensor::Constant(in(1).rows(), in(1).cols(), in(0)(0, 0) / static_cast<double>(in(1).size()));
      break;
    case Op::RowSum: n.value = in(0).rowwise().sum(); break;
    case Op::ReduceLike: n.value = reduce_to(in(0), shape_of(in(1))); break;
    case Op::BroadcastLike: n.value = broadcast_to(in(0), shape_of(in(1))); break;
    case Op::Column:
      if (n.k1 < 0 || n.k1 >= in(0).cols()) throw ShapeError("column index out of range");
      n.value = in(0).col(n.k1);
      break;
    case Op::ScatterColumn:
      if (in(0).cols() != 1 || in(0).rows() != in(1).rows() || n.k1 < 0 || n.k1 >= in(1).cols()) {
        throw ShapeError("scatter_column: incompatible shapes");
      }
      n.value.setZero(in(1).rows(), in(1).cols());
      n.value.col(n.k1) = in(0);
      break;
    case Op::Unary: detail::apply_fn(n.fn, n.k1, in(0), n.value); break;
    case Op::Cauchy: detail::cauchy_apply(in(0), in(1), in(2), in(3), n.mode, n.k1, n.k2, n.value); break;
    case Op::LogSumExpRows: {
      const Tensor& a = in(0);
      n.value.resize(a.rows(), 1);
      for (Index i = 0; i < a.rows(); ++i) {
        const double m = a.row(i).maxCoeff();
        n.value(i, 0) = m + std::log((a.row(i).array() - m).exp().sum());
      }
      break;
    }
    case Op::SoftmaxRows: detail::softmax_rows(in(0), n.value); break;
  }
  check_finite(n.value, id);
}

// ---------------------------------------------------------------------------
// Numeric reverse sweep

inline void Graph::accumulate(NodeId id, Tensor contribution) {
  if (has_adjoint_[id]) {
    adjoint_[id] += contribution;
  } else {
    adjoint_[id] = std::move(contribution);
    has_adjoint_[id] = 1;
  }
}

inline GradientMap Graph::backward(Var output, std::span<const Var> leaves, const Tensor* seed) {
  const NodeId out = output.id;
  const Tensor& out_value = nodes_.at(out).value;
  const auto active = active_set(out, leaves);

  adjoint_.resize(nodes_.size());
  has_adjoint_.assign(nodes_.size(), 0);
  if (seed != nullptr) {
    if (shape_of(*seed) != shape_of(out_value)) throw ShapeError("backward: seed shape mismatch");
    adjoint_[out] = *seed;
  } else {
    if (out_value.size() != 1) throw ShapeError("backward: non-scalar output needs a seed");
    adjoint_[out] = scalar_tensor(1.0);
  }
  has_adjoint_[out] = 1;

  for (NodeId i = out + 1; i-- > 0;) {
    if (!active[i] || !has_adjoint_[i]) continue;
    check_finite(adjoint_[i], i, "gradient");
    if (!nodes_[i].is_leaf()) numeric_vjp(i, adjoint_[i], active);
  }

  GradientMap result;
  for (Var l : leaves) {
    result.leaves.push_back(l.id);
    const Tensor& lv = nodes_.at(l.id).value;
    if (l.id <= out && has_adjoint_[l.id]) {
      result.grads.push_back(adjoint_[l.id]);
    } else {
      result.grads.push_back(Tensor::Zero(lv.rows(), lv.cols()));
    }
  }
  // Release references to large intermediates.
  for (NodeId i = 0; i <= out; ++i)
    if (!nodes_[i].is_leaf()) has_adjoint_[i] = 0;
  return result;
}

inline void Graph::numeric_vjp(NodeId id, const Tensor& g, const std::vector<char>& active) {
  const Node& n = nodes_[id];
  auto pid = [&](int p) { return n.parents[static_cast<std::size_t>(p)]; };
  auto in = [&](int p) -> const Tensor& { return nodes_[pid(p)].value; };
  auto wants = [&](int p) { return active[pid(p)] != 0; };

  switch (n.op) {
    case Op::Parameter:
    case Op::Input:
    case Op::Constant:
    case Op::ZerosLike:
      return;
    case Op::Add:
      if (wants(0)) accumulate(pid(0), g);
      if (wants(1)) accumulate(pid(1), g);
      return;
    case Op::Sub:
      if (wants(0)) accumulate(pid(0), g);
      if (wants(1)) accumulate(pid(1), -g);
      return;
    case Op::Mul:
      if (wants(0)) accumulate(pid(0), g.cwiseProduct(in(1)));
      if (wants(1)) accumulate(pid(1), g.cwiseProduct(in(0)));
      return;
    case Op::Div:
      if (wants(0)) accumulate(pid(0), g.cwiseQuotient(in(1)));
      if (wants(1)) accumulate(pid(1), -g.cwiseProduct(n.value).cwiseQuotient(in(1)));
      return;
    case Op::Neg:
      if (wants(0)) accumulate(pid(0), -g);
      return;
    case Op::Scale:
      if (wants(0)) accumulate(pid(0), n.attr * g);
      return;
    case Op::Shift:
      if (wants(0)) accumulate(pid(0), g);
      return;
    case Op::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const bool ta = (n.k1 & 1) != 0;
      const bool tb = (n.k1 & 2) != 0;
      if (wants(0)) {
        Tensor da;
        if (!ta && !tb) da.noalias() = g * b.transpose();
        else if (!ta && tb) da.noalias() = g * b;
        else if (ta && !tb) da.noalias() = b * g.transpose();
        else da.noalias() = b.transpose() * g.transpose();
        accumulate(pid(0), std::move(da));
      }
      if (wants(1)) {
        Tensor db;
        if (!ta && !tb) db.noalias() = a.transpose() * g;
        else if (!ta && tb) db.noalias() = g.transpose() * a;
        else if (ta && !tb) db.noalias() = a * g;
        else db.noalias() = g.transpose() * a.transpose();
        accumulate(pid(1), std::move(db));
      }
      return;
    }
    case Op::Transpose:
      if (wants(0)) accumulate(pid(0), g.transpose());
      return;
    case Op::SumAll:
      if (wants(0)) accumulate(pid(0), Tensor::Constant(in(0).rows(), in(0).cols(), g(0, 0)));
      return;
    case Op::MeanAll:
      if (wants(0)) {
        accumulate(pid(0), Tensor::Constant(in(0).rows(), in(0).cols(), g(0, 0) / static_cast<double>(in(0).size())));
      }
      return;
    case Op::SpreadMean:
      if (wants(0)) accumulate(pid(0), scalar_tensor(g.mean()));
      return;
    case Op::RowSum:
      if (wants(0)) accumulate(pid(0), g.replicate(1, in(0).cols()));
      return;
    case Op::ReduceLike:
      if (wants(0)) accumulate(pid(0), broadcast_to(g, shape_of(in(0))));
      return;
    case Op::BroadcastLike:
      if (wants(0)) accumulate(pid(0), reduce_to(g, shape_of(in(0))));
      return;
    case Op::Column:
      if (wants(0)) {
        Tensor d = Tensor::Zero(in(0).rows(), in(0).cols());
        d.col(n.k1) = g;
        accumulate(pid(0), std::move(d));
      }
      return;
    case Op::ScatterColumn:
      if (wants(0)) accumulate(pid(0), g.col(n.k1));
      return;
    case Op::Unary:
      if (wants(0) && !fn_vanishes_from(n.fn, n.k1 + 1)) {
        Tensor d;
        detail::apply_fn(n.fn, n.k1 + 1, in(0), d);
        accumulate(pid(0), g.cwiseProduct(d));
      }
      return;
    case Op::Cauchy: {
      const bool full = n.mode == CauchyMode::Full;
      Tensor* slots[4] = {nullptr, nullptr, nullptr, nullptr};
      Tensor dx, dl1, dl2, dd;
      if (wants(0)) slots[0] = &dx;
      if (full && wants(1)) slots[1] = &dl1;
      if (full && wants(2)) slots[2] = &dl2;
      if (wants(3)) slots[3] = &dd;
      detail::cauchy_vjp(g, in(0), in(1), in(2), in(3), n.mode, n.k1, n.k2, slots);
      for (int p = 0; p < 4; ++p)
        if (slots[p] != nullptr) accumulate(pid(p), std::move(*slots[p]));
      return;
    }
    case Op::LogSumExpRows:
      if (wants(0)) {
        Tensor s;
        detail::softmax_rows(in(0), s);
        accumulate(pid(0), s.cwiseProduct(g.replicate(1, s.cols())));
      }
      return;
    case Op::SoftmaxRows:
      if (wants(0)) {
        const Tensor& s = n.value;
        Tensor gs = g.cwiseProduct(s);
        Tensor r = gs.rowwise().sum();
        accumulate(pid(0), gs - s.cwiseProduct(r.replicate(1, s.cols())));
      }
      return;
  }
}

// ---------------------------------------------------------------------------
// Recorded (differentiable) reverse sweep

inline std::vector<Var> Graph::gradient(Var output, std::span<const Var> wrt, Var* seed) {
  const NodeId out = output.id;
  const auto active = active_set(out, wrt);
  std::vector<Var> adj(out + 1);
  std::vector<char> has(out + 1, 0);
  if (seed != nullptr) {
    if (seed->shape() != output.shape()) throw ShapeError("gradient: seed shape mismatch");
    adj[out] = *seed;
  } else {
    if (output.value().size() != 1) throw ShapeError("gradient: non-scalar output needs a seed");
    adj[out] = constant(1.0);
  }
  has[out] = 1;

  for (NodeId i = out + 1; i-- > 0;) {
    if (!active[i] || !has[i] || nodes_[i].is_leaf()) continue;
    symbolic_vjp(i, adj[i], active, adj, has);
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (Var w : wrt) {
    if (w.id <= out && has[w.id]) result.push_back(adj[w.id]);
    else result.push_back(zeros_like(w));
  }
  return result;
}

inline void Graph::symbolic_vjp(NodeId id, Var g, const std::vector<char>& active, std::vector<Var>& adj,
                                std::vector<char>& has) {
  // Copy: recording new nodes may reallocate nodes_.
  const Node n = [&] {
    Node c;
    const Node& src = nodes_[id];
    c.op = src.op;
    c.parents = src.parents;
    c.arity = src.arity;
    c.attr = src.attr;
    c.k1 = src.k1;
    c.k2 = src.k2;
    c.fn = src.fn;
    c.mode = src.mode;
    return c;
  }();
  auto pv = [&](int p) { return Var{this, n.parents[static_cast<std::size_t>(p)]}; };
  auto self = Var{this, id};
  auto wants = [&](int p) { return active[n.parents[static_cast<std::size_t>(p)]] != 0; };
  auto acc = [&](int p, Var contribution) {
    const NodeId t = n.parents[static_cast<std::size_t>(p)];
    if (has[t]) {
      adj[t] = add(adj[t], contribution);
    } else {
      adj[t] = contribution;
      has[t] = 1;
    }
  };

  switch (n.op) {
    case Op::Parameter:
    case Op::Input:
    case Op::Constant:
    case Op::ZerosLike:
      return;
    case Op::Add:
      if (wants(0)) acc(0, g);
      if (wants(1)) acc(1, g);
      return;
    case Op::Sub:
      if (wants(0)) acc(0, g);
      if (wants(1)) acc(1, neg(g));
      return;
    case Op::Mul:
      if (wants(0)) acc(0, mul(g, pv(1)));
      if (wants(1)) acc(1, mul(g, pv(0)));
      return;
    case Op::Div:
      if (wants(0)) acc(0, div(g, pv(1)));
      if (wants(1)) acc(1, neg(div(mul(g, self), pv(1))));
      return;
    case Op::Neg:
      if (wants(0)) acc(0, neg(g));
      return;
    case Op::Scale:
      if (wants(0)) acc(0, scale(g, n.attr));
      return;
    case Op::Shift:
      if (wants(0)) acc(0, g);
      return;
    case Op::MatMul: {
      const bool ta = (n.k1 & 1) != 0;
      const bool tb = (n.k1 & 2) != 0;
      Var a = pv(0);
      Var b = pv(1);
      if (wants(0)) {
        if (!ta && !tb) acc(0, matmul(g, b, false, true));
        else if (!ta && tb) acc(0, matmul(g, b, false, false));
        else if (ta && !tb) acc(0, matmul(b, g, false, true));
        else acc(0, matmul(b, g, true, true));
      }
      if (wants(1)) {
        if (!ta && !tb) acc(1, matmul(a, g, true, false));
        else if (!ta && tb) acc(1, matmul(g, a, true, false));
        else if (ta && !tb) acc(1, matmul(a, g, false, false));
        else acc(1, matmul(g, a, true, true));
      }
      return;
    }
    case Op::Transpose:
      if (wants(0)) acc(0, transpose(g));
      return;
    case Op::SumAll:
    case Op::RowSum:
    case Op::ReduceLike:
      if (wants(0)) acc(0, broadcast_like(g, pv(0)));
      return;
    case Op::MeanAll:
      if (wants(0)) acc(0, spread_mean(g, pv(0)));
      return;
    case Op::SpreadMean:
      if (wants(0)) acc(0, mean(g));
      return;
    case Op::BroadcastLike:
      if (wants(0)) acc(0, reduce_like(g, pv(0)));
      return;
    case Op::Column:
      if (wants(0)) acc(0, scatter_column(g, pv(0), n.k1));
      return;
    case Op::ScatterColumn:
      if (wants(0)) acc(0, column(g, n.k1));
      return;
    case Op::Unary:
      if (wants(0) && !fn_vanishes_from(n.fn, n.k1 + 1)) acc(0, mul(g, unary(n.fn, pv(0), n.k1 + 1)));
      return;
    case Op::Cauchy: {
      Var x = pv(0), l1 = pv(1), l2 = pv(2), d = pv(3);
      if (wants(0)) acc(0, mul(g, cauchy(x, l1, l2, d, n.mode, n.k1 + 1, n.k2)));
      if (n.mode == CauchyMode::Full) {
        if (wants(1)) acc(1, reduce_like(mul(g, cauchy(x, l1, l2, d, CauchyMode::Odd, n.k1, n.k2)), l1));
        if (wants(2)) acc(2, reduce_like(mul(g, cauchy(x, l1, l2, d, CauchyMode::Even, n.k1, n.k2)), l2));
      }
      if (wants(3)) acc(3, reduce_like(mul(g, cauchy(x, l1, l2, d, n.mode, n.k1, n.k2 + 1)), d));
      return;
    }
    case Op::LogSumExpRows:
      if (wants(0)) acc(0, mul(broadcast_like(g, pv(0)), softmax_rows(pv(0))));
      return;
    case Op::SoftmaxRows:
      if (wants(0)) {
        Var gs = mul(g, self);
        acc(0, sub(gs, mul(self, broadcast_like(row_sum(gs), self))));
      }
      return;
  }
}

// ---------------------------------------------------------------------------
// Input derivatives

/// Gradient of sum(u) with respect to the input batch x. For networks that
/// act row by row this is the per-row input gradient du_i/dx_i.
inline Var input_gradient(Var u, Var x) {
  Graph& g = *u.graph;
  return g.gradient(g.sum(u), {x}).front();
}

/// d^order u / d x_coord^order per row, still differentiable in every leaf
/// that u depends on.
inline Var input_derivative(Var u, Var x, int coord, int order) {
  if (order != 1 && order != 2) throw std::invalid_argument("input_derivative: order must be 1 or 2");
  if (coord < 0 || coord >= x.shape().cols) throw std::invalid_argument("input_derivative: coordinate out of range");
  Graph& g = *u.graph;
  Var first = column(input_gradient(u, x), coord);
  if (order == 1) return first;
  return column(g.gradient(g.sum(first), {x}).front(), coord);
}

/// Second derivative along `coord` given an already-recorded input gradient.
inline Var second_input_derivative(Var grad, Var x, int coord) {
  Graph& g = *grad.graph;
  Var first = column(grad, coord);
  return column(g.gradient(g.sum(first), {x}).front(), coord);
}

// ---------------------------------------------------------------------------
// Finite-difference oracles

/// (f(x+h) - f(x-h)) / 2h
template <class F>
double central_difference(F&& f, double x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be positive");
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// (f(x+h) - 2 f(x) + f(x-h)) / h^2
template <class F>
double second_difference(F&& f, double x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be positive");
  return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
}

}  // namespace xnet::autograd
