#pragma once

#include "xnet/autograd.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace xnet::nn {

using autograd::Graph;

enum class Activation : std::uint8_t { Identity, Relu, Sigmoid, Tanh, Swish, Gelu, LeakyRelu, Cauchy };

inline constexpr std::array<Activation, 7> kBenchmarkActivations{
    Activation::Relu, Activation::Sigmoid, Activation::Tanh,  Activation::Swish,
    Activation::Gelu, Activation::LeakyRelu, Activation::Cauchy};

inline std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
    case Activation::Swish: return "swish";
    case Activation::Gelu: return "gelu";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Cauchy: return "cauchy";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  for (Activation a : {Activation::Identity, Activation::Relu, Activation::Sigmoid, Activation::Tanh,
                       Activation::Swish, Activation::Gelu, Activation::LeakyRelu, Activation::Cauchy}) {
    if (activation_name(a) == s) return a;
  }
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

/// Smallest admissible |d|; keeps the Cauchy denominator off its pole.
inline constexpr double kCauchyDFloor = 1e-3;

struct CauchyParams {
  double lambda1 = 0.01;
  double lambda2 = 0.01;
  double d = 1.0;
};

inline double clamp_d(double d, int* clamp_events = nullptr) {
  if (std::abs(d) >= kCauchyDFloor) return d;
  if (clamp_events != nullptr) ++*clamp_events;
  return d < 0.0 ? -kCauchyDFloor : kCauchyDFloor;
}

/// lambda1 * x / (x^2 + d^2) + lambda2 / (x^2 + d^2)
inline double cauchy_forward(double x, CauchyParams p, int* clamp_events = nullptr) {
  if (!std::isfinite(p.lambda1) || !std::isfinite(p.lambda2) || !std::isfinite(p.d)) {
    throw NonFiniteError("cauchy_forward: non-finite parameter");
  }
  const double d = clamp_d(p.d, clamp_events);
  const double denom = x * x + d * d;
  return p.lambda1 * x / denom + p.lambda2 / denom;
}

inline double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

/// Scalar reference for every activation except Cauchy (which needs parameters).
inline double standard_activation(Activation kind, double x) {
  switch (kind) {
    case Activation::Identity: return x;
    case Activation::Relu: return fn_derivative(Fn::Relu, 0, x);
    case Activation::Sigmoid: return fn_derivative(Fn::Sigmoid, 0, x);
    case Activation::Tanh: return std::tanh(x);
    case Activation::Swish: return x * fn_derivative(Fn::Sigmoid, 0, x);
    case Activation::Gelu: return gelu(x);
    case Activation::LeakyRelu: return fn_derivative(Fn::LeakyRelu, 0, x);
    case Activation::Cauchy: return cauchy_forward(x, CauchyParams{});
  }
  return x;
}

struct DenseLayer {
  Tensor weights;  // out x in
  Tensor bias;     // 1 x out
  Activation activation = Activation::Identity;
  // Per-neuron Cauchy triples, 1 x out each; empty for other activations.
  Tensor lambda1;
  Tensor lambda2;
  Tensor d;

  [[nodiscard]] Index in_dim() const { return weights.cols(); }
  [[nodiscard]] Index out_dim() const { return weights.rows(); }
  [[nodiscard]] bool is_cauchy() const { return activation == Activation::Cauchy; }
  [[nodiscard]] CauchyParams cauchy_params(Index neuron) const {
    return {lambda1(0, neuron), lambda2(0, neuron), d(0, neuron)};
  }
};

class MLP {
 public:
  MLP() = default;
  explicit MLP(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

  [[nodiscard]] const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  [[nodiscard]] Index in_dim() const { return layers_.front().in_dim(); }
  [[nodiscard]] Index out_dim() const { return layers_.back().out_dim(); }

  /// Trainable tensors in registration order: W, b, then lambda1, lambda2, d
  /// for Cauchy layers.
  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (auto& l : layers_) {
      out.push_back(&l.weights);
      out.push_back(&l.bias);
      if (l.is_cauchy()) {
        out.push_back(&l.lambda1);
        out.push_back(&l.lambda2);
        out.push_back(&l.d);
      }
    }
    return out;
  }
  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out;
    for (Tensor* t : const_cast<MLP*>(this)->parameters()) out.push_back(t);
    return out;
  }

  [[nodiscard]] Index parameter_count() const {
    Index n = 0;
    for (const Tensor* t : parameters()) n += t->size();
    return n;
  }

  /// Projects every Cauchy d back to |d| >= kCauchyDFloor. Returns the number
  /// of entries moved; the running total is kept in clamp_events().
  int clamp_cauchy() {
    int events = 0;
    for (auto& l : layers_) {
      if (!l.is_cauchy()) continue;
      for (Index j = 0; j < l.d.size(); ++j) l.d.data()[j] = clamp_d(l.d.data()[j], &events);
    }
    clamp_events_ += events;
    return events;
  }
  [[nodiscard]] long clamp_events() const { return clamp_events_; }

  void validate() const {
    if (layers_.empty()) throw std::invalid_argument("MLP needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.bias.rows() != 1 || l.bias.cols() != l.out_dim()) throw ShapeError("bias shape does not match layer");
      if (i > 0 && layers_[i - 1].out_dim() != l.in_dim()) {
        throw ShapeError("layer " + std::to_string(i) + " input does not match previous output");
      }
      if (l.is_cauchy()) {
        for (const Tensor* t : {&l.lambda1, &l.lambda2, &l.d}) {
          if (t->rows() != 1 || t->cols() != l.out_dim()) throw ShapeError("Cauchy parameter shape mismatch");
        }
      }
    }
  }

 private:
  std::vector<DenseLayer> layers_;
  long clamp_events_ = 0;
};

/// Hidden layers use `hidden`, the last layer is linear. Weights are
/// Glorot-uniform, biases zero, Cauchy triples (0.01, 0.01, 1).
inline MLP init_mlp(const std::vector<Index>& dims, Activation hidden, std::uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("init_mlp: need at least input and output dims");
  for (Index n : dims)
    if (n <= 0) throw std::invalid_argument("init_mlp: dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const Index in = dims[i];
    const Index out = dims[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    DenseLayer l;
    l.weights.resize(out, in);
    for (Index k = 0; k < l.weights.size(); ++k) l.weights.data()[k] = u(rng);
    l.bias = Tensor::Zero(1, out);
    l.activation = (i + 2 == dims.size()) ? Activation::Identity : hidden;
    if (l.is_cauchy()) {
      const CauchyParams init;
      l.lambda1 = Tensor::Constant(1, out, init.lambda1);
      l.lambda2 = Tensor::Constant(1, out, init.lambda2);
      l.d = Tensor::Constant(1, out, init.d);
    }
    layers.push_back(std::move(l));
  }
  return MLP(std::move(layers));
}

/// Applies an activation on the graph. Cauchy needs its three parameter rows.
inline autograd::Var apply_activation(Activation kind, autograd::Var x, const autograd::Var* cauchy = nullptr) {
  using namespace autograd;
  Graph& g = *x.graph;
  switch (kind) {
    case Activation::Identity: return x;
    case Activation::Relu: return relu(x);
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Tanh: return tanh(x);
    case Activation::Swish: return x * sigmoid(x);
    case Activation::Gelu: {
      constexpr double c = 0.7978845608028654;
      Var inner = (x + 0.044715 * (x * x * x)) * c;
      return 0.5 * (x * (tanh(inner) + 1.0));
    }
    case Activation::LeakyRelu: return leaky_relu(x);
    case Activation::Cauchy:
      if (cauchy == nullptr) throw std::invalid_argument("Cauchy activation needs parameters");
      return g.cauchy(x, cauchy[0], cauchy[1], cauchy[2]);
  }
  return x;
}

/// An MLP recorded on a graph: its output node and the parameter leaves in
/// MLP::parameters() order.
struct BoundMlp {
  autograd::Var output;
  std::vector<autograd::Var> params;
};

/// Parameter leaves for `net` in MLP::parameters() order.
inline std::vector<autograd::Var> bind_parameters(autograd::Graph& g, const MLP& net) {
  std::vector<autograd::Var> out;
  for (const Tensor* t : net.parameters()) out.push_back(g.parameter(*t));
  return out;
}

/// Records net(batch) using existing parameter leaves, so several batches
/// can share one set of parameters.
inline autograd::Var mlp_apply(const MLP& net, std::span<const autograd::Var> params, autograd::Var batch) {
  using autograd::Var;
  if (batch.shape().cols != net.in_dim()) {
    throw ShapeError("mlp_forward: batch width " + std::to_string(batch.shape().cols) + " but network expects " +
                     std::to_string(net.in_dim()));
  }
  Graph& g = *batch.graph;
  std::size_t next = 0;
  auto take = [&] {
    if (next >= params.size()) throw std::invalid_argument("mlp_apply: too few parameter leaves");
    return params[next++];
  };
  Var h = batch;
  for (const auto& l : net.layers()) {
    Var w = take();
    Var b = take();
    Var z = g.matmul(h, w, false, true) + b;
    if (l.is_cauchy()) {
      Var c[3] = {take(), take(), take()};
      h = apply_activation(l.activation, z, c);
    } else {
      h = apply_activation(l.activation, z);
    }
  }
  if (next != params.size()) throw std::invalid_argument("mlp_apply: too many parameter leaves");
  return h;
}

inline BoundMlp mlp_forward(autograd::Graph& g, const MLP& net, autograd::Var batch) {
  if (batch.shape().cols != net.in_dim()) {
    throw ShapeError("mlp_forward: batch width " + std::to_string(batch.shape().cols) + " but network expects " +
                     std::to_string(net.in_dim()));
  }
  BoundMlp out;
  out.params = bind_parameters(g, net);
  out.output = mlp_apply(net, out.params, batch);
  return out;
}

/// Copies the network's current parameter values into the graph leaves.
inline void sync_parameters(autograd::Graph& g, std::span<const autograd::Var> leaves, const MLP& net) {
  const auto params = net.parameters();
  if (params.size() != leaves.size()) throw std::invalid_argument("sync_parameters: layout mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) g.bind(leaves[i], *params[i]);
}
inline void sync_parameters(autograd::Graph& g, const BoundMlp& bound, const MLP& net) {
  sync_parameters(g, bound.params, net);
}

/// Plain forward pass without recording gradients.
inline Tensor predict(const MLP& net, const Tensor& batch) {
  if (batch.cols() != net.in_dim()) throw ShapeError("predict: batch width mismatch");
  Tensor h = batch;
  for (const auto& l : net.layers()) {
    Tensor z = h * l.weights.transpose();
    z.rowwise() += l.bias.row(0);
    switch (l.activation) {
      case Activation::Identity: break;
      case Activation::Cauchy: {
        if (!l.lambda1.allFinite() || !l.lambda2.allFinite() || !l.d.allFinite()) {
          throw NonFiniteError("predict: non-finite Cauchy parameter");
        }
        const Tensor d = l.d.unaryExpr([](double v) { return clamp_d(v); });
        Tensor out;
        autograd::detail::cauchy_apply(z, l.lambda1, l.lambda2, d, autograd::CauchyMode::Full, 0, 0, out);
        z = std::move(out);
        break;
      }
      default:
        z = z.unaryExpr([&](double v) { return standard_activation(l.activation, v); });
    }
    h = std::move(z);
  }
  if (!h.allFinite()) throw NonFiniteError("predict: non-finite output");
  return h;
}

}  // namespace xnet::nn
