#pragma once

#include "xnet/tensor.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace xnet::optim {

/// Piecewise-constant learning rate: the rate of the last threshold <= epoch.
class LrSchedule {
 public:
  LrSchedule() = default;
  explicit LrSchedule(std::vector<std::pair<int, double>> phases) : phases_(std::move(phases)) {
    for (std::size_t i = 0; i < phases_.size(); ++i) {
      if (!(phases_[i].second > 0.0)) throw std::invalid_argument("learning rates must be positive");
      if (i > 0 && phases_[i].first <= phases_[i - 1].first) {
        throw std::invalid_argument("schedule thresholds must be strictly increasing");
      }
    }
  }
  static LrSchedule constant(double rate) { return LrSchedule({{0, rate}}); }

  [[nodiscard]] double rate(int epoch) const {
    if (phases_.empty()) throw std::logic_error("empty learning-rate schedule");
    if (epoch < 0) throw std::invalid_argument("negative epoch");
    double r = phases_.front().second;
    for (const auto& [threshold, rate] : phases_) {
      if (threshold <= epoch) r = rate;
      else break;
    }
    return r;
  }
  [[nodiscard]] const std::vector<std::pair<int, double>>& phases() const { return phases_; }
  [[nodiscard]] bool empty() const { return phases_.empty(); }

 private:
  std::vector<std::pair<int, double>> phases_;
};

namespace detail {

inline void check_step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("optimizer: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (shape_of(*params[i]) != shape_of(grads[i])) {
      throw ShapeError("optimizer: gradient " + std::to_string(i) + " has shape " + to_string(shape_of(grads[i])));
    }
    if (!grads[i].allFinite()) throw NonFiniteError("optimizer: non-finite gradient " + std::to_string(i));
  }
}

}  // namespace detail

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-3;
};

class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    state_.lr = lr;
    state_.beta1 = beta1;
    state_.beta2 = beta2;
    state_.eps = eps;
  }

  void set_lr(double lr) { state_.lr = lr; }
  [[nodiscard]] const AdamState& state() const { return state_; }

  /// Updates params in place; params and grads are matched by position.
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    detail::check_step(params, grads);
    if (state_.m.empty()) {
      for (Tensor* p : params) {
        state_.m.push_back(Tensor::Zero(p->rows(), p->cols()));
        state_.v.push_back(Tensor::Zero(p->rows(), p->cols()));
      }
    } else if (state_.m.size() != params.size()) {
      throw std::invalid_argument("Adam: parameter set changed between steps");
    }
    ++state_.t;
    const double b1 = state_.beta1;
    const double b2 = state_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto m = state_.m[i].array();
      auto v = state_.v[i].array();
      const auto g = grads[i].array();
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.square();
      params[i]->array() -= state_.lr * (m / c1) / ((v / c2).sqrt() + state_.eps);
    }
  }
  void step(std::vector<Tensor*> params, const std::vector<Tensor>& grads) {
    step(std::span<Tensor* const>(params), std::span<const Tensor>(grads));
  }

 private:
  AdamState state_;
};

class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void set_lr(double lr) { lr_ = lr; }
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    detail::check_step(params, grads);
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] -= lr_ * grads[i];
  }
  void step(std::vector<Tensor*> params, const std::vector<Tensor>& grads) {
    step(std::span<Tensor* const>(params), std::span<const Tensor>(grads));
  }

 private:
  double lr_;
};

}  // namespace xnet::optim
