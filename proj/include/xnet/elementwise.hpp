#pragma once

// Scalar kernels with closed-form derivatives of every order. The autograd
// graph stores "k-th derivative of f" as a node, so differentiating such a
// node just bumps k.

#include <array>
#include <cmath>
#include <utility>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace xnet {

enum class Fn : std::uint8_t { Tanh, Sigmoid, Sin, Exp, Relu, LeakyRelu };

inline constexpr double kLeakySlope = 0.01;

inline std::string_view fn_name(Fn f) {
  switch (f) {
    case Fn::Tanh: return "tanh";
    case Fn::Sigmoid: return "sigmoid";
    case Fn::Sin: return "sin";
    case Fn::Exp: return "exp";
    case Fn::Relu: return "relu";
    case Fn::LeakyRelu: return "leaky_relu";
  }
  return "?";
}

namespace detail {

// Coefficients of P_k with f^(k) = P_k(f), built from P_{k+1} = P_k' * q(f)
// where q(t) = 1 - t^2 for tanh and q(s) = s - s^2 for the logistic sigmoid.
inline std::vector<std::vector<double>> build_polynomials(std::array<double, 3> q, int max_order) {
  std::vector<std::vector<double>> out;
  out.push_back({0.0, 1.0});
  for (int k = 0; k < max_order; ++k) {
    const auto& p = out.back();
    std::vector<double> dp(p.size() > 1 ? p.size() - 1 : 1, 0.0);
    for (std::size_t i = 1; i < p.size(); ++i) dp[i - 1] = static_cast<double>(i) * p[i];
    std::vector<double> next(dp.size() + 2, 0.0);
    for (std::size_t i = 0; i < dp.size(); ++i)
      for (std::size_t j = 0; j < 3; ++j) next[i + j] += dp[i] * q[j];
    out.push_back(std::move(next));
  }
  return out;
}

inline constexpr int kMaxPolyOrder = 8;

inline const std::vector<std::vector<double>>& tanh_polynomials() {
  static const auto p = build_polynomials({1.0, 0.0, -1.0}, kMaxPolyOrder);
  return p;
}

inline const std::vector<std::vector<double>>& sigmoid_polynomials() {
  static const auto p = build_polynomials({0.0, 1.0, -1.0}, kMaxPolyOrder);
  return p;
}

inline double horner(const std::vector<double>& c, double t) {
  double acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * t + *it;
  return acc;
}

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

/// k-th derivative of f at x. ReLU-type kinks use the one-sided convention:
/// f'(0) = slope on the left, all higher derivatives are zero.
inline double fn_derivative(Fn f, int k, double x) {
  if (k < 0) throw std::invalid_argument("negative derivative order");
  switch (f) {
    case Fn::Tanh:
      if (k == 0) return std::tanh(x);
      if (k > detail::kMaxPolyOrder) throw std::invalid_argument("tanh derivative order too high");
      return detail::horner(detail::tanh_polynomials()[static_cast<std::size_t>(k)], std::tanh(x));
    case Fn::Sigmoid:
      if (k == 0) return detail::logistic(x);
      if (k > detail::kMaxPolyOrder) throw std::invalid_argument("sigmoid derivative order too high");
      return detail::horner(detail::sigmoid_polynomials()[static_cast<std::size_t>(k)],
                            detail::logistic(x));
    case Fn::Sin:
      switch (k % 4) {
        case 0: return std::sin(x);
        case 1: return std::cos(x);
        case 2: return -std::sin(x);
        default: return -std::cos(x);
      }
    case Fn::Exp:
      return std::exp(x);
    case Fn::Relu:
      if (k == 0) return x > 0.0 ? x : 0.0;
      if (k == 1) return x > 0.0 ? 1.0 : 0.0;
      return 0.0;
    case Fn::LeakyRelu:
      if (k == 0) return x > 0.0 ? x : kLeakySlope * x;
      if (k == 1) return x > 0.0 ? 1.0 : kLeakySlope;
      return 0.0;
  }
  return 0.0;
}

/// True when every derivative of order >= k is identically zero.
inline bool fn_vanishes_from(Fn f, int k) {
  return (f == Fn::Relu || f == Fn::LeakyRelu) && k >= 2;
}

/// Mixed partial derivatives of the two Cauchy basis terms
///   odd(x, d)  = x / (x^2 + d^2),   even(x, d) = 1 / (x^2 + d^2).
/// Both come from 1/(x - i d) = (x + i d)/(x^2 + d^2), whose derivatives are
///   d^k/dx^k d^j/dd^j (x - i d)^{-1} = (-1)^k i^j (k+j)! (x - i d)^{-(k+j+1)}.
struct CauchyBasis {
  double odd = 0.0;
  double even = 0.0;
};

/// Powers of 1/(x - i d) shared by every mixed partial up to `max_order`.
class CauchyKernel {
 public:
  static constexpr int kMaxOrder = 10;

  CauchyKernel(double x, double d, int max_order) : d_(d) {
    if (max_order < 0 || max_order > kMaxOrder) throw std::invalid_argument("Cauchy derivative order out of range");
    // 1/(x - i d) = (x + i d) / (x^2 + d^2), complex arithmetic spelled out.
    const double r2 = x * x + d * d;
    const double zr = x / r2;
    const double zi = d / r2;
    re_[0] = 1.0;
    im_[0] = 0.0;
    for (int n = 1; n <= max_order + 1; ++n) {
      const auto u = static_cast<std::size_t>(n);
      re_[u] = re_[u - 1] * zr - im_[u - 1] * zi;
      im_[u] = re_[u - 1] * zi + im_[u - 1] * zr;
    }
  }

  [[nodiscard]] CauchyBasis basis(int kx, int kd) const {
    CauchyBasis out;
    out.odd = mixed(kx, kd).first;
    if (kd == 0) {
      out.even = mixed(kx, 0).second / d_;
      return out;
    }
    // even = Im(1/z) / d, expanded with Leibniz in d.
    double binom = 1.0;
    double inv_d_pow = 1.0 / d_;
    double even = 0.0;
    for (int a = 0; a <= kd; ++a) {
      const double d_inv_deriv = ((a % 2 == 0) ? 1.0 : -1.0) * kFactorial[static_cast<std::size_t>(a)] * inv_d_pow;
      even += binom * d_inv_deriv * mixed(kx, kd - a).second;
      binom = binom * (kd - a) / (a + 1);
      inv_d_pow /= d_;
    }
    out.even = even;
    return out;
  }

 private:
  static constexpr std::array<double, 12> kFactorial{1,      1,       2,        6,         24,         120,
                                                     720,    5040,    40320,    362880,    3628800,    39916800};
  double d_;
  std::array<double, kMaxOrder + 2> re_{};
  std::array<double, kMaxOrder + 2> im_{};

  // (-1)^k i^j (k+j)! z^-(k+j+1) as (re, im).
  [[nodiscard]] std::pair<double, double> mixed(int k, int j) const {
    const double scale = ((k % 2 == 0) ? 1.0 : -1.0) * kFactorial[static_cast<std::size_t>(k + j)];
    const auto u = static_cast<std::size_t>(k + j + 1);
    const double re = scale * re_[u];
    const double im = scale * im_[u];
    switch (j % 4) {
      case 0: return {re, im};
      case 1: return {-im, re};
      case 2: return {-re, -im};
      default: return {im, -re};
    }
  }
};

namespace detail {

constexpr double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }
constexpr double binomial(int n, int k) { return factorial(n) / (factorial(k) * factorial(n - k)); }

}  // namespace detail

/// Compile-time-order variant of CauchyKernel for the hot loops; Top is the
/// largest kx + kd that will be requested.
template <int Top>
struct FixedCauchyKernel {
  double re[Top + 2];
  double im[Top + 2];
  double inv_d;

  FixedCauchyKernel(double x, double d, double inv_d_) : inv_d(inv_d_) {
    const double inv = 1.0 / (x * x + d * d);
    const double zr = x * inv;
    const double zi = d * inv;
    re[0] = 1.0;
    im[0] = 0.0;
    for (int n = 1; n <= Top + 1; ++n) {
      re[n] = re[n - 1] * zr - im[n - 1] * zi;
      im[n] = re[n - 1] * zi + im[n - 1] * zr;
    }
  }

  template <int K, int J>
  [[nodiscard]] double mixed_re() const {
    constexpr double scale = ((K % 2 == 0) ? 1.0 : -1.0) * detail::factorial(K + J);
    if constexpr (J % 4 == 0) return scale * re[K + J + 1];
    else if constexpr (J % 4 == 1) return -scale * im[K + J + 1];
    else if constexpr (J % 4 == 2) return -scale * re[K + J + 1];
    else return scale * im[K + J + 1];
  }
  template <int K, int J>
  [[nodiscard]] double mixed_im() const {
    constexpr double scale = ((K % 2 == 0) ? 1.0 : -1.0) * detail::factorial(K + J);
    if constexpr (J % 4 == 0) return scale * im[K + J + 1];
    else if constexpr (J % 4 == 1) return scale * re[K + J + 1];
    else if constexpr (J % 4 == 2) return -scale * im[K + J + 1];
    else return -scale * re[K + J + 1];
  }

  template <int K, int J>
  [[nodiscard]] double odd() const {
    return mixed_re<K, J>();
  }
  template <int K, int J>
  [[nodiscard]] double even() const {
    return even_terms<K, J>(std::make_integer_sequence<int, J + 1>{});
  }

 private:
  template <int K, int J, int... A>
  [[nodiscard]] double even_terms(std::integer_sequence<int, A...>) const {
    // Leibniz: d^J/dd^J [Im(1/z) * (1/d)]
    return (... + (detail::binomial(J, A) * ((A % 2 == 0) ? 1.0 : -1.0) * detail::factorial(A) *
                   inv_d_power<A + 1>() * mixed_im<K, J - A>()));
  }
  template <int P>
  [[nodiscard]] double inv_d_power() const {
    double r = inv_d;
    for (int i = 1; i < P; ++i) r *= inv_d;
    return r;
  }
};

inline CauchyBasis cauchy_basis(double x, double d, int kx, int kd) {
  return CauchyKernel(x, d, kx + kd).basis(kx, kd);
}

}  // namespace xnet
