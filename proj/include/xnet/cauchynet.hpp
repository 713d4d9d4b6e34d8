#pragma once

// Sums of complex Cauchy kernels
//   f(x) ~ Re( sum_k lambda_k / prod_i (xi_i^k - x_i) )
// fitted by linear least squares over the real and imaginary parts of lambda.

#include "xnet/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace xnet::cauchynet {

using Complex = std::complex<double>;

/// Floor applied to observer imaginary parts that would otherwise be <= 0.
inline constexpr double kImagFloor = 0.05;

/// One complex point per input dimension.
struct Observer {
  std::vector<Complex> xi;
};

struct FitDiagnostics {
  Index rows = 0;
  Index unknowns = 0;
  Index rank = 0;
  bool rank_deficient = false;  // min-norm SVD solution was used
  double residual_rms = 0.0;
};

struct KernelModel {
  std::vector<Observer> observers;
  std::vector<Complex> weights;
  int dim = 0;
  FitDiagnostics diagnostics;

  void validate() const {
    if (observers.size() != weights.size()) throw std::invalid_argument("KernelModel: observer/weight count mismatch");
    for (const auto& o : observers) {
      if (static_cast<int>(o.xi.size()) != dim) throw std::invalid_argument("KernelModel: observer dimension mismatch");
      for (Complex z : o.xi)
        if (!(z.imag() > 0.0)) throw std::invalid_argument("KernelModel: observer imaginary part must be positive");
    }
  }
};

namespace detail {

inline Complex ellipse_point(double center, double a, double b, double theta) {
  return {center + a * std::cos(theta), std::max(std::abs(b * std::sin(theta)), kImagFloor)};
}

inline Complex kernel_term(const Observer& o, const double* x) {
  Complex den(1.0, 0.0);
  for (std::size_t i = 0; i < o.xi.size(); ++i) den *= o.xi[i] - x[i];
  return 1.0 / den;
}

// 2/((xi1-x1)^3 (xi2-x2)) + 2/((xi1-x1)(xi2-x2)^3)
inline Complex laplacian_term(const Observer& o, const double* x) {
  const Complex u = 1.0 / (o.xi[0] - x[0]);
  const Complex v = 1.0 / (o.xi[1] - x[1]);
  return 2.0 * u * v * (u * u + v * v);
}

inline void check_points(const Tensor& x, int dim, const char* what) {
  if (x.cols() != dim) {
    throw ShapeError(std::string(what) + ": points have " + std::to_string(x.cols()) + " columns, model dimension " +
                     std::to_string(dim));
  }
}

// Columns [Re t_k, -Im t_k] so that A * [Re lambda; Im lambda] = Re(sum lambda t).
template <class Term>
Eigen::MatrixXd design(const Tensor& x, const std::vector<Observer>& obs, Term term) {
  const auto m = static_cast<Index>(obs.size());
  Eigen::MatrixXd a(x.rows(), 2 * m);
  for (Index j = 0; j < x.rows(); ++j) {
    const double* row = x.data() + j * x.cols();
    for (Index k = 0; k < m; ++k) {
      const Complex t = term(obs[static_cast<std::size_t>(k)], row);
      a(j, 2 * k) = t.real();
      a(j, 2 * k + 1) = -t.imag();
    }
  }
  return a;
}

inline KernelModel solve(Eigen::MatrixXd a, Eigen::VectorXd y, const std::vector<Observer>& obs, int dim,
                         double ridge) {
  if (ridge < 0.0) throw std::invalid_argument("ridge must be non-negative");
  if (a.rows() == 0) throw std::invalid_argument("least squares needs at least one sample");
  const Index rows = a.rows();
  const Eigen::MatrixXd a_data = a;
  const Eigen::VectorXd y_data = y;
  if (ridge > 0.0) {
    const Index n = a.cols();
    a.conservativeResize(rows + n, Eigen::NoChange);
    a.bottomRows(n) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(n, n);
    y.conservativeResize(rows + n);
    y.tail(n).setZero();
  }
  KernelModel model;
  model.observers = obs;
  model.dim = dim;
  Eigen::VectorXd coef;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() == a.cols()) {
    coef = qr.solve(y);
    model.diagnostics.rank = qr.rank();
  } else {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(a.rows(), a.cols())));
    coef = svd.solve(y);
    model.diagnostics.rank = svd.rank();
    model.diagnostics.rank_deficient = true;
  }
  if (!coef.allFinite()) throw NonFiniteError("kernel least squares produced non-finite weights");
  model.weights.resize(obs.size());
  for (std::size_t k = 0; k < obs.size(); ++k) model.weights[k] = {coef(2 * k), coef(2 * k + 1)};
  model.diagnostics.rows = rows;
  model.diagnostics.unknowns = a.cols();
  model.diagnostics.residual_rms = std::sqrt((a_data * coef - y_data).squaredNorm() / static_cast<double>(rows));
  return model;
}

}  // namespace detail

/// m observers on the ellipse center + a cos(t) + i b sin(t), imaginary parts
/// folded to max(|b sin t|, kImagFloor). In 2-d, m must be a square s*s and
/// the observers are all pairs of s angles per coordinate.
inline std::vector<Observer> place_observers_ellipse(int m, double a, double b, double center, int dim) {
  if (m < 1) throw std::invalid_argument("place_observers_ellipse: m must be >= 1");
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("place_observers_ellipse: semi-axes must be positive");
  std::vector<Observer> out;
  if (dim == 1) {
    for (int k = 0; k < m; ++k) {
      const double t = 2.0 * std::numbers::pi * k / m;
      out.push_back({{detail::ellipse_point(center, a, b, t)}});
    }
    return out;
  }
  if (dim == 2) {
    const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(m))));
    if (s * s != m) throw std::invalid_argument("place_observers_ellipse: m=" + std::to_string(m) + " is not a square");
    for (int p = 0; p < s; ++p) {
      for (int q = 0; q < s; ++q) {
        const double tp = 2.0 * std::numbers::pi * p / s;
        const double tq = 2.0 * std::numbers::pi * q / s;
        out.push_back({{detail::ellipse_point(center, a, b, tp), detail::ellipse_point(center, a, b, tq)}});
      }
    }
    return out;
  }
  throw std::invalid_argument("place_observers_ellipse: dim must be 1 or 2");
}

inline double kernel_eval(const KernelModel& model, const double* x) {
  Complex s(0.0, 0.0);
  for (std::size_t k = 0; k < model.observers.size(); ++k) s += model.weights[k] * detail::kernel_term(model.observers[k], x);
  return s.real();
}

inline double kernel_eval(const KernelModel& model, std::initializer_list<double> x) {
  if (static_cast<int>(x.size()) != model.dim) throw ShapeError("kernel_eval: point dimension mismatch");
  return kernel_eval(model, x.begin());
}

/// Row-wise evaluation; returns an n x 1 tensor.
inline Tensor kernel_eval(const KernelModel& model, const Tensor& x) {
  detail::check_points(x, model.dim, "kernel_eval");
  Tensor out(x.rows(), 1);
  for (Index j = 0; j < x.rows(); ++j) out(j, 0) = kernel_eval(model, x.data() + j * x.cols());
  return out;
}

inline double kernel_laplacian(const KernelModel& model, const double* x) {
  if (model.dim != 2) throw std::invalid_argument("kernel_laplacian: model must be 2-d");
  Complex s(0.0, 0.0);
  for (std::size_t k = 0; k < model.observers.size(); ++k)
    s += model.weights[k] * detail::laplacian_term(model.observers[k], x);
  return s.real();
}

inline double kernel_laplacian(const KernelModel& model, std::initializer_list<double> x) {
  if (x.size() != 2) throw ShapeError("kernel_laplacian: point dimension mismatch");
  return kernel_laplacian(model, x.begin());
}

/// Least-squares fit of g at the sample points x (n x dim). ridge adds
/// ridge * |lambda|^2 to the objective.
inline KernelModel fit_least_squares(const Tensor& x, const Tensor& g, const std::vector<Observer>& observers,
                                     double ridge = 0.0) {
  if (observers.empty()) throw std::invalid_argument("fit_least_squares: no observers");
  const int dim = static_cast<int>(observers.front().xi.size());
  detail::check_points(x, dim, "fit_least_squares");
  if (g.size() != x.rows()) throw ShapeError("fit_least_squares: one target per sample expected");
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
  auto m = detail::solve(detail::design(x, observers, detail::kernel_term), std::move(y), observers, dim, ridge);
  m.validate();
  return m;
}

/// Fits Laplacian(u) = f on the interior and u = boundary_values on the
/// boundary, both as least-squares rows of one system.
inline KernelModel poisson_lsq_solve(const Tensor& interior, const Tensor& f, const Tensor& boundary,
                                     const Tensor& boundary_values, const std::vector<Observer>& observers,
                                     double ridge = 0.0) {
  if (interior.rows() == 0 || boundary.rows() == 0) throw std::invalid_argument("poisson_lsq_solve: empty point set");
  detail::check_points(interior, 2, "poisson_lsq_solve");
  detail::check_points(boundary, 2, "poisson_lsq_solve");
  if (f.size() != interior.rows() || boundary_values.size() != boundary.rows()) {
    throw ShapeError("poisson_lsq_solve: one value per point expected");
  }
  const Eigen::MatrixXd a_in = detail::design(interior, observers, detail::laplacian_term);
  const Eigen::MatrixXd a_bd = detail::design(boundary, observers, detail::kernel_term);
  Eigen::MatrixXd a(a_in.rows() + a_bd.rows(), a_in.cols());
  a << a_in, a_bd;
  Eigen::VectorXd y(a.rows());
  y << Eigen::Map<const Eigen::VectorXd>(f.data(), f.size()),
      Eigen::Map<const Eigen::VectorXd>(boundary_values.data(), boundary_values.size());
  auto m = detail::solve(std::move(a), std::move(y), observers, 2, ridge);
  m.validate();
  return m;
}

/// Expresses each monomial x1^(k-i) x2^i of degree k through the k+1 powers
/// (x1 + j x2)^k, j = 0..k.
struct MonomialDecomposition {
  int k = 0;
  Eigen::MatrixXd matrix;   // M(j, i) = C(k, i) j^i
  // Inverse of M, kept in extended precision: monomial i = sum_j weights(i, j) (x1 + j x2)^k
  Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> weights;
  double condition = 0.0;
  double determinant = 0.0;

  /// Monomial i evaluated through the power combination.
  [[nodiscard]] double reconstruct(int i, double x1, double x2) const {
    long double s = 0.0L;
    for (int j = 0; j <= k; ++j) {
      const long double base = static_cast<long double>(x1) + static_cast<long double>(j) * x2;
      long double p = 1.0L;
      for (int e = 0; e < k; ++e) p *= base;
      s += weights(i, j) * p;
    }
    return static_cast<double>(s);
  }
  /// Largest |reconstruction - direct| over random points in [-1, 1]^2.
  [[nodiscard]] double max_reconstruction_error(int points, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
      const double x1 = u(rng), x2 = u(rng);
      for (int i = 0; i <= k; ++i) {
        const double direct = std::pow(x1, k - i) * std::pow(x2, i);
        worst = std::max(worst, std::abs(reconstruct(i, x1, x2) - direct));
      }
    }
    return worst;
  }
};

inline constexpr double kMaxMonomialCondition = 1e12;

inline MonomialDecomposition monomial_decomposition(int k) {
  if (k < 1 || k > 12) throw std::invalid_argument("monomial_decomposition: k must be in 1..12");
  MonomialDecomposition out;
  out.k = k;
  out.matrix.resize(k + 1, k + 1);
  for (int j = 0; j <= k; ++j) {
    double binom = 1.0;
    for (int i = 0; i <= k; ++i) {
      out.matrix(j, i) = binom * std::pow(static_cast<double>(j), i);
      binom = binom * (k - i) / (i + 1);
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.matrix);
  const auto& sv = svd.singularValues();
  out.condition = sv(0) / sv(sv.size() - 1);
  if (!(out.condition <= kMaxMonomialCondition)) {
    throw std::runtime_error("monomial_decomposition: matrix numerically singular at k=" + std::to_string(k) +
                             " (condition " + std::to_string(out.condition) + ")");
  }
  using MatrixL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  Eigen::FullPivLU<MatrixL> lu(out.matrix.cast<long double>());
  out.determinant = static_cast<double>(lu.determinant());
  out.weights = lu.inverse();
  return out;
}

/// Least-squares slope of log(err) against log(m).
inline double loglog_slope(const std::vector<double>& m, const std::vector<double>& err) {
  if (m.size() != err.size() || m.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 matched points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!(m[i] > 0.0) || !(err[i] > 0.0)) throw std::invalid_argument("loglog_slope: values must be positive");
    const double lx = std::log(m[i]), ly = std::log(err[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// CSV: one row per observer, xi<i>_re, xi<i>_im for each dimension, then
// lambda_re, lambda_im.
inline void write_model_csv(std::ostream& os, const KernelModel& model) {
  for (int i = 0; i < model.dim; ++i) os << "xi" << i + 1 << "_re,xi" << i + 1 << "_im,";
  os << "lambda_re,lambda_im\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t k = 0; k < model.observers.size(); ++k) {
    for (Complex z : model.observers[k].xi) os << z.real() << ',' << z.imag() << ',';
    os << model.weights[k].real() << ',' << model.weights[k].imag() << '\n';
  }
}

inline KernelModel read_model_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("kernel model CSV: missing header");
  int cols = 1;
  for (char c : line) cols += c == ',';
  if (cols < 4 || cols % 2 != 0) throw std::runtime_error("kernel model CSV: bad header '" + line + "'");
  KernelModel model;
  model.dim = cols / 2 - 1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (static_cast<int>(v.size()) != cols) throw std::runtime_error("kernel model CSV: bad row '" + line + "'");
    Observer o;
    for (int i = 0; i < model.dim; ++i) o.xi.emplace_back(v[2 * i], v[2 * i + 1]);
    model.observers.push_back(std::move(o));
    model.weights.emplace_back(v[cols - 2], v[cols - 1]);
  }
  model.validate();
  return model;
}

}  // namespace xnet::cauchynet
