#pragma once

// PINN residuals and training for the heat, Poisson and Burgers problems, and
// the deep BSDE solver for the Allen-Cahn equation.

#include "xnet/autograd.hpp"
#include "xnet/nn.hpp"
#include "xnet/optim.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace xnet::pde {

using autograd::Graph;
using autograd::Var;

enum class ResidualKind : std::uint8_t { Heat, Poisson, Burgers };

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  [[nodiscard]] double width() const { return hi - lo; }
};

/// Two-coordinate problem. For Heat and Burgers the second coordinate is time
/// and `initial` gives u at y.lo; `boundary` is the Dirichlet data on the
/// spatial boundary (all four edges for Poisson).
struct PDEProblem {
  std::string name;
  ResidualKind kind = ResidualKind::Poisson;
  Interval x;
  Interval y;
  std::function<double(double, double)> source;
  std::function<double(double, double)> boundary;
  std::function<double(double)> initial;
  std::function<double(double, double)> exact;
  double nu = 0.0;

  [[nodiscard]] bool time_dependent() const { return kind != ResidualKind::Poisson; }

  void validate() const {
    if (!(x.lo < x.hi) || !(y.lo < y.hi)) throw std::invalid_argument(name + ": domain bounds must be ordered");
    if (!boundary) throw std::invalid_argument(name + ": boundary condition missing");
    if (time_dependent() && !initial) throw std::invalid_argument(name + ": initial condition missing");
    if (kind == ResidualKind::Poisson && !source) throw std::invalid_argument(name + ": source term missing");
    if (kind == ResidualKind::Burgers && !(nu > 0.0)) throw std::invalid_argument(name + ": viscosity must be positive");
  }
};

/// u_x - 2 u_t - u = 0 on [0,2] x [0,1], u(x,0) = 6 exp(-3x), u(0,t) = u(2,t) = 0.
inline PDEProblem heat_problem() {
  PDEProblem p;
  p.name = "heat";
  p.kind = ResidualKind::Heat;
  p.x = {0.0, 2.0};
  p.y = {0.0, 1.0};
  p.boundary = [](double, double) { return 0.0; };
  p.initial = [](double x) { return 6.0 * std::exp(-3.0 * x); };
  // Solves the equation and the initial condition (not the side conditions).
  p.exact = [](double x, double t) { return 6.0 * std::exp(-3.0 * x - 2.0 * t); };
  return p;
}

/// Laplacian(u) = -8 pi^2 sin(2 pi x) sin(2 pi y) on the unit square, u = 0 on the boundary.
inline PDEProblem poisson_problem() {
  constexpr double tau = 2.0 * std::numbers::pi;
  PDEProblem p;
  p.name = "poisson";
  p.kind = ResidualKind::Poisson;
  p.source = [](double x, double y) { return -2.0 * tau * tau * std::sin(tau * x) * std::sin(tau * y); };
  p.boundary = [](double, double) { return 0.0; };
  p.exact = [](double x, double y) { return std::sin(tau * x) * std::sin(tau * y); };
  return p;
}

/// u_t + u u_x = nu u_xx on [-1,1] x [0,1], u(x,0) = -sin(pi x), u(+-1,t) = 0.
inline PDEProblem burgers_problem(double nu = 0.01 / std::numbers::pi) {
  PDEProblem p;
  p.name = "burgers";
  p.kind = ResidualKind::Burgers;
  p.x = {-1.0, 1.0};
  p.y = {0.0, 1.0};
  p.nu = nu;
  p.boundary = [](double, double) { return 0.0; };
  p.initial = [](double x) { return -std::sin(std::numbers::pi * x); };
  return p;
}

struct CollocationSet {
  Tensor interior;  // n x 2
  Tensor boundary;
  Tensor initial;
  Tensor source;  // n_interior x 1, Poisson only
  Tensor boundary_values;
  Tensor initial_values;
  std::uint64_t seed = 0;
};

/// Uniform interior points; boundary points pick a boundary component
/// uniformly, then a uniform position on it; initial points lie on y = y.lo.
inline CollocationSet sample_collocation(const PDEProblem& problem, Index n_interior, Index n_boundary,
                                         Index n_initial, std::uint64_t seed) {
  problem.validate();
  if (n_interior < 0 || n_boundary < 0 || n_initial < 0) throw std::invalid_argument("collocation counts must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(problem.x.lo, problem.x.hi);
  std::uniform_real_distribution<double> uy(problem.y.lo, problem.y.hi);
  CollocationSet c;
  c.seed = seed;
  c.interior.resize(n_interior, 2);
  for (Index i = 0; i < n_interior; ++i) {
    const double a = ux(rng);
    const double b = uy(rng);
    c.interior.row(i) << a, b;
  }
  const int sides = problem.time_dependent() ? 2 : 4;
  std::uniform_int_distribution<int> side(0, sides - 1);
  c.boundary.resize(n_boundary, 2);
  for (Index i = 0; i < n_boundary; ++i) {
    const int s = side(rng);
    switch (s) {
      case 0: c.boundary.row(i) << problem.x.lo, uy(rng); break;
      case 1: c.boundary.row(i) << problem.x.hi, uy(rng); break;
      case 2: c.boundary.row(i) << ux(rng), problem.y.lo; break;
      default: c.boundary.row(i) << ux(rng), problem.y.hi; break;
    }
  }
  c.initial.resize(problem.time_dependent() ? n_initial : 0, 2);
  for (Index i = 0; i < c.initial.rows(); ++i) c.initial.row(i) << ux(rng), problem.y.lo;

  auto eval2 = [](const Tensor& pts, const std::function<double(double, double)>& f) {
    Tensor v(pts.rows(), 1);
    for (Index i = 0; i < pts.rows(); ++i) v(i, 0) = f(pts(i, 0), pts(i, 1));
    return v;
  };
  c.boundary_values = eval2(c.boundary, problem.boundary);
  if (problem.source) c.source = eval2(c.interior, problem.source);
  c.initial_values.resize(c.initial.rows(), 1);
  for (Index i = 0; i < c.initial.rows(); ++i) c.initial_values(i, 0) = problem.initial(c.initial(i, 0));
  return c;
}

// Graph-level residuals. u is the (n x 1) field recorded for the batch x (n x 2).

/// u_x - 2 u_t - u
inline Var residual_heat(Var u, Var x) {
  Var grad = autograd::input_gradient(u, x);
  return autograd::column(grad, 0) - 2.0 * autograd::column(grad, 1) - u;
}

/// u_xx + u_yy - f
inline Var residual_poisson(Var u, Var x, Var f) {
  Var grad = autograd::input_gradient(u, x);
  return autograd::second_input_derivative(grad, x, 0) + autograd::second_input_derivative(grad, x, 1) - f;
}

/// u_t + u u_x - nu u_xx
inline Var residual_burgers(Var u, Var x, double nu) {
  if (!(nu > 0.0)) throw std::invalid_argument("residual_burgers: viscosity must be positive");
  Var grad = autograd::input_gradient(u, x);
  return autograd::column(grad, 1) + u * autograd::column(grad, 0) -
         nu * autograd::second_input_derivative(grad, x, 0);
}

/// Residual values of a fixed network at `points`.
inline Tensor residual_values(const PDEProblem& problem, const nn::MLP& net, const Tensor& points,
                              const Tensor* source = nullptr) {
  Graph g;
  Var x = g.input(points);
  Var u = nn::mlp_forward(g, net, x).output;
  switch (problem.kind) {
    case ResidualKind::Heat: return residual_heat(u, x).value();
    case ResidualKind::Burgers: return residual_burgers(u, x, problem.nu).value();
    case ResidualKind::Poisson:
      if (source == nullptr) throw std::invalid_argument("residual_values: Poisson needs source values");
      return residual_poisson(u, x, g.input(*source)).value();
  }
  return {};
}

/// The combined PINN loss recorded on a graph, with its parameter leaves.
struct PinnLoss {
  Var total;
  std::vector<Var> terms;
  std::vector<std::string> term_names;
  std::vector<Var> params;
};

inline PinnLoss build_pinn_loss(Graph& g, const PDEProblem& problem, const nn::MLP& net, const CollocationSet& c) {
  problem.validate();
  if (net.in_dim() != 2 || net.out_dim() != 1) throw ShapeError("PINN networks map R^2 to R");
  PinnLoss out;
  out.params = nn::bind_parameters(g, net);
  auto field = [&](const Tensor& pts) {
    Var x = g.input(pts);
    return std::pair{x, nn::mlp_apply(net, out.params, x)};
  };
  auto add_term = [&](std::string name, Var residual) {
    out.terms.push_back(autograd::mean(autograd::square(residual)));
    out.term_names.push_back(std::move(name));
  };
  if (c.interior.rows() > 0) {
    auto [x, u] = field(c.interior);
    switch (problem.kind) {
      case ResidualKind::Heat: add_term("residual", residual_heat(u, x)); break;
      case ResidualKind::Poisson: add_term("residual", residual_poisson(u, x, g.input(c.source))); break;
      case ResidualKind::Burgers: add_term("residual", residual_burgers(u, x, problem.nu)); break;
    }
  }
  if (c.initial.rows() > 0) {
    auto [x, u] = field(c.initial);
    add_term("initial", u - g.input(c.initial_values));
  }
  if (c.boundary.rows() > 0) {
    auto [x, u] = field(c.boundary);
    add_term("boundary", u - g.input(c.boundary_values));
  }
  if (out.terms.empty()) throw std::invalid_argument("build_pinn_loss: empty collocation set");
  out.total = out.terms.front();
  for (std::size_t i = 1; i < out.terms.size(); ++i) out.total = out.total + out.terms[i];
  return out;
}

/// One row of a loss history.
struct LossRow {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double time_s = 0.0;  // training time since the first epoch started
};

/// Thrown when a loss or gradient turns non-finite; carries the rows so far.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, std::vector<LossRow> history)
      : std::runtime_error(what), history_(std::move(history)) {}
  [[nodiscard]] const std::vector<LossRow>& history() const { return history_; }

 private:
  std::vector<LossRow> history_;
};

using EpochCallback = std::function<void(const LossRow&)>;

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Full-batch Adam on the PINN loss. Row e holds the loss before the e-th
/// update. Cauchy d parameters are clamped after every step.
inline std::vector<LossRow> pinn_train(const PDEProblem& problem, nn::MLP& net, optim::Adam& adam,
                                       const optim::LrSchedule& schedule, const CollocationSet& c, int epochs,
                                       const EpochCallback& on_epoch = {}) {
  if (epochs < 1) throw std::invalid_argument("pinn_train: epochs must be >= 1");
  Graph g;
  const PinnLoss loss = build_pinn_loss(g, problem, net, c);
  const auto params = net.parameters();
  std::vector<LossRow> history;
  history.reserve(static_cast<std::size_t>(epochs));
  const auto t0 = std::chrono::steady_clock::now();
  for (int e = 0; e < epochs; ++e) {
    try {
      nn::sync_parameters(g, loss.params, net);
      g.evaluate(loss.total);
      const auto grads = g.backward(loss.total, loss.params);
      const double rate = schedule.rate(e);
      history.push_back({e, loss.total.item(), rate, 0.0});
      adam.set_lr(rate);
      adam.step(params, grads.grads);
      net.clamp_cauchy();
      history.back().time_s = detail::seconds_since(t0);
    } catch (const NonFiniteError& err) {
      std::string terms;
      for (std::size_t i = 0; i < loss.terms.size(); ++i) {
        terms += " " + loss.term_names[i] + "=" + std::to_string(g.value(loss.terms[i])(0, 0));
      }
      throw TrainingAborted("epoch " + std::to_string(e) + ": " + err.what() + ";" + terms, history);
    }
    if (on_epoch) on_epoch(history.back());
  }
  return history;
}

/// Current value of the PINN loss for `net` without training.
inline double pinn_loss_value(const PDEProblem& problem, const nn::MLP& net, const CollocationSet& c) {
  Graph g;
  return build_pinn_loss(g, problem, net, c).total.item();
}

/// nx x ny points spanning the closed box, x varying fastest.
inline Tensor uniform_grid(Interval x, Interval y, Index nx, Index ny) {
  if (nx < 2 || ny < 2) throw std::invalid_argument("uniform_grid: need at least 2 points per axis");
  Tensor g(nx * ny, 2);
  for (Index j = 0; j < ny; ++j)
    for (Index i = 0; i < nx; ++i) {
      g(j * nx + i, 0) = x.lo + x.width() * static_cast<double>(i) / static_cast<double>(nx - 1);
      g(j * nx + i, 1) = y.lo + y.width() * static_cast<double>(j) / static_cast<double>(ny - 1);
    }
  return g;
}

/// sqrt(mean((predicted - exact)^2))
inline double l2_grid_error(const Tensor& predicted, const Tensor& exact) {
  if (predicted.size() == 0) throw std::invalid_argument("l2_grid_error: empty grid");
  if (predicted.size() != exact.size()) throw ShapeError("l2_grid_error: field sizes differ");
  const auto p = predicted.reshaped();
  const auto e = exact.reshaped();
  return std::sqrt((p - e).squaredNorm() / static_cast<double>(predicted.size()));
}

inline Tensor sample_field(const std::function<double(double, double)>& f, const Tensor& points) {
  Tensor v(points.rows(), 1);
  for (Index i = 0; i < points.rows(); ++i) v(i, 0) = f(points(i, 0), points(i, 1));
  return v;
}

// ---------------------------------------------------------------------------
// Deep BSDE for u_t + u - u^3 + Laplacian(u) = 0, u(T, x) = g(x)

struct BSDEConfig {
  int dim = 100;
  double horizon = 0.3;
  int time_steps = 20;
  int batch = 64;
  std::vector<Index> hidden{110};
  nn::Activation activation = nn::Activation::Cauchy;
  double lr = 0.005;
  double y0_lo = 0.3;
  double y0_hi = 0.6;
  double z0_range = 0.1;

  [[nodiscard]] double dt() const { return horizon / time_steps; }
  void validate() const {
    if (!(horizon > 0.0)) throw std::invalid_argument("BSDE horizon must be positive");
    if (time_steps < 2) throw std::invalid_argument("BSDE needs at least 2 time steps");
    if (dim < 1 || batch < 1) throw std::invalid_argument("BSDE dimension and batch must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("BSDE learning rate must be positive");
  }
};

inline constexpr double kBsdeDiffusion = std::numbers::sqrt2;

/// 1 / (2 + 0.4 |x|^2)
inline double allen_cahn_terminal(const double* x, int dim) {
  double s = 0.0;
  for (int i = 0; i < dim; ++i) s += x[i] * x[i];
  return 1.0 / (2.0 + 0.4 * s);
}

inline double allen_cahn_driver(double y) { return y - y * y * y; }

/// Mixes a run seed with a stream index (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct BSDEPaths {
  std::vector<Tensor> x;   // time_steps + 1 states, batch x dim
  std::vector<Tensor> dw;  // time_steps increments, batch x dim
};

/// X_0 = 0, X_{n+1} = X_n + sqrt(2) dW_n with dW_n ~ N(0, dt I). Row r draws
/// from its own stream derived from (seed, r).
inline BSDEPaths bsde_simulate_paths(const BSDEConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  BSDEPaths p;
  p.x.assign(static_cast<std::size_t>(cfg.time_steps) + 1, Tensor::Zero(cfg.batch, cfg.dim));
  p.dw.assign(static_cast<std::size_t>(cfg.time_steps), Tensor(cfg.batch, cfg.dim));
  std::normal_distribution<double> normal(0.0, std::sqrt(cfg.dt()));
  for (Index r = 0; r < cfg.batch; ++r) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    for (int n = 0; n < cfg.time_steps; ++n) {
      const auto u = static_cast<std::size_t>(n);
      for (Index i = 0; i < cfg.dim; ++i) p.dw[u](r, i) = normal(rng);
      p.x[u + 1].row(r) = p.x[u].row(r) + kBsdeDiffusion * p.dw[u].row(r);
    }
  }
  return p;
}

struct BSDEResult {
  double y0 = 0.0;
  std::vector<LossRow> history;
};

/// Trainable Y_0, Z_0 and one network per interior time step mapping X_n to
/// Z_n; Y_{n+1} = Y_n - f(Y_n) dt + Z_n . dW_n; loss = mean |Y_N - g(X_N)|^2.
/// Every step draws a fresh batch of paths. Output layers start at zero.
inline BSDEResult bsde_train(const BSDEConfig& cfg, int steps, std::uint64_t seed, const EpochCallback& on_step = {}) {
  cfg.validate();
  if (steps < 1) throw std::invalid_argument("bsde_train: steps must be >= 1");
  const int N = cfg.time_steps;
  const double dt = cfg.dt();
  std::mt19937_64 init_rng(derive_seed(seed, 0xB5DEull));
  Tensor y0 = scalar_tensor(std::uniform_real_distribution<double>(cfg.y0_lo, cfg.y0_hi)(init_rng));
  Tensor z0(1, cfg.dim);
  std::uniform_real_distribution<double> uz(-cfg.z0_range, cfg.z0_range);
  for (Index i = 0; i < cfg.dim; ++i) z0(0, i) = uz(init_rng);
  std::vector<nn::MLP> nets;
  std::vector<Index> dims{cfg.dim};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(cfg.dim);
  for (int n = 1; n < N; ++n) {
    nets.push_back(nn::init_mlp(dims, cfg.activation, init_rng()));
    nets.back().layers().back().weights.setZero();
  }

  Graph g;
  const Tensor zeros = Tensor::Zero(cfg.batch, cfg.dim);
  Var vy0 = g.parameter(y0);
  Var vz0 = g.parameter(z0);
  std::vector<Var> x_in, dw_in;
  for (int n = 0; n < N; ++n) dw_in.push_back(g.input(zeros));
  for (int n = 1; n < N; ++n) x_in.push_back(g.input(zeros));
  Var terminal = g.input(Tensor::Zero(cfg.batch, 1));
  std::vector<std::vector<Var>> net_params;
  Var y = g.broadcast_like(vy0, terminal);
  y = y - dt * (y - y * y * y) + g.matmul(dw_in[0], vz0, false, true);
  for (int n = 1; n < N; ++n) {
    const auto k = static_cast<std::size_t>(n - 1);
    net_params.push_back(nn::bind_parameters(g, nets[k]));
    Var z = nn::mlp_apply(nets[k], net_params.back(), x_in[k]);
    y = y - dt * (y - y * y * y) + g.row_sum(z * dw_in[static_cast<std::size_t>(n)]);
  }
  Var loss = autograd::mean(autograd::square(y - terminal));

  std::vector<Var> leaves{vy0, vz0};
  std::vector<Tensor*> params{&y0, &z0};
  for (std::size_t k = 0; k < nets.size(); ++k) {
    leaves.insert(leaves.end(), net_params[k].begin(), net_params[k].end());
    for (Tensor* t : nets[k].parameters()) params.push_back(t);
  }

  optim::Adam adam(cfg.lr);
  BSDEResult out;
  const auto t0 = std::chrono::steady_clock::now();
  for (int s = 0; s < steps; ++s) {
    const BSDEPaths paths = bsde_simulate_paths(cfg, derive_seed(seed, static_cast<std::uint64_t>(s) + 1));
    Tensor gt(cfg.batch, 1);
    const Tensor& xn = paths.x.back();
    for (Index r = 0; r < cfg.batch; ++r) gt(r, 0) = allen_cahn_terminal(xn.data() + r * cfg.dim, cfg.dim);
    try {
      g.bind(terminal, gt);
      for (int n = 0; n < N; ++n) g.bind(dw_in[static_cast<std::size_t>(n)], paths.dw[static_cast<std::size_t>(n)]);
      for (int n = 1; n < N; ++n) g.bind(x_in[static_cast<std::size_t>(n - 1)], paths.x[static_cast<std::size_t>(n)]);
      g.bind(vy0, y0);
      g.bind(vz0, z0);
      for (std::size_t k = 0; k < nets.size(); ++k) nn::sync_parameters(g, net_params[k], nets[k]);
      g.evaluate(loss);
      const auto grads = g.backward(loss, leaves);
      out.history.push_back({s, loss.item(), cfg.lr, 0.0});
      adam.step(params, grads.grads);
      for (auto& net : nets) net.clamp_cauchy();
      out.history.back().time_s = detail::seconds_since(t0);
    } catch (const NonFiniteError& err) {
      throw TrainingAborted("step " + std::to_string(s) + ": " + err.what(), out.history);
    }
    if (on_step) on_step(out.history.back());
  }
  out.y0 = y0(0, 0);
  return out;
}

}  // namespace xnet::pde
