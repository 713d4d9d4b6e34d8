#include "xnet/pde.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>

namespace ag = xnet::autograd;
namespace nn = xnet::nn;
namespace pde = xnet::pde;
using xnet::Index;
using xnet::Tensor;

namespace {

Tensor random_points(Index n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor p(n, 2);
  for (Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  return p;
}

nn::MLP constant_net(double c) {
  nn::DenseLayer l;
  l.weights = Tensor::Zero(1, 2);
  l.bias = xnet::scalar_tensor(c);
  return nn::MLP({l});
}

nn::MLP x_net() {
  nn::DenseLayer l;
  l.weights = xnet::row_tensor({1.0, 0.0});
  l.bias = xnet::scalar_tensor(0.0);
  return nn::MLP({l});
}

}  // namespace

TEST(Collocation, InsideDomainAndSeeded) {
  const auto p = pde::poisson_problem();
  const auto a = pde::sample_collocation(p, 1000, 1000, 0, 7);
  EXPECT_EQ(a.interior.rows(), 1000);
  EXPECT_GE(a.interior.minCoeff(), 0.0);
  EXPECT_LE(a.interior.maxCoeff(), 1.0);
  const auto b = pde::sample_collocation(p, 1000, 1000, 0, 7);
  EXPECT_EQ(std::memcmp(a.interior.data(), b.interior.data(), sizeof(double) * 2000), 0);
  EXPECT_EQ(std::memcmp(a.boundary.data(), b.boundary.data(), sizeof(double) * 2000), 0);
  EXPECT_THROW(pde::sample_collocation(p, -1, 0, 0, 1), std::invalid_argument);
}

TEST(Collocation, BoundaryEdgesBalanced) {
  const auto c = pde::sample_collocation(pde::poisson_problem(), 0, 1000, 0, 3);
  int edges[4] = {0, 0, 0, 0};
  for (Index i = 0; i < c.boundary.rows(); ++i) {
    const double x = c.boundary(i, 0), y = c.boundary(i, 1);
    if (x == 0.0) ++edges[0];
    else if (x == 1.0) ++edges[1];
    else if (y == 0.0) ++edges[2];
    else if (y == 1.0) ++edges[3];
  }
  // Multinomial: mean 250, sd sqrt(1000 * 0.25 * 0.75) ~ 13.7.
  for (int e : edges) EXPECT_NEAR(e, 250, 3 * 13.7);
  EXPECT_EQ(edges[0] + edges[1] + edges[2] + edges[3], 1000);
}

TEST(Collocation, TimeDependentSets) {
  const auto p = pde::heat_problem();
  const auto c = pde::sample_collocation(p, 100, 40, 30, 1);
  EXPECT_EQ(c.initial.rows(), 30);
  for (Index i = 0; i < 30; ++i) {
    EXPECT_EQ(c.initial(i, 1), 0.0);
    EXPECT_DOUBLE_EQ(c.initial_values(i, 0), 6.0 * std::exp(-3.0 * c.initial(i, 0)));
  }
  for (Index i = 0; i < 40; ++i) EXPECT_TRUE(c.boundary(i, 0) == 0.0 || c.boundary(i, 0) == 2.0);
}

TEST(Residuals, Examples) {
  const Tensor pts = random_points(20, 2);
  const auto heat = pde::heat_problem();
  const auto burgers = pde::burgers_problem();
  EXPECT_EQ(pde::residual_values(heat, constant_net(0.0), pts).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(pde::residual_values(burgers, constant_net(0.0), pts).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(pde::residual_values(burgers, constant_net(2.5), pts).cwiseAbs().maxCoeff(), 0.0);
  const Tensor rh = pde::residual_values(heat, x_net(), pts);
  const Tensor rb = pde::residual_values(burgers, x_net(), pts);
  for (Index i = 0; i < pts.rows(); ++i) {
    EXPECT_NEAR(rh(i, 0), 1.0 - pts(i, 0), 1e-15);
    EXPECT_NEAR(rb(i, 0), pts(i, 0), 1e-15);
  }
}

TEST(Residuals, ExactSolutionsVanish) {
  const Tensor pts = random_points(50, 4);
  {
    ag::Graph g;
    auto x = g.input(pts);
    auto u = 6.0 * ag::exp(-3.0 * ag::column(x, 0) - 2.0 * ag::column(x, 1));
    EXPECT_LT(pde::residual_heat(u, x).value().cwiseAbs().maxCoeff(), 1e-12);
  }
  {
    constexpr double tau = 2.0 * std::numbers::pi;
    const auto p = pde::poisson_problem();
    ag::Graph g;
    auto x = g.input(pts);
    auto u = ag::sin(tau * ag::column(x, 0)) * ag::sin(tau * ag::column(x, 1));
    const Tensor f = pde::sample_field(p.source, pts);
    EXPECT_LT(pde::residual_poisson(u, x, g.input(f)).value().cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Residuals, LinearInNetForHeatAndPoisson) {
  const Tensor pts = random_points(30, 5);
  const Tensor f = Tensor::Zero(30, 1);
  auto net = nn::init_mlp({2, 8, 1}, nn::Activation::Tanh, 3);
  auto scaled = net;
  const double a = -2.75;
  scaled.layers().back().weights *= a;
  scaled.layers().back().bias *= a;
  const auto heat = pde::heat_problem();
  const auto poisson = pde::poisson_problem();
  EXPECT_LT((pde::residual_values(heat, scaled, pts) - a * pde::residual_values(heat, net, pts)).cwiseAbs().maxCoeff(),
            1e-13);
  EXPECT_LT((pde::residual_values(poisson, scaled, pts, &f) - a * pde::residual_values(poisson, net, pts, &f))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST(Residuals, PoissonMatchesFiniteDifferenceLaplacian) {
  const Tensor pts = random_points(25, 6);
  auto net = nn::init_mlp({2, 10, 10, 1}, nn::Activation::Cauchy, 8);
  const auto p = pde::poisson_problem();
  const Tensor f = pde::sample_field(p.source, pts);
  const Tensor r = pde::residual_values(p, net, pts, &f);
  const double h = 1e-4;
  for (Index i = 0; i < pts.rows(); ++i) {
    auto u = [&](double dx, double dy) {
      Tensor q(1, 2);
      q << pts(i, 0) + dx, pts(i, 1) + dy;
      return nn::predict(net, q)(0, 0);
    };
    const double lap = (u(h, 0) + u(-h, 0) + u(0, h) + u(0, -h) - 4 * u(0, 0)) / (h * h);
    EXPECT_NEAR(r(i, 0), lap - f(i, 0), 1e-4 * std::max(1.0, std::abs(r(i, 0))));
  }
}

TEST(PinnLoss, ZeroAndUnitCases) {
  const auto p = pde::poisson_problem();
  auto zero_problem = p;
  zero_problem.source = [](double, double) { return 0.0; };
  const auto c = pde::sample_collocation(zero_problem, 50, 40, 0, 1);
  EXPECT_EQ(pde::pinn_loss_value(zero_problem, constant_net(0.0), c), 0.0);
  auto boundary_only = c;
  boundary_only.interior.resize(0, 2);
  EXPECT_DOUBLE_EQ(pde::pinn_loss_value(zero_problem, constant_net(1.0), boundary_only), 1.0);
}

TEST(PinnTrain, LossDecreasesAndIsReproducible) {
  const auto p = pde::poisson_problem();
  const auto c = pde::sample_collocation(p, 100, 100, 0, 2);
  auto run = [&] {
    auto net = nn::init_mlp({2, 16, 1}, nn::Activation::Cauchy, 4);
    xnet::optim::Adam adam;
    return pde::pinn_train(p, net, adam, xnet::optim::LrSchedule({{0, 1e-2}, {40, 1e-3}}), c, 60);
  };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a.size(), 60u);
  EXPECT_LT(a.back().loss, a.front().loss);
  EXPECT_EQ(a[39].lr, 1e-2);
  EXPECT_EQ(a[40].lr, 1e-3);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].loss, b[i].loss);
}

TEST(PinnTrain, AbortCarriesHistory) {
  const auto p = pde::poisson_problem();
  const auto c = pde::sample_collocation(p, 20, 20, 0, 2);
  auto net = nn::init_mlp({2, 4, 1}, nn::Activation::Tanh, 4);
  xnet::optim::Adam adam;
  try {
    pde::pinn_train(p, net, adam, xnet::optim::LrSchedule::constant(1e300), c, 5);
    FAIL() << "expected abort";
  } catch (const pde::TrainingAborted& e) {
    EXPECT_GE(e.history().size(), 1u);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(GridError, Examples) {
  const Tensor a = Tensor::Random(10, 1);
  EXPECT_EQ(pde::l2_grid_error(a, a), 0.0);
  EXPECT_DOUBLE_EQ(pde::l2_grid_error(Tensor(a.array() + 0.3), a), 0.3);
  EXPECT_THROW((void)pde::l2_grid_error(Tensor(0, 1), Tensor(0, 1)), std::invalid_argument);
  const Tensor g = pde::uniform_grid({0, 1}, {0, 1}, 100, 100);
  EXPECT_EQ(g.rows(), 10000);
  EXPECT_EQ(g(9999, 0), 1.0);
}

TEST(Bsde, PathMoments) {
  pde::BSDEConfig cfg;
  cfg.dim = 5;
  cfg.batch = 10000;
  const auto p = pde::bsde_simulate_paths(cfg, 11);
  const Tensor& xn = p.x.back();
  const double var_target = 2.0 * cfg.horizon;
  for (Index i = 0; i < cfg.dim; ++i) {
    const auto col = xn.col(i).array();
    const double mean = col.mean();
    const double var = (col - mean).square().mean();
    EXPECT_NEAR(mean, 0.0, 4 * std::sqrt(var_target / cfg.batch));
    EXPECT_NEAR(var, var_target, 0.05 * var_target);
  }
  const double origin[5] = {0, 0, 0, 0, 0};
  EXPECT_DOUBLE_EQ(pde::allen_cahn_terminal(origin, 5), 0.5);
  const auto q = pde::bsde_simulate_paths(cfg, 11);
  EXPECT_EQ(std::memcmp(q.x.back().data(), xn.data(), sizeof(double) * xn.size()), 0);
}

TEST(Bsde, ZeroIncrementsKeepState) {
  pde::BSDEPaths p;
  Tensor x0 = Tensor::Random(3, 4);
  p.x.push_back(x0);
  for (int n = 0; n < 5; ++n) p.x.push_back(p.x.back() + pde::kBsdeDiffusion * Tensor::Zero(3, 4));
  for (const auto& x : p.x) EXPECT_EQ(x, x0);
}

TEST(Bsde, ShortRunReproducible) {
  pde::BSDEConfig cfg;
  cfg.dim = 10;
  cfg.batch = 16;
  cfg.time_steps = 5;
  cfg.hidden = {20};
  const auto a = pde::bsde_train(cfg, 5, 3);
  const auto b = pde::bsde_train(cfg, 5, 3);
  ASSERT_EQ(a.history.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(a.history[i].loss, b.history[i].loss);
  EXPECT_EQ(a.y0, b.y0);
}
