#include "xnet/autograd.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace ag = xnet::autograd;
using xnet::Tensor;

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

TEST(Evaluate, ScalarArithmetic) {
  ag::Graph g;
  auto x = g.input(xnet::scalar_tensor(3.0));
  auto y = x * x;
  EXPECT_DOUBLE_EQ(y.item(), 9.0);

  ag::Graph h;
  auto a = h.input(xnet::scalar_tensor(2.0));
  auto b = h.input(xnet::scalar_tensor(5.0));
  EXPECT_DOUBLE_EQ((a * b + b).item(), 15.0);

  ag::Graph s;
  EXPECT_DOUBLE_EQ(ag::sigmoid(s.input(xnet::scalar_tensor(0.0))).item(), 0.5);
}

TEST(Evaluate, ReplaysAfterRebinding) {
  ag::Graph g;
  auto x = g.input(xnet::scalar_tensor(3.0));
  auto y = ag::tanh(x * x) + x;
  const double first = y.item();
  g.bind(x, xnet::scalar_tensor(0.5));
  g.evaluate();
  EXPECT_DOUBLE_EQ(y.item(), std::tanh(0.25) + 0.5);
  g.bind(x, xnet::scalar_tensor(3.0));
  g.evaluate(y);
  EXPECT_EQ(y.item(), first);
}

TEST(Evaluate, ShapeMismatchThrows) {
  ag::Graph g;
  auto a = g.input(Tensor::Ones(2, 3));
  auto b = g.input(Tensor::Ones(3, 2));
  EXPECT_THROW(a + b, xnet::ShapeError);
  EXPECT_THROW(ag::matmul(a, a), xnet::ShapeError);
}

TEST(Evaluate, NonFiniteFailsFast) {
  ag::Graph g;
  auto a = g.input(xnet::scalar_tensor(1.0));
  auto z = g.input(xnet::scalar_tensor(0.0));
  EXPECT_THROW(a / z, xnet::NonFiniteError);
  Tensor bad = xnet::scalar_tensor(std::nan(""));
  EXPECT_THROW(g.bind(a, bad), xnet::NonFiniteError);
}

TEST(Backward, Basics) {
  ag::Graph g;
  auto x = g.parameter(xnet::scalar_tensor(3.0));
  auto y = x * x;
  EXPECT_DOUBLE_EQ(g.backward(y, {x}).at(x)(0, 0), 6.0);

  ag::Graph h;
  auto a = h.parameter(xnet::scalar_tensor(2.0));
  auto b = h.parameter(xnet::scalar_tensor(5.0));
  auto grads = h.backward(a * b, {a, b});
  EXPECT_DOUBLE_EQ(grads.at(a)(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(grads.at(b)(0, 0), 2.0);
}

TEST(Backward, UnreachableLeafGetsZero) {
  ag::Graph g;
  auto x = g.parameter(xnet::scalar_tensor(3.0));
  auto unused = g.parameter(Tensor::Ones(2, 2));
  auto grads = g.backward(x * x, {x, unused});
  EXPECT_TRUE(grads.at(unused).isZero());
  EXPECT_EQ(grads.at(unused).rows(), 2);
}

TEST(Backward, OutputSeedIsOne) {
  ag::Graph g;
  auto x = g.parameter(xnet::scalar_tensor(3.0));
  EXPECT_DOUBLE_EQ(g.backward(x, {x}).at(x)(0, 0), 1.0);
}

TEST(Backward, LinearNetMseMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  Tensor X(8, 3), Y(8, 2), W(3, 2), b(1, 2);
  for (auto* t : {&X, &Y, &W, &b})
    for (xnet::Index i = 0; i < t->size(); ++i) t->data()[i] = n01(rng);

  auto loss_of = [&](const Tensor& w) {
    Tensor r = (X * w).rowwise() + b.row(0);
    return (r - Y).squaredNorm() / static_cast<double>(r.size());
  };

  ag::Graph g;
  auto x = g.input(X);
  auto y = g.input(Y);
  auto w = g.parameter(W);
  auto bias = g.parameter(b);
  auto loss = ag::mean(ag::square(ag::matmul(x, w) + bias - y));
  EXPECT_NEAR(loss.item(), loss_of(W), 1e-12);
  const Tensor grad = g.backward(loss, {w}).at(w);

  const double h = 1e-5;
  for (xnet::Index i = 0; i < W.size(); ++i) {
    Tensor wp = W, wm = W;
    wp.data()[i] += h;
    wm.data()[i] -= h;
    const double fd = (loss_of(wp) - loss_of(wm)) / (2 * h);
    EXPECT_LT(rel_err(grad.data()[i], fd), 1e-6) << "entry " << i;
  }
}

TEST(InputDerivative, CubicAndSine) {
  ag::Graph g;
  auto x = g.input(xnet::scalar_tensor(2.0));
  auto u = x * x * x;
  EXPECT_NEAR(ag::input_derivative(u, x, 0, 2).item(), 12.0, 1e-12);
  EXPECT_NEAR(ag::input_derivative(u, x, 0, 1).item(), 12.0, 1e-12);

  ag::Graph s;
  auto x0 = s.input(xnet::scalar_tensor(0.0));
  EXPECT_NEAR(ag::input_derivative(ag::sin(x0), x0, 0, 1).item(), 1.0, 1e-15);
}

TEST(FiniteDifference, Oracles) {
  EXPECT_NEAR(ag::central_difference([](double x) { return x * x; }, 3.0, 1e-5), 6.0, 1e-9);
  EXPECT_NEAR(ag::central_difference([](double x) { return std::exp(x); }, 0.0, 1e-5), 1.0, 1e-9);
  EXPECT_NEAR(ag::second_difference([](double x) { return x * x * x * x; }, 1.0, 1e-4), 12.0, 1e-5);
  EXPECT_THROW(ag::central_difference([](double x) { return x; }, 0.0, 0.0), std::invalid_argument);
}
