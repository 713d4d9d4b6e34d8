#include "xnet/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace optim = xnet::optim;
using xnet::Index;
using xnet::Tensor;

TEST(Schedule, PhaseLookup) {
  const optim::LrSchedule s({{0, 0.001}, {7000, 0.0001}});
  EXPECT_EQ(s.rate(0), 0.001);
  EXPECT_EQ(s.rate(6999), 0.001);
  EXPECT_EQ(s.rate(7000), 0.0001);
  EXPECT_EQ(s.rate(7999), 0.0001);
  const auto c = optim::LrSchedule::constant(0.3);
  for (int e : {0, 1, 100000}) EXPECT_EQ(c.rate(e), 0.3);
  EXPECT_THROW((void)optim::LrSchedule().rate(0), std::logic_error);
  EXPECT_THROW((void)s.rate(-1), std::invalid_argument);
  EXPECT_THROW(optim::LrSchedule({{0, 0.1}, {0, 0.2}}), std::invalid_argument);
  EXPECT_THROW(optim::LrSchedule({{0, 0.0}}), std::invalid_argument);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Tensor p = Tensor::Constant(2, 2, 1.5);
  optim::Adam adam(0.1);
  for (int i = 0; i < 5; ++i) adam.step({&p}, {Tensor::Zero(2, 2)});
  EXPECT_TRUE((p.array() == 1.5).all());
}

TEST(Adam, FirstStepIsUnitScaled) {
  Tensor p = xnet::scalar_tensor(0.0);
  optim::Adam adam(0.1);
  adam.step({&p}, {xnet::scalar_tensor(1.0)});
  EXPECT_NEAR(p(0, 0), -0.1, 1e-8);
  EXPECT_EQ(adam.state().t, 1);
}

TEST(Adam, ConvergesOnQuadratic) {
  Tensor p = xnet::scalar_tensor(1.0);
  optim::Adam adam(0.05);
  for (int i = 0; i < 500; ++i) adam.step({&p}, {Tensor(2.0 * p)});
  EXPECT_LT(std::abs(p(0, 0)), 1e-2);
}

TEST(Adam, RejectsBadGradients) {
  Tensor p = Tensor::Zero(2, 1);
  optim::Adam adam;
  EXPECT_THROW(adam.step({&p}, {Tensor::Zero(1, 2)}), xnet::ShapeError);
  EXPECT_THROW(adam.step({&p}, {Tensor::Constant(2, 1, INFINITY)}), xnet::NonFiniteError);
  EXPECT_THROW(adam.step({&p}, {}), std::invalid_argument);
}

TEST(AdamProperty, StepBoundedAndSecondMomentNonNegative) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 10.0);
  Tensor p = Tensor::Zero(4, 3);
  const double lr = 0.01;
  optim::Adam adam(lr);
  for (int step = 0; step < 300; ++step) {
    Tensor g(4, 3);
    for (Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
    const Tensor before = p;
    adam.step({&p}, {g});
    EXPECT_LE((p - before).cwiseAbs().maxCoeff(), lr / (1.0 - 0.9) + 1e-12);
    EXPECT_GE(adam.state().v[0].minCoeff(), 0.0);
  }
}

TEST(AdamProperty, QuadraticBowlNonIncreasingOverWindows) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (double lr : {0.001, 0.005, 0.01}) {
    Tensor p(1, 5);
    for (Index i = 0; i < 5; ++i) p(0, i) = u(rng);
    const Tensor scale = xnet::row_tensor({1, 2, 5, 0.5, 3});
    auto loss = [&] { return (scale.array() * p.array().square()).sum(); };
    optim::Adam adam(lr);
    double prev = loss();
    for (int w = 0; w < 20; ++w) {
      for (int s = 0; s < 100; ++s) adam.step({&p}, {Tensor(2.0 * scale.array() * p.array())});
      const double now = loss();
      EXPECT_LE(now, prev) << "lr " << lr << " window " << w;
      prev = now;
    }
  }
}

TEST(Sgd, PlainStep) {
  Tensor p = xnet::scalar_tensor(1.0);
  optim::Sgd sgd(0.25);
  sgd.step({&p}, {xnet::scalar_tensor(2.0)});
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
}
