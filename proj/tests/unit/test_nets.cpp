#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cmcforge/error.hpp"
#include "cmcforge/nets.hpp"
#include "fixtures.hpp"

using namespace cmcforge;
using cmcforge::testing::max_rel_error;
using cmcforge::testing::numeric_gradient;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

}  // namespace

TEST(MicroNet, ParameterLayout) {
  MicroNet net(3, 4, 2);
  EXPECT_EQ(net.parameter_count(), 3 * 4 + 4 + 4 * 2 + 2);
  net.params().setLinSpaced(net.parameter_count(), 0, double(net.parameter_count() - 1));
  EXPECT_EQ(net.w1()(1, 0), 1.0);  // column-major
  EXPECT_EQ(net.b1()[0], 12.0);
  EXPECT_EQ(net.w2()(0, 0), 16.0);
  EXPECT_EQ(net.b2()[1], 25.0);
}

TEST(MicroNet, ForwardMatchesHandComputation) {
  MicroNet net(2, 3, 2);
  std::mt19937_64 rng(1);
  net.params() = random_matrix(net.parameter_count(), 1, rng);
  const Eigen::MatrixXd x = random_matrix(5, 2, rng);
  const Eigen::MatrixXd y = forward(net, x);
  for (int r = 0; r < 5; ++r) {
    const Eigen::VectorXd h = (net.w1() * x.row(r).transpose() + net.b1()).array().tanh();
    const Eigen::VectorXd z = net.w2() * h + net.b2();
    EXPECT_LT((y.row(r).transpose() - z).norm(), 1e-12);
  }
}

TEST(MicroNet, InitializationIsSeededAndGlorotBounded) {
  MicroNet a(8, 16, 5), b(8, 16, 5), c(8, 16, 5);
  a.initialize(4);
  b.initialize(4);
  c.initialize(5);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_NE(a.params(), c.params());
  EXPECT_LE(a.w1().cwiseAbs().maxCoeff(), std::sqrt(6.0 / 24.0));
  EXPECT_LE(a.w2().cwiseAbs().maxCoeff(), std::sqrt(6.0 / 21.0));
  EXPECT_EQ(a.b1().squaredNorm() + a.b2().squaredNorm(), 0.0);
}

class NetGradient : public ::testing::TestWithParam<Activation> {};

TEST_P(NetGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(99);
  for (int instance = 0; instance < 20; ++instance) {
    const int in = 2 + instance % 5, hid = 3 + instance % 4, out = 2 + instance % 3;
    MicroNet net(in, hid, out, GetParam());
    net.initialize(std::uint64_t(instance));
    net.params() += 0.1 * random_matrix(net.parameter_count(), 1, rng);
    const Eigen::MatrixXd x = random_matrix(7, in, rng);
    const Eigen::MatrixXd up = random_matrix(7, out, rng);
    ForwardCache cache;
    forward(net, x, &cache);
    const Eigen::VectorXd g = backward(net, cache, up);
    auto f = [&](const Eigen::VectorXd& p) {
      MicroNet probe = net;
      probe.params() = p;
      return (forward(probe, x).array() * up.array()).sum();
    };
    EXPECT_LT(max_rel_error(g, numeric_gradient(f, net.params())), 1e-4) << "instance " << instance;
  }
}

INSTANTIATE_TEST_SUITE_P(Activations, NetGradient, ::testing::Values(Activation::kTanh, Activation::kIdentity));

TEST(AdamW, FirstStepClosedForm) {
  MicroNet net(1, 1, 1, Activation::kIdentity);
  net.params() << 1.0, -2.0, 0.5, 3.0;
  BranchState s = BranchState::create(Modality::k2d, net);
  Eigen::VectorXd g(4);
  g << 0.3, -4.0, 0.0, 1e-3;
  AdamWParams p;
  p.lr = 0.01;
  p.weight_decay = 0.1;
  const Eigen::VectorXd before = s.student.params();
  optimizer_step(s, g, p);
  for (int i = 0; i < 4; ++i) {
    const double decayed = before[i] * (1 - p.lr * p.weight_decay);
    const double expected = decayed - p.lr * g[i] / (std::abs(g[i]) + p.eps);
    EXPECT_NEAR(s.student.params()[i], expected, 1e-15);
  }
  EXPECT_EQ(s.step_count, 1);
  // The teacher is untouched by the optimizer.
  EXPECT_EQ(s.teacher.params(), before);
}

TEST(AdamW, ConvergesOnConvexQuadratic) {
  MicroNet net(2, 2, 2, Activation::kIdentity);
  std::mt19937_64 rng(3);
  net.params() = random_matrix(net.parameter_count(), 1, rng);
  const Eigen::VectorXd target = random_matrix(net.parameter_count(), 1, rng);
  BranchState s = BranchState::create(Modality::k3d, net);
  AdamWParams p;
  p.lr = 0.05;
  for (int i = 0; i < 3000; ++i) optimizer_step(s, s.student.params() - target, p);
  EXPECT_LT((s.student.params() - target).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(AdamW, RejectsBadGradients) {
  BranchState s = BranchState::create(Modality::k2d, MicroNet(1, 1, 1));
  EXPECT_THROW(optimizer_step(s, Eigen::VectorXd::Zero(3), AdamWParams{}), ContractError);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(4);
  g[0] = std::nan("");
  EXPECT_THROW(optimizer_step(s, g, AdamWParams{}), NumericError);
}

TEST(Ema, ElementwiseForSeveralAlphas) {
  std::mt19937_64 rng(8);
  for (double alpha : {0.0, 0.5, 0.99, 1.0}) {
    MicroNet net(3, 4, 2);
    BranchState s = BranchState::create(Modality::k2d, net);
    s.student.params() = random_matrix(net.parameter_count(), 1, rng);
    s.teacher.params() = random_matrix(net.parameter_count(), 1, rng);
    const Eigen::VectorXd t0 = s.teacher.params(), st = s.student.params();
    ema_update(s, alpha);
    for (Eigen::Index i = 0; i < t0.size(); ++i)
      EXPECT_EQ(s.teacher.params()[i], alpha * t0[i] + (1 - alpha) * st[i]) << "alpha " << alpha;
  }
  BranchState s = BranchState::create(Modality::k2d, MicroNet(1, 1, 1));
  EXPECT_THROW(ema_update(s, 1.5), ConfigError);
}

TEST(Ema, GeometricSeriesOnScalarNet) {
  BranchState s = BranchState::create(Modality::k2d, MicroNet(1, 1, 1, Activation::kIdentity));
  s.teacher.params().setConstant(2.0);
  s.student.params().setConstant(-1.0);
  const double alpha = 0.9;
  for (int n = 1; n <= 50; ++n) {
    ema_update(s, alpha);
    const double expected = std::pow(alpha, n) * 2.0 + (1 - std::pow(alpha, n)) * -1.0;
    ASSERT_LT(std::abs(s.teacher.params()[0] - expected), 1e-10) << "step " << n;
  }
}
