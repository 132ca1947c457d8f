#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "hcl/encoder.hpp"
#include "hcl/objectives.hpp"
#include "test_support.hpp"

namespace hcl {
namespace {

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

TEST(EuclideanInfoNce, HandComputedValue) {
  // Positive logit 1/tau, one negative with logit 0.
  const double tau = 0.5;
  Matrix negs(2, 1);
  negs.col(0) = v2(0, 1);
  const LossResult r = euclidean_infonce(v2(1, 0), v2(1, 0), negs, tau);
  const double expected = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0));
  EXPECT_NEAR(r.loss, expected, 1e-15);
  EXPECT_NEAR(r.positive_probability, std::exp(2.0) / (std::exp(2.0) + 1.0), 1e-15);
}

TEST(EuclideanInfoNce, NeedsANegative) {
  EXPECT_THROW(euclidean_infonce(v2(1, 0), v2(0, 1), Matrix(2, 0), 0.2), std::invalid_argument);
  Matrix wrong = Matrix::Zero(3, 1);
  EXPECT_THROW(euclidean_infonce(v2(1, 0), v2(0, 1), wrong, 0.2), std::invalid_argument);
}

TEST(EuclideanInfoNce, ExtraNegativesEqualConcatenation) {
  Rng rng(1);
  Matrix a(3, 4), b(3, 2), both(3, 6);
  for (int i = 0; i < 4; ++i) a.col(i) = random_unit_vector(rng, 3);
  for (int i = 0; i < 2; ++i) b.col(i) = random_unit_vector(rng, 3);
  both << a, b;
  const Vector z1 = random_unit_vector(rng, 3), z2 = random_unit_vector(rng, 3);
  const LossResult x = euclidean_infonce(z1, z2, a, 0.2, b);
  const LossResult y = euclidean_infonce(z1, z2, both, 0.2);
  EXPECT_NEAR(x.loss, y.loss, 1e-14);
  EXPECT_TRUE(x.grad.isApprox(y.grad, 1e-13));
}

TEST(EuclideanInfoNce, StableForTinyTemperature) {
  Matrix negs(2, 1);
  negs.col(0) = v2(-1, 0);
  const LossResult r = euclidean_infonce(v2(1, 0), v2(1, 0), negs, 1e-4);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_TRUE(r.grad.allFinite());
  EXPECT_LT(r.loss, 1e-12);
}

TEST(HyperbolicInfoNce, HandComputedValue) {
  const BallConfig cfg = make_ball(1.0, 1e-5, 2);
  Matrix negs(2, 1);
  negs.col(0) = v2(0.5, 0);
  const Vector z = Vector::Zero(2);
  const LossResult r = hyperbolic_infonce(z, v2(0, 0.25), negs, 1.0, cfg);
  const double dp = 2.0 * std::atanh(0.25), dn = 2.0 * std::atanh(0.5);
  const double expected = -std::log(std::exp(-dp) / (std::exp(-dp) + std::exp(-dn)));
  EXPECT_NEAR(r.loss, expected, 1e-14);
}

TEST(HyperbolicInfoNce, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  for (int t = 0; t < 30; ++t) {
    const BallConfig cfg = make_ball(2.0, 1e-5, 3);
    const double lim = 0.9 * cfg.max_norm();
    const Vector z1 = test::random_in_ball(rng, 3, lim), z2 = test::random_in_ball(rng, 3, lim);
    Matrix negs(3, 5);
    for (int i = 0; i < 5; ++i) negs.col(i) = test::random_in_ball(rng, 3, lim);
    const LossResult r = hyperbolic_infonce(z1, z2, negs, 0.5, cfg);
    const Vector fd = test::fd_gradient(
        [&](const Vector& x) { return hyperbolic_infonce(x, z2, negs, 0.5, cfg).loss; }, z1);
    EXPECT_LT(test::relative_error(r.grad, fd), 1e-6);
  }
}

TEST(HyperbolicInfoNce, RejectsPointsOutsideBall) {
  const BallConfig cfg = make_ball(1.0, 1e-5, 2);
  Matrix negs(2, 1);
  negs.col(0) = v2(1.0, 0.0);
  EXPECT_THROW(hyperbolic_infonce(v2(0, 0), v2(0.1, 0), negs, 0.2, cfg), DomainError);
  EXPECT_THROW(hyperbolic_infonce(v2(1.2, 0), v2(0.1, 0), Matrix(2, 0), 0.2, cfg), DomainError);
  Matrix wrong(3, 1);
  wrong.setZero();
  EXPECT_THROW(hyperbolic_infonce(v2(0, 0), v2(0.1, 0), wrong, 0.2, cfg), std::invalid_argument);
}

TEST(CombinedLoss, LambdaWeighting) {
  LossConfig cfg;
  cfg.lambda = 0.1;
  EXPECT_DOUBLE_EQ(combined_loss(2.0, 3.0, cfg), 2.3);
  cfg.lambda = 0.0;
  // A non-finite hyperbolic term is ignored when the branch is off.
  EXPECT_EQ(combined_loss(2.0, std::numeric_limits<double>::quiet_NaN(), cfg), 2.0);
  cfg.lambda = -1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.lambda = 0.1;
  cfg.temperature = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(NegativeQueue, FifoEviction) {
  NegativeQueue q(3, 2, QueueKind::unit);
  EXPECT_TRUE(q.empty());
  Matrix a(2, 2);
  a << 1, 0, 0, 1;
  q.push(a);
  EXPECT_EQ(q.size(), 2u);
  EXPECT_FALSE(q.warm(3));
  EXPECT_TRUE(q.warm(2));
  Matrix b(2, 2);
  b << -1, 0, 0, -1;
  q.push(b);
  ASSERT_EQ(q.size(), 3u);
  const Matrix& n = q.negatives();
  // Oldest surviving first: a.col(1), b.col(0), b.col(1).
  EXPECT_EQ(Vector(n.col(0)), v2(0, 1));
  EXPECT_EQ(Vector(n.col(1)), v2(-1, 0));
  EXPECT_EQ(Vector(n.col(2)), v2(0, -1));
  EXPECT_TRUE(q.warm(100));  // capped by capacity
}

TEST(NegativeQueue, ValidatesEntries) {
  NegativeQueue unit(4, 2, QueueKind::unit);
  Matrix bad(2, 1);
  bad << 2, 0;
  EXPECT_THROW(unit.push(bad), std::invalid_argument);
  NegativeQueue ball(4, 2, QueueKind::ball, 1.0);
  bad << 1.0, 0.0;
  EXPECT_THROW(ball.push(bad), DomainError);
  bad << 0.5, std::numeric_limits<double>::infinity();
  EXPECT_THROW(ball.push(bad), std::invalid_argument);
  EXPECT_THROW(ball.push(Matrix::Zero(3, 1)), std::invalid_argument);
  EXPECT_THROW(NegativeQueue(0, 2, QueueKind::unit), std::invalid_argument);
  EXPECT_THROW(NegativeQueue(2, 2, QueueKind::ball, 0.0), std::invalid_argument);
}

TEST(NegativeQueue, SaveLoadRoundTrip) {
  NegativeQueue q(5, 2, QueueKind::ball, 1.0);
  Matrix m(2, 7);
  for (int i = 0; i < 7; ++i) m.col(i) = v2(0.1 * i, -0.05 * i);
  q.push(m);
  std::stringstream io;
  q.save(io);
  NegativeQueue r(5, 2, QueueKind::ball, 1.0);
  r.load(io);
  EXPECT_EQ(r.size(), q.size());
  EXPECT_EQ(r.negatives(), q.negatives());
  // Continued pushes stay in lockstep.
  q.push(m.leftCols(2));
  r.push(m.leftCols(2));
  EXPECT_EQ(r.negatives(), q.negatives());
  std::stringstream io2;
  q.save(io2);
  NegativeQueue other(6, 2, QueueKind::ball, 1.0);
  EXPECT_THROW(other.load(io2), CheckpointError);
}

TEST(SceneLossSpace, ParseRoundTrip) {
  for (SceneLossSpace s : {SceneLossSpace::hyperbolic, SceneLossSpace::euclidean}) {
    EXPECT_EQ(parse_scene_loss_space(to_string(s)), s);
  }
  EXPECT_ANY_THROW(parse_scene_loss_space("spherical"));
}

}  // namespace
}  // namespace hcl
