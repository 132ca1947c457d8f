#include <sstream>

#include <gtest/gtest.h>

#include "hcl/encoder.hpp"
#include "test_support.hpp"

namespace hcl {
namespace {

EncoderShape tiny(HeadMode head = HeadMode::shared) {
  EncoderShape s;
  s.input_dim = 5;
  s.hidden = {7, 6};
  s.embedding_dim = 3;
  s.head = head;
  return s;
}

TEST(Encoder, ShapesAndParameterCount) {
  Rng rng(1);
  const EncoderParams p = init_encoder(tiny(), rng);
  EXPECT_EQ(p.input_dim(), 5);
  EXPECT_EQ(p.embedding_dim(), 3);
  EXPECT_EQ(p.parameter_count(), 5u * 7 + 7 + 7 * 6 + 6 + 6 * 3 + 3);
  Rng rng2(1);
  const EncoderParams split = init_encoder(tiny(HeadMode::split), rng2);
  EXPECT_EQ(split.head_mode(), HeadMode::split);
  EXPECT_EQ(split.parameter_count(), p.parameter_count() + 6 * 3 + 3);
  std::size_t total = 0;
  for (const auto& s : p.spans()) total += s.size();
  EXPECT_EQ(total, p.parameter_count());
}

TEST(Encoder, InitIsSeeded) {
  Rng a(4), b(4), c(5);
  const Encoder x(init_encoder(tiny(), a));
  const Encoder y(init_encoder(tiny(), b));
  const Encoder z(init_encoder(tiny(), c));
  const Vector in = Vector::LinSpaced(5, -1, 1);
  EXPECT_EQ(x.embed(in, Branch::euclidean), y.embed(in, Branch::euclidean));
  EXPECT_NE(x.embed(in, Branch::euclidean), z.embed(in, Branch::euclidean));
}

TEST(Encoder, SharedHeadGivesSameOutputForBothBranches) {
  Rng rng(2);
  const Encoder e(init_encoder(tiny(), rng));
  const Vector in = Vector::LinSpaced(5, -1, 2);
  EXPECT_EQ(e.embed(in, Branch::euclidean), e.embed(in, Branch::hyperbolic));
  Rng rng2(2);
  const Encoder s(init_encoder(tiny(HeadMode::split), rng2));
  EXPECT_NE(s.embed(in, Branch::euclidean), s.embed(in, Branch::hyperbolic));
}

TEST(Encoder, BatchMatchesSingle) {
  Rng rng(3);
  const Encoder e(init_encoder(tiny(), rng));
  Matrix batch(5, 4);
  for (int i = 0; i < 4; ++i) batch.col(i) = normal_vector(rng, 5);
  const Matrix out = e.embed(batch, Branch::euclidean);
  for (int i = 0; i < 4; ++i) {
    EXPECT_TRUE(out.col(i).isApprox(e.embed(Vector(batch.col(i)), Branch::euclidean), 1e-14));
  }
}

TEST(Encoder, BackwardMatchesFiniteDifferences) {
  for (HeadMode head : {HeadMode::shared, HeadMode::split}) {
    Rng rng(10);
    const Encoder e(init_encoder(tiny(head), rng));
    Matrix x(5, 3);
    for (int i = 0; i < 3; ++i) x.col(i) = normal_vector(rng, 5);
    const Matrix w = Matrix::Random(3, 3);
    for (Branch branch : {Branch::euclidean, Branch::hyperbolic}) {
      const ForwardCache cache = e.forward(x, branch);
      const BackwardResult r = e.backward(cache, w);
      // Input gradient.
      for (int col = 0; col < 3; ++col) {
        const Vector fd = test::fd_gradient(
            [&](const Vector& v) {
              Matrix xx = x;
              xx.col(col) = v;
              return (e.embed(xx, branch).array() * w.array()).sum();
            },
            x.col(col));
        EXPECT_LT(test::relative_error(Vector(r.input_grad.col(col)), fd), 1e-7);
      }
      // Parameter gradient, flattened in span order.
      Encoder probe = e;
      std::vector<double*> slots;
      for (auto& s : probe.mutable_params().spans()) {
        for (double& v : s) slots.push_back(&v);
      }
      std::vector<double> analytic;
      for (const auto& s : r.grads.spans()) analytic.insert(analytic.end(), s.begin(), s.end());
      ASSERT_EQ(analytic.size(), slots.size());
      Vector a(static_cast<Eigen::Index>(slots.size())), fd(a.size());
      for (std::size_t i = 0; i < slots.size(); ++i) {
        const double saved = *slots[i];
        *slots[i] = saved + 1e-6;
        const double up = (probe.embed(x, branch).array() * w.array()).sum();
        *slots[i] = saved - 1e-6;
        const double down = (probe.embed(x, branch).array() * w.array()).sum();
        *slots[i] = saved;
        fd[static_cast<Eigen::Index>(i)] = (up - down) / 2e-6;
        a[static_cast<Eigen::Index>(i)] = analytic[i];
      }
      EXPECT_LT(test::relative_error(a, fd), 1e-7);
    }
  }
}

TEST(Encoder, StaleCacheIsRejected) {
  Rng rng(5);
  Encoder e(init_encoder(tiny(), rng));
  const Matrix x = Matrix::Ones(5, 2);
  const ForwardCache cache = e.forward(x, Branch::euclidean);
  e.mutable_params();
  EXPECT_THROW(e.backward(cache, Matrix::Ones(3, 2)), StaleCacheError);
  Encoder other = e;
  const ForwardCache fresh = e.forward(x, Branch::euclidean);
  EXPECT_THROW(other.backward(fresh, Matrix::Ones(3, 2)), StaleCacheError);
  EXPECT_THROW(e.backward(fresh, Matrix::Ones(2, 2)), std::invalid_argument);
  EXPECT_THROW(e.forward(Matrix::Ones(4, 2), Branch::euclidean), std::invalid_argument);
}

TEST(Encoder, SaveLoadIsBitExact) {
  Rng rng(6);
  const Encoder e(init_encoder(tiny(HeadMode::split), rng));
  std::stringstream io;
  e.save(io);
  const std::string bytes = io.str();
  std::istringstream in(bytes);
  const Encoder back = Encoder::load(in);
  std::stringstream again;
  back.save(again);
  EXPECT_EQ(again.str(), bytes);
  const Vector x = Vector::LinSpaced(5, 0, 1);
  EXPECT_EQ(back.embed(x, Branch::hyperbolic), e.embed(x, Branch::hyperbolic));
  for (std::size_t cut : {std::size_t{0}, std::size_t{8}, bytes.size() / 2, bytes.size() - 1}) {
    std::istringstream truncated(bytes.substr(0, cut));
    EXPECT_THROW(Encoder::load(truncated), CheckpointError) << cut;
  }
  std::string corrupt = bytes;
  corrupt[0] ^= 0x5a;
  std::istringstream bad(corrupt);
  EXPECT_THROW(Encoder::load(bad), CheckpointError);
}

TEST(Encoder, MomentumUpdate) {
  Rng rng(7);
  const Encoder base(init_encoder(tiny(), rng));
  Encoder m(init_encoder(tiny(), rng));
  const double before = m.params().trunk[0].weight(0, 0);
  const double target = base.params().trunk[0].weight(0, 0);
  m.momentum_update(base, 0.9);
  EXPECT_NEAR(m.params().trunk[0].weight(0, 0), 0.9 * before + 0.1 * target, 1e-15);
  Encoder copy = m;
  copy.momentum_update(base, 1.0);
  EXPECT_EQ(copy.params().trunk[0].weight, m.params().trunk[0].weight);
  copy.momentum_update(base, 0.0);
  EXPECT_EQ(copy.params().trunk[0].weight, base.params().trunk[0].weight);
  EXPECT_THROW(copy.momentum_update(base, 1.5), std::invalid_argument);
  Rng r2(1);
  const Encoder other(init_encoder(tiny(HeadMode::split), r2));
  EXPECT_THROW(copy.momentum_update(other, 0.5), std::invalid_argument);
}

TEST(Projection, EuclideanUnitNormAndVjp) {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const Vector v = normal_vector(rng, 4, 2.0);
    EXPECT_NEAR(project_euclidean(v).norm(), 1.0, 1e-15);
    const Vector g = normal_vector(rng, 4);
    const Vector fd = test::fd_gradient([&](const Vector& x) { return g.dot(project_euclidean(x)); }, v);
    EXPECT_LT(test::relative_error(project_euclidean_vjp(v, g), fd), 1e-7);
  }
  EXPECT_THROW(project_euclidean(Vector::Zero(3)), std::domain_error);
}

TEST(Projection, HyperbolicClipsAndStaysInBall) {
  const BallConfig cfg = make_ball(4.5, 1e-5, 3);
  Vector big = Vector::Zero(3);
  big[0] = 100.0;
  const HyperbolicProjection hp = project_hyperbolic_full(big, cfg);
  EXPECT_TRUE(hp.saturated);
  EXPECT_NEAR(hp.clipped.norm(), cfg.max_norm(), 1e-12);
  EXPECT_LT(hp.point().norm(), cfg.radius);
  const Vector small = Vector::Constant(3, 0.1);
  const HyperbolicProjection sp = project_hyperbolic_full(small, cfg);
  EXPECT_FALSE(sp.saturated);
  EXPECT_EQ(sp.clipped, small);
  EXPECT_TRUE(sp.point().isApprox(exp_map(Vector::Zero(3), small, cfg), 1e-14));
  Vector bad = small;
  bad[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(project_hyperbolic(bad, cfg), std::domain_error);
}

TEST(HeadMode, ParseRoundTrip) {
  EXPECT_EQ(parse_head_mode("shared"), HeadMode::shared);
  EXPECT_EQ(parse_head_mode(to_string(HeadMode::split)), HeadMode::split);
  EXPECT_THROW(parse_head_mode("both"), std::invalid_argument);
}

}  // namespace
}  // namespace hcl
