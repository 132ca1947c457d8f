#include <cmath>

#include <gtest/gtest.h>

#include "hcl/tree_embedding.hpp"

namespace hcl {
namespace {

TEST(WeightedTree, PathMetric) {
  const WeightedTree tree(4, {{0, 1, 1.0}, {1, 2, 2.5}, {1, 3, 0.5}});
  const Matrix& d = tree.distances();
  EXPECT_DOUBLE_EQ(d(0, 2), 3.5);
  EXPECT_DOUBLE_EQ(d(2, 3), 3.0);
  EXPECT_TRUE(d.isApprox(d.transpose()));
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      for (int k = 0; k < 4; ++k) EXPECT_LE(d(i, k), d(i, j) + d(j, k) + 1e-12);
    }
  }
}

TEST(WeightedTree, RejectsNonTrees) {
  EXPECT_THROW(WeightedTree(3, {{0, 1, 1.0}}), std::invalid_argument);
  EXPECT_THROW(WeightedTree(4, {{0, 1, 1.0}, {1, 0, 1.0}, {2, 3, 1.0}}),
               std::invalid_argument);
  EXPECT_THROW(WeightedTree(2, {{0, 1, 0.0}}), std::invalid_argument);
  EXPECT_THROW(WeightedTree(2, {{0, 2, 1.0}}), std::invalid_argument);
}

TEST(WeightedTree, BalancedBinaryShape) {
  const WeightedTree tree = WeightedTree::balanced_binary(4);
  EXPECT_EQ(tree.node_count(), 31);
  EXPECT_DOUBLE_EQ(tree.distances().maxCoeff(), 8.0);
}

TEST(EmbedTree, SingleEdgeEmbedsExactly) {
  const BallConfig cfg = make_ball(1.0, 1e-5, 2);
  TreeEmbeddingOptions options;
  options.seed = 3;
  const TreeEmbeddingReport report = embed_tree(WeightedTree::single_edge(1.7), cfg, options);
  const auto& pts = report.hyperbolic.points;
  EXPECT_NEAR(distance(pts[0], pts[1], cfg), 1.7, 1e-6);
  EXPECT_LT(report.hyperbolic.max_additive_distortion, 1e-6);
  EXPECT_LT(report.euclidean.max_additive_distortion, 1e-6);
  for (const Vector& p : pts) EXPECT_LE(p.norm(), cfg.max_norm());
}

// Least-squares Euclidean optimum for the 3-star by brute force: by symmetry
// the leaves sit at 120 degrees on a circle of radius a; scan a on a grid.
double euclidean_star_distortion_oracle() {
  double best_loss = INFINITY, best_a = 0.0;
  for (int i = 1; i <= 200000; ++i) {
    const double a = 2.0 * i / 200000.0;
    const double loss = 3.0 * std::pow(a - 1.0, 2) + 3.0 * std::pow(std::sqrt(3.0) * a - 2.0, 2);
    if (loss < best_loss) best_loss = loss, best_a = a;
  }
  return std::max(std::abs(best_a - 1.0), std::abs(std::sqrt(3.0) * best_a - 2.0));
}

TEST(EmbedTree, ThreeStarHyperbolicBeatsEuclidean) {
  const BallConfig cfg = make_ball(1.0, 1e-5, 2);
  const double oracle = euclidean_star_distortion_oracle();
  EXPECT_NEAR(oracle, 0.1160, 1e-3);
  const TreeEmbeddingReport report = embed_tree(WeightedTree::star(3), cfg, {});
  EXPECT_NEAR(report.euclidean.max_additive_distortion, oracle, 1e-3);
  EXPECT_LE(report.hyperbolic.max_additive_distortion,
            report.euclidean.max_additive_distortion);
}

TEST(EmbedTree, BinaryTreeHyperbolicBeatsEuclidean) {
  const BallConfig cfg = make_ball(1.0, 1e-5, 2);
  const WeightedTree tree = WeightedTree::balanced_binary(4);
  TreeEmbeddingOptions options;
  options.seed = 1;
  const TreeEmbeddingReport report = embed_tree(tree, cfg, options);
  EXPECT_LT(report.hyperbolic.max_additive_distortion,
            report.euclidean.max_additive_distortion);
  EXPECT_LT(report.hyperbolic.final_loss, report.euclidean.final_loss);
  for (const Vector& p : report.hyperbolic.points) EXPECT_LE(p.norm(), cfg.max_norm());
}

TEST(EmbedTree, DeterministicForSeed) {
  const BallConfig cfg = make_ball(1.0, 1e-5, 2);
  TreeEmbeddingOptions options;
  options.steps = 300;
  options.seed = 5;
  const auto a = embed_tree(WeightedTree::balanced_binary(2), cfg, options);
  const auto b = embed_tree(WeightedTree::balanced_binary(2), cfg, options);
  for (std::size_t i = 0; i < a.hyperbolic.points.size(); ++i) {
    EXPECT_EQ(a.hyperbolic.points[i], b.hyperbolic.points[i]);
    EXPECT_EQ(a.euclidean.points[i], b.euclidean.points[i]);
  }
}

}  // namespace
}  // namespace hcl
