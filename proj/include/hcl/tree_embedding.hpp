#pragma once

#include <cstdint>
#include <vector>

#include "hcl/ball.hpp"

namespace hcl {

struct TreeEdge {
  int u = 0;
  int v = 0;
  double weight = 1.0;
};

/// A finite tree with positive edge weights. The constructor rejects graphs
/// that are disconnected, cyclic, or carry non-positive weights.
class WeightedTree {
 public:
  WeightedTree(int node_count, std::vector<TreeEdge> edges);

  int node_count() const { return node_count_; }
  const std::vector<TreeEdge>& edges() const { return edges_; }

  /// Path-length metric d_T, node_count x node_count.
  const Matrix& distances() const { return distances_; }

  static WeightedTree single_edge(double weight);
  static WeightedTree star(int leaves, double weight = 1.0);
  /// Complete binary tree with 2^(depth+1) - 1 nodes and unit weights.
  static WeightedTree balanced_binary(int depth, double weight = 1.0);

 private:
  int node_count_;
  std::vector<TreeEdge> edges_;
  Matrix distances_;
};

struct TreeEmbeddingOptions {
  int steps = 4000;
  double learning_rate = 0.2;
  std::uint64_t seed = 0;
  /// Initial points are drawn with norm at most init_fraction * r.
  double init_fraction = 0.1;
  /// Target distances grow linearly from ramp_start * d_T to d_T over the
  /// first ramp_fraction of the steps (same schedule for both geometries).
  double ramp_fraction = 0.5;
  double ramp_start = 0.05;
};

struct EmbeddingFit {
  std::vector<Vector> points;
  double max_additive_distortion = 0.0;
  double mean_absolute_error = 0.0;
  double final_loss = 0.0;
  /// Relative loss change over the last 10% of steps stayed below 1e-6.
  bool converged = false;
};

struct TreeEmbeddingReport {
  EmbeddingFit hyperbolic;
  EmbeddingFit euclidean;
};

/// Fits sum_{i<j} (d(f_i, f_j) - d_T(i, j))^2 in the ball (RSGD, clip after
/// every step) and in Euclidean space of the same dimension (plain gradient
/// descent) from the same initial points and step budget.
TreeEmbeddingReport embed_tree(const WeightedTree& tree, const BallConfig& cfg,
                               const TreeEmbeddingOptions& options);

/// max_{i<j} |d_T(i,j) - d(f_i, f_j)| for an arbitrary pairwise distance.
double max_additive_distortion(const Matrix& tree_distances,
                               const Matrix& embedded_distances);

}  // namespace hcl
