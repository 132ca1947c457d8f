#include "hcl/tree_embedding.hpp"

#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

#include "hcl/optimizer.hpp"
#include "hcl/random.hpp"

namespace hcl {

WeightedTree::WeightedTree(int node_count, std::vector<TreeEdge> edges)
    : node_count_(node_count), edges_(std::move(edges)) {
  if (node_count_ < 1) {
    throw std::invalid_argument("tree needs at least one node");
  }
  if (static_cast<int>(edges_.size()) != node_count_ - 1) {
    throw std::invalid_argument("a tree on m nodes has exactly m - 1 edges");
  }
  std::vector<std::vector<std::pair<int, double>>> adjacency(node_count_);
  for (const TreeEdge& e : edges_) {
    if (e.u < 0 || e.v < 0 || e.u >= node_count_ || e.v >= node_count_ ||
        e.u == e.v) {
      throw std::invalid_argument("tree edge references an invalid node");
    }
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
      throw std::invalid_argument("tree edge weights must be positive");
    }
    adjacency[e.u].emplace_back(e.v, e.weight);
    adjacency[e.v].emplace_back(e.u, e.weight);
  }

  // m - 1 edges plus connectivity implies acyclic.
  distances_ = Matrix::Constant(node_count_, node_count_,
                                std::numeric_limits<double>::infinity());
  for (int source = 0; source < node_count_; ++source) {
    distances_(source, source) = 0.0;
    std::queue<int> frontier;
    frontier.push(source);
    while (!frontier.empty()) {
      const int at = frontier.front();
      frontier.pop();
      for (const auto& [next, w] : adjacency[at]) {
        if (std::isinf(distances_(source, next))) {
          distances_(source, next) = distances_(source, at) + w;
          frontier.push(next);
        }
      }
    }
  }
  if (!distances_.allFinite()) {
    throw std::invalid_argument("tree is not connected");
  }
}

WeightedTree WeightedTree::single_edge(double weight) {
  return WeightedTree(2, {{0, 1, weight}});
}

WeightedTree WeightedTree::star(int leaves, double weight) {
  std::vector<TreeEdge> edges;
  for (int i = 1; i <= leaves; ++i) edges.push_back({0, i, weight});
  return WeightedTree(leaves + 1, std::move(edges));
}

WeightedTree WeightedTree::balanced_binary(int depth, double weight) {
  if (depth < 0 || depth > 20) {
    throw std::invalid_argument("binary tree depth out of range");
  }
  const int m = (1 << (depth + 1)) - 1;
  std::vector<TreeEdge> edges;
  for (int child = 1; child < m; ++child) {
    edges.push_back({(child - 1) / 2, child, weight});
  }
  return WeightedTree(m, std::move(edges));
}

double max_additive_distortion(const Matrix& tree_distances,
                               const Matrix& embedded_distances) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < tree_distances.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < tree_distances.cols(); ++j) {
      worst = std::max(worst,
                       std::abs(tree_distances(i, j) - embedded_distances(i, j)));
    }
  }
  return worst;
}

namespace {

enum class Geometry { hyperbolic, euclidean };

double pair_distance(Geometry geometry, const Vector& a, const Vector& b,
                     const BallConfig& cfg) {
  if (geometry == Geometry::euclidean) return (a - b).norm();
  return distance_from_norms((a - b).squaredNorm(), a.squaredNorm(),
                             b.squaredNorm(), cfg);
}

Matrix pairwise(Geometry geometry, const std::vector<Vector>& points,
                const BallConfig& cfg) {
  const auto m = static_cast<Eigen::Index>(points.size());
  Matrix d = Matrix::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      d(i, j) = d(j, i) = pair_distance(geometry, points[i], points[j], cfg);
    }
  }
  return d;
}

// Loss and per-point Euclidean gradients of sum (d - d_T)^2.
double loss_and_gradient(Geometry geometry, const std::vector<Vector>& points,
                         const Matrix& target, const BallConfig& cfg,
                         std::vector<Vector>& grads) {
  const std::size_t m = points.size();
  for (auto& g : grads) g.setZero();
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const Vector diff = points[i] - points[j];
      const double sq = diff.squaredNorm();
      const double err =
          pair_distance(geometry, points[i], points[j], cfg) - target(i, j);
      loss += err * err;
      if (sq == 0.0) continue;
      if (geometry == Geometry::euclidean) {
        const Vector unit = diff / std::sqrt(sq);
        grads[i] += 2.0 * err * unit;
        grads[j] -= 2.0 * err * unit;
      } else {
        const double pi = points[i].squaredNorm();
        const double pj = points[j].squaredNorm();
        const double r2 = cfg.radius * cfg.radius;
        const double k = distance_gradient_coefficient(sq, pi, pj, cfg);
        grads[i] += 2.0 * err * k * (diff + (sq / (r2 - pi)) * points[i]);
        grads[j] += 2.0 * err * k * (-diff + (sq / (r2 - pj)) * points[j]);
      }
    }
  }
  return loss;
}

EmbeddingFit fit(Geometry geometry, const WeightedTree& tree,
                 std::vector<Vector> points, const BallConfig& cfg,
                 const TreeEmbeddingOptions& options) {
  const Matrix& target = tree.distances();
  const std::size_t m = points.size();
  std::vector<Vector> grads(m, Vector::Zero(cfg.dimension));
  // Per-node gradient averaging keeps one learning rate usable across sizes.
  const double step = options.learning_rate / std::max<double>(1.0, m - 1.0);
  const int tail_start = options.steps - std::max(1, options.steps / 10);
  double tail_loss = std::numeric_limits<double>::quiet_NaN();
  double loss = 0.0;

  const int ramp = static_cast<int>(options.ramp_fraction * options.steps);
  for (int it = 0; it < options.steps; ++it) {
    const double scale =
        it < ramp ? options.ramp_start + (1.0 - options.ramp_start) * it / ramp
                  : 1.0;
    loss = loss_and_gradient(geometry, points, scale * target, cfg, grads);
    if (it == tail_start) tail_loss = loss;
    for (std::size_t i = 0; i < m; ++i) {
      if (geometry == Geometry::hyperbolic) {
        points[i] = clip_to_ball(
            points[i] - step * rsgd_scale(grads[i], points[i], cfg), cfg);
      } else {
        points[i] -= step * grads[i];
      }
    }
  }

  EmbeddingFit out;
  out.final_loss = loss_and_gradient(geometry, points, target, cfg, grads);
  const Matrix embedded = pairwise(geometry, points, cfg);
  out.max_additive_distortion = max_additive_distortion(target, embedded);
  double total = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      total += std::abs(target(i, j) - embedded(i, j));
      ++pairs;
    }
  }
  out.mean_absolute_error = pairs > 0 ? total / pairs : 0.0;
  out.converged = std::isfinite(tail_loss) &&
                  std::abs(tail_loss - out.final_loss) <=
                      1e-6 * std::max(1.0, tail_loss);
  out.points = std::move(points);
  return out;
}

}  // namespace

TreeEmbeddingReport embed_tree(const WeightedTree& tree, const BallConfig& cfg,
                               const TreeEmbeddingOptions& options) {
  cfg.validate();
  if (options.steps < 1 || !(options.learning_rate > 0.0) ||
      !(options.init_fraction > 0.0) || !(options.init_fraction < 1.0)) {
    throw std::invalid_argument("invalid tree embedding options");
  }
  Rng rng(options.seed);
  std::vector<Vector> init;
  init.reserve(tree.node_count());
  for (int i = 0; i < tree.node_count(); ++i) {
    const double radius = options.init_fraction * cfg.radius * uniform(rng, 0.0, 1.0);
    init.push_back(radius * random_unit_vector(rng, cfg.dimension));
  }
  TreeEmbeddingReport report;
  report.hyperbolic = fit(Geometry::hyperbolic, tree, init, cfg, options);
  report.euclidean = fit(Geometry::euclidean, tree, init, cfg, options);
  return report;
}

}  // namespace hcl
