#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hcl/ball.hpp"
#include "hcl/encoder.hpp"
#include "hcl/hierarchy.hpp"
#include "hcl/synthetic_data.hpp"
#include "hcl/tree_embedding.hpp"

namespace hcl {

/// Scene norm ranking against object counts. Relevance is object count - 1.
struct NormAnalysis {
  std::vector<std::string> scene_ids;
  std::vector<double> norms;          // raw hyperbolic-head embedding of the whole scene
  std::vector<double> object_counts;
  double spearman = 0.0;              // norm vs object count
  double ndcg_norm = 0.0;
  double ndcg_entropy = 0.0;          // prototype class-probability entropy, descending
  double ndcg_borda = 0.0;            // Borda count of the two rankings
};

/// `cutoff` 0 means the full list. Prototypes for the entropy ranking are
/// fitted on the object crops of the same scenes.
NormAnalysis analyze_norms(const std::vector<SceneRecord>& scenes, const Encoder& encoder,
                           const BallConfig& ball, std::size_t cutoff,
                           double prototype_temperature);

struct OutOfContextAnalysis {
  std::size_t scenes_scored = 0;       // scenes with >= 2 objects
  std::size_t scenes_with_positives = 0;
  double map = 0.0;
  double random_baseline = 0.0;        // mean expected AP of a uniform ranking
  std::vector<std::vector<bool>> rankings;  // distance-descending positive flags
};

/// Throws std::invalid_argument when no scored scene has a planted object.
OutOfContextAnalysis analyze_out_of_context(const std::vector<SceneRecord>& scenes,
                                            const std::vector<GroundTruthRow>& ground_truth,
                                            const Encoder& encoder, const BallConfig& ball);

struct PrototypeAnalysis {
  std::size_t train_points = 0;
  std::size_t test_points = 0;
  std::size_t classes = 0;
  double accuracy = 0.0;
  double majority_baseline = 0.0;   // share of the most frequent test class
};

/// Object crops in scene order; even positions fit the prototypes, odd ones
/// are classified.
PrototypeAnalysis analyze_prototypes(const std::vector<SceneRecord>& scenes,
                                     const Encoder& encoder, const BallConfig& ball);

struct TreeSeedResult {
  std::uint64_t seed = 0;
  double hyperbolic_distortion = 0.0;
  double euclidean_distortion = 0.0;
};

struct TreeAnalysis {
  std::vector<TreeSeedResult> seeds;
  int hyperbolic_wins = 0;   // strictly lower distortion
};

/// Balanced binary tree of the given depth embedded under both geometries
/// with identical budgets; seeds are derived from `master_seed`.
TreeAnalysis analyze_tree(int depth, int dimension, double radius, int steps,
                          double learning_rate, int seeds, std::uint64_t master_seed);

}  // namespace hcl
