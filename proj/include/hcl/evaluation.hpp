#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hcl/ball.hpp"
#include "hcl/encoder.hpp"
#include "hcl/hierarchy.hpp"

namespace hcl {

// ---------------------------------------------------------------------------
// Rankings
// ---------------------------------------------------------------------------

struct IdVector {
  std::string id;
  Vector value;
};

/// Ids by descending Euclidean norm; ties by ascending id.
std::vector<std::string> rank_by_norm(const std::vector<IdVector>& items);

/// Ids by descending score; ties by ascending id.
std::vector<std::string> rank_by_score(const std::map<std::string, double>& scores);

/// DCG with gain = relevance and discount 1/log2(rank + 1), divided by the
/// DCG of the relevance-sorted order. All-zero relevance gives 0. The cutoff
/// truncates both lists.
double ndcg(const std::vector<std::string>& ranked,
            const std::map<std::string, double>& relevance,
            std::optional<std::size_t> cutoff = std::nullopt);

/// score(id) = (N - rank_A) + (N - rank_B) with 1-based ranks, descending,
/// ties by id.
std::vector<std::string> borda_ensemble(const std::vector<std::string>& a,
                                        const std::vector<std::string>& b);

/// Shannon entropy in nats. Throws unless entries are in [0, 1] and sum to 1
/// within 1e-6.
double entropy_indicator(const std::vector<double>& probabilities);

/// Spearman rank correlation with average ranks for ties. NaN when either
/// side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------------------
// Average precision
// ---------------------------------------------------------------------------

/// Flags of the objects in ranked order.
double average_precision(const std::vector<bool>& ranked_positive);

/// Mean AP over scenes with at least one positive. Throws when none has one.
double mean_average_precision(const std::vector<std::vector<bool>>& rankings);

/// Expected AP of a uniformly random ranking of n items with k positives.
double random_ranking_ap(std::size_t n, std::size_t k);

// ---------------------------------------------------------------------------
// Model-based analyses
// ---------------------------------------------------------------------------

/// Raw hyperbolic-head embedding of a crop feature.
Vector raw_embedding(const Encoder& encoder, const Vector& feature);

struct ObjectScore {
  std::size_t object = 0;
  double distance = 0.0;
};

/// For every object: d_D between the embedded object crop and the embedded
/// scene with that object masked out. Empty for scenes with fewer than two
/// objects.
std::vector<ObjectScore> out_of_context_scores(const SceneRecord& scene,
                                               const Encoder& encoder,
                                               const BallConfig& cfg);

/// Objects ordered by descending distance, ties by index.
std::vector<std::size_t> rank_objects(const std::vector<ObjectScore>& scores);

struct PrototypeFit {
  PoincarePoint point;
  int iterations = 0;
  bool converged = false;
};

/// Minimizer of the mean squared distance via Riemannian gradient descent
/// (exp-map retraction, step 0.5), stopping once the step is below `tol`.
PrototypeFit hyperbolic_centroid(const std::vector<PoincarePoint>& points,
                                 const BallConfig& cfg, double tol = 1e-8,
                                 int max_iterations = 2000);

struct Prototypes {
  std::vector<int> classes;           // ascending
  std::vector<PoincarePoint> points;  // one per class
};

/// Throws when a listed class has no point.
Prototypes fit_prototypes(const std::vector<PoincarePoint>& points,
                          const std::vector<int>& labels, const BallConfig& cfg);

/// Nearest prototype under d_D; ties by smaller class id.
int classify(const PoincarePoint& point, const Prototypes& prototypes,
             const BallConfig& cfg);

/// softmax(-d_D(point, prototype) / temperature) over prototypes.
std::vector<double> class_probabilities(const PoincarePoint& point,
                                        const Prototypes& prototypes,
                                        const BallConfig& cfg, double temperature);

// ---------------------------------------------------------------------------
// Results table
// ---------------------------------------------------------------------------

struct ResultRow {
  std::string metric;
  double value = 0.0;
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// Tab-separated with header metric, value, config_hash, seed.
void write_results(std::ostream& out, const std::vector<ResultRow>& rows);

}  // namespace hcl
