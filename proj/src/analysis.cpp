#include "hcl/analysis.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <stdexcept>

#include "hcl/evaluation.hpp"

namespace hcl {

namespace {

Matrix columns(const std::vector<Vector>& features) {
  Matrix m(features.front().size(), static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = features[i];
  return m;
}

struct ObjectPoints {
  std::vector<PoincarePoint> points;
  std::vector<int> labels;
};

ObjectPoints embed_objects(const std::vector<SceneRecord>& scenes, const Encoder& encoder,
                           const BallConfig& ball) {
  std::vector<Vector> features;
  ObjectPoints out;
  for (const SceneRecord& s : scenes) {
    for (const ObjectBox& o : s.objects) {
      features.push_back(crop_feature(s, o.rect()));
      out.labels.push_back(o.class_id);
    }
  }
  if (features.empty()) throw std::invalid_argument("no objects to embed");
  const Matrix raw = encoder.embed(columns(features), Branch::hyperbolic);
  for (Eigen::Index i = 0; i < raw.cols(); ++i) {
    out.points.push_back(project_hyperbolic(raw.col(i), ball));
  }
  return out;
}

}  // namespace

NormAnalysis analyze_norms(const std::vector<SceneRecord>& scenes, const Encoder& encoder,
                           const BallConfig& ball, std::size_t cutoff,
                           double prototype_temperature) {
  if (scenes.size() < 2) throw std::invalid_argument("norm analysis needs >= 2 scenes");
  NormAnalysis out;
  std::vector<Vector> features;
  for (const SceneRecord& s : scenes) {
    features.push_back(whole_scene_feature(s));
    out.scene_ids.push_back(s.scene_id);
    out.object_counts.push_back(static_cast<double>(s.objects.size()));
  }
  const Matrix raw = encoder.embed(columns(features), Branch::hyperbolic);

  std::vector<IdVector> items;
  std::map<std::string, double> relevance;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const Vector v = raw.col(static_cast<Eigen::Index>(i));
    out.norms.push_back(v.norm());
    items.push_back({out.scene_ids[i], v});
    relevance[out.scene_ids[i]] = std::max(0.0, out.object_counts[i] - 1.0);
  }
  out.spearman = spearman(out.norms, out.object_counts);

  const std::optional<std::size_t> limit =
      cutoff == 0 ? std::nullopt : std::optional<std::size_t>(cutoff);
  const std::vector<std::string> by_norm = rank_by_norm(items);
  out.ndcg_norm = ndcg(by_norm, relevance, limit);

  const ObjectPoints objects = embed_objects(scenes, encoder, ball);
  const Prototypes prototypes = fit_prototypes(objects.points, objects.labels, ball);
  std::map<std::string, double> entropy;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const PoincarePoint p = project_hyperbolic(raw.col(static_cast<Eigen::Index>(i)), ball);
    entropy[out.scene_ids[i]] =
        entropy_indicator(class_probabilities(p, prototypes, ball, prototype_temperature));
  }
  const std::vector<std::string> by_entropy = rank_by_score(entropy);
  out.ndcg_entropy = ndcg(by_entropy, relevance, limit);
  out.ndcg_borda = ndcg(borda_ensemble(by_norm, by_entropy), relevance, limit);
  return out;
}

OutOfContextAnalysis analyze_out_of_context(const std::vector<SceneRecord>& scenes,
                                            const std::vector<GroundTruthRow>& ground_truth,
                                            const Encoder& encoder, const BallConfig& ball) {
  std::map<std::string, std::map<std::size_t, bool>> planted;
  for (const GroundTruthRow& r : ground_truth) planted[r.scene_id][r.object_index] = r.out_of_context;
  OutOfContextAnalysis out;
  double baseline = 0.0;
  for (const SceneRecord& s : scenes) {
    const std::vector<ObjectScore> scores = out_of_context_scores(s, encoder, ball);
    if (scores.empty()) continue;
    ++out.scenes_scored;
    const auto labels = planted.find(s.scene_id);
    std::vector<bool> flags;
    std::size_t positives = 0;
    for (std::size_t o : rank_objects(scores)) {
      bool positive = false;
      if (labels != planted.end()) {
        const auto it = labels->second.find(o);
        positive = it != labels->second.end() && it->second;
      }
      flags.push_back(positive);
      positives += positive ? 1 : 0;
    }
    if (positives == 0) continue;
    baseline += random_ranking_ap(flags.size(), positives);
    out.rankings.push_back(std::move(flags));
  }
  out.scenes_with_positives = out.rankings.size();
  out.map = mean_average_precision(out.rankings);
  out.random_baseline = baseline / static_cast<double>(out.scenes_with_positives);
  return out;
}

PrototypeAnalysis analyze_prototypes(const std::vector<SceneRecord>& scenes,
                                     const Encoder& encoder, const BallConfig& ball) {
  const ObjectPoints objects = embed_objects(scenes, encoder, ball);
  std::vector<PoincarePoint> train_points;
  std::vector<int> train_labels;
  std::map<int, std::size_t> test_counts;
  for (std::size_t i = 0; i < objects.points.size(); i += 2) {
    train_points.push_back(objects.points[i]);
    train_labels.push_back(objects.labels[i]);
  }
  if (objects.points.size() < 2) throw std::invalid_argument("prototype analysis needs >= 2 objects");
  const Prototypes prototypes = fit_prototypes(train_points, train_labels, ball);
  PrototypeAnalysis out;
  out.train_points = train_points.size();
  out.classes = prototypes.classes.size();
  std::size_t correct = 0;
  for (std::size_t i = 1; i < objects.points.size(); i += 2) {
    ++out.test_points;
    ++test_counts[objects.labels[i]];
    if (classify(objects.points[i], prototypes, ball) == objects.labels[i]) ++correct;
  }
  std::size_t majority = 0;
  for (const auto& [c, n] : test_counts) majority = std::max(majority, n);
  out.accuracy = static_cast<double>(correct) / static_cast<double>(out.test_points);
  out.majority_baseline = static_cast<double>(majority) / static_cast<double>(out.test_points);
  return out;
}

TreeAnalysis analyze_tree(int depth, int dimension, double radius, int steps,
                          double learning_rate, int seeds, std::uint64_t master_seed) {
  const WeightedTree tree = WeightedTree::balanced_binary(depth);
  const BallConfig ball = make_ball(radius, 1e-5, dimension);
  TreeAnalysis out;
  for (int i = 0; i < seeds; ++i) {
    TreeEmbeddingOptions options;
    options.steps = steps;
    options.learning_rate = learning_rate;
    options.seed = master_seed + static_cast<std::uint64_t>(i);
    const TreeEmbeddingReport report = embed_tree(tree, ball, options);
    out.seeds.push_back({options.seed, report.hyperbolic.max_additive_distortion,
                         report.euclidean.max_additive_distortion});
    if (report.hyperbolic.max_additive_distortion < report.euclidean.max_additive_distortion) {
      ++out.hyperbolic_wins;
    }
  }
  return out;
}

}  // namespace hcl
