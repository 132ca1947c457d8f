#include "hcl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include "hcl/synthetic_data.hpp"

namespace hcl {

std::vector<std::string> rank_by_norm(const std::vector<IdVector>& items) {
  std::vector<std::pair<double, const std::string*>> keyed;
  keyed.reserve(items.size());
  for (const IdVector& it : items) keyed.emplace_back(it.value.norm(), &it.id);
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return *a.second < *b.second;
  });
  std::vector<std::string> out;
  out.reserve(keyed.size());
  for (const auto& k : keyed) out.push_back(*k.second);
  return out;
}

std::vector<std::string> rank_by_score(const std::map<std::string, double>& scores) {
  std::vector<std::pair<double, std::string>> keyed;
  for (const auto& [id, s] : scores) keyed.emplace_back(s, id);
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  for (auto& k : keyed) out.push_back(std::move(k.second));
  return out;
}

double ndcg(const std::vector<std::string>& ranked,
            const std::map<std::string, double>& relevance,
            std::optional<std::size_t> cutoff) {
  std::vector<double> gains;
  gains.reserve(ranked.size());
  for (const std::string& id : ranked) {
    const auto it = relevance.find(id);
    if (it == relevance.end()) {
      throw std::invalid_argument("no relevance for ranked id " + id);
    }
    if (!(it->second >= 0.0)) throw std::invalid_argument("relevance must be >= 0");
    gains.push_back(it->second);
  }
  const std::size_t n = std::min(gains.size(), cutoff.value_or(gains.size()));
  auto dcg = [n](const std::vector<double>& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += g[i] / std::log2(static_cast<double>(i) + 2.0);
    return s;
  };
  std::vector<double> ideal = gains;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg(ideal);
  if (idcg == 0.0) return 0.0;
  return std::min(1.0, dcg(gains) / idcg);
}

std::vector<std::string> borda_ensemble(const std::vector<std::string>& a,
                                        const std::vector<std::string>& b) {
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  if (sa.size() != a.size() || sb.size() != b.size() || sa != sb) {
    throw std::invalid_argument("Borda count needs two rankings of the same ids");
  }
  const double n = static_cast<double>(a.size());
  std::map<std::string, double> score;
  for (std::size_t i = 0; i < a.size(); ++i) score[a[i]] += n - static_cast<double>(i + 1);
  for (std::size_t i = 0; i < b.size(); ++i) score[b[i]] += n - static_cast<double>(i + 1);
  return rank_by_score(score);
}

double entropy_indicator(const std::vector<double>& p) {
  if (p.empty()) throw std::invalid_argument("empty distribution");
  double total = 0.0;
  double h = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("probability out of [0, 1]");
    total += v;
    if (v > 0.0) h -= v * std::log(v);
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw std::invalid_argument("probabilities do not sum to 1");
  }
  return h;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("spearman needs two equal-length samples of size >= 2");
  }
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

double average_precision(const std::vector<bool>& ranked_positive) {
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < ranked_positive.size(); ++i) {
    if (ranked_positive[i]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  if (hits == 0) throw std::invalid_argument("average precision needs a positive");
  return sum / static_cast<double>(hits);
}

double mean_average_precision(const std::vector<std::vector<bool>>& rankings) {
  double sum = 0.0;
  std::size_t scenes = 0;
  for (const auto& r : rankings) {
    if (std::find(r.begin(), r.end(), true) == r.end()) continue;
    sum += average_precision(r);
    ++scenes;
  }
  if (scenes == 0) throw std::invalid_argument("no scene has a positive object");
  return sum / static_cast<double>(scenes);
}

double random_ranking_ap(std::size_t n, std::size_t k) {
  if (k == 0 || k > n) throw std::invalid_argument("need 1 <= positives <= items");
  if (n == 1) return 1.0;
  // P(position i is positive) = k/n; given that, the expected number of
  // positives in the first i positions is 1 + (k-1)(i-1)/(n-1).
  double sum = 0.0;
  const double dn = static_cast<double>(n);
  const double dk = static_cast<double>(k);
  for (std::size_t i = 1; i <= n; ++i) {
    const double di = static_cast<double>(i);
    sum += (1.0 + (dk - 1.0) * (di - 1.0) / (dn - 1.0)) / di;
  }
  return sum / dn;
}

Vector raw_embedding(const Encoder& encoder, const Vector& feature) {
  return encoder.embed(feature, Branch::hyperbolic);
}

std::vector<ObjectScore> out_of_context_scores(const SceneRecord& scene,
                                               const Encoder& encoder,
                                               const BallConfig& cfg) {
  std::vector<ObjectScore> out;
  const std::size_t n = scene.objects.size();
  if (n < 2) return out;
  const Eigen::Index dim = encoder.params().input_dim();
  Matrix objects(dim, static_cast<Eigen::Index>(n));
  Matrix masked(dim, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    objects.col(static_cast<Eigen::Index>(i)) = crop_feature(scene, scene.objects[i].rect());
    masked.col(static_cast<Eigen::Index>(i)) = whole_scene_feature(scene, i);
  }
  const Matrix eo = encoder.embed(objects, Branch::hyperbolic);
  const Matrix em = encoder.embed(masked, Branch::hyperbolic);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    out.push_back({i, distance(project_hyperbolic(eo.col(c), cfg),
                               project_hyperbolic(em.col(c), cfg), cfg)});
  }
  return out;
}

std::vector<std::size_t> rank_objects(const std::vector<ObjectScore>& scores) {
  std::vector<ObjectScore> sorted = scores;
  std::stable_sort(sorted.begin(), sorted.end(), [](const ObjectScore& a, const ObjectScore& b) {
    if (a.distance != b.distance) return a.distance > b.distance;
    return a.object < b.object;
  });
  std::vector<std::size_t> out;
  for (const ObjectScore& s : sorted) out.push_back(s.object);
  return out;
}

PrototypeFit hyperbolic_centroid(const std::vector<PoincarePoint>& points,
                                 const BallConfig& cfg, double tol, int max_iterations) {
  if (points.empty()) throw std::invalid_argument("centroid of an empty set");
  PrototypeFit fit;
  Vector x = Vector::Zero(points.front().size());
  for (const auto& p : points) {
    require_in_ball(p, cfg, "centroid input");
    x += p;
  }
  x /= static_cast<double>(points.size());
  constexpr double kStep = 0.5;
  for (fit.iterations = 0; fit.iterations < max_iterations; ++fit.iterations) {
    Vector egrad = Vector::Zero(x.size());
    for (const auto& p : points) egrad += grad_squared_distance(x, p, cfg);
    egrad /= static_cast<double>(points.size());
    const Vector step = -kStep * inverse_conformal_factor(x, cfg) * egrad;
    // Riemannian length of the step.
    const double length = std::sqrt(conformal_factor(x, cfg)) * step.norm();
    if (length < tol) {
      fit.converged = true;
      break;
    }
    x = exp_map(x, step, cfg);
  }
  fit.point = std::move(x);
  return fit;
}

Prototypes fit_prototypes(const std::vector<PoincarePoint>& points,
                          const std::vector<int>& labels, const BallConfig& cfg) {
  if (points.size() != labels.size()) {
    throw std::invalid_argument("points and labels differ in length");
  }
  std::map<int, std::vector<PoincarePoint>> by_class;
  for (std::size_t i = 0; i < points.size(); ++i) by_class[labels[i]].push_back(points[i]);
  if (by_class.empty()) throw std::invalid_argument("no labeled points");
  Prototypes out;
  for (auto& [c, pts] : by_class) {
    out.classes.push_back(c);
    out.points.push_back(hyperbolic_centroid(pts, cfg).point);
  }
  return out;
}

int classify(const PoincarePoint& point, const Prototypes& prototypes,
             const BallConfig& cfg) {
  if (prototypes.classes.empty()) throw std::invalid_argument("no prototypes");
  int best = prototypes.classes[0];
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < prototypes.classes.size(); ++i) {
    const double d = distance(point, prototypes.points[i], cfg);
    if (d < best_d) {
      best_d = d;
      best = prototypes.classes[i];
    }
  }
  return best;
}

std::vector<double> class_probabilities(const PoincarePoint& point,
                                        const Prototypes& prototypes,
                                        const BallConfig& cfg, double temperature) {
  std::vector<double> logits;
  for (const auto& p : prototypes.points) logits.push_back(-distance(point, p, cfg) / temperature);
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) {
    l = std::exp(l - top);
    z += l;
  }
  for (double& l : logits) l /= z;
  return logits;
}

void write_results(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "metric\tvalue\tconfig_hash\tseed\n";
  const auto precision = out.precision();
  out << std::setprecision(17);
  for (const ResultRow& r : rows) {
    out << r.metric << '\t' << r.value << '\t' << r.config_hash << '\t' << r.seed << '\n';
  }
  out.precision(precision);
}

}  // namespace hcl
