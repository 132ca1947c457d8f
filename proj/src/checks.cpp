#include "hcl/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "hcl/ball.hpp"
#include "hcl/encoder.hpp"
#include "hcl/evaluation.hpp"
#include "hcl/objectives.hpp"
#include "hcl/random.hpp"

namespace hcl {

namespace {

CheckResult at_most(std::string name, double measured, double bound, std::string detail = {}) {
  return {std::move(name), measured <= bound, measured, bound, std::move(detail)};
}

CheckResult below(std::string name, double measured, double bound, std::string detail = {}) {
  return {std::move(name), measured < bound, measured, bound, std::move(detail)};
}

Vector random_in_ball(Rng& rng, int dim, double max_norm) {
  return uniform(rng, 0.0, max_norm) * random_unit_vector(rng, dim);
}

double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

// Fourth-order central differences; truncation O(h^4) allows a step large
// enough that round-off stays well below the 1e-6 tolerance.
Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                   double h = 1e-4) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    auto at = [&](double t) {
      Vector y = x;
      y[i] += t;
      return f(y);
    };
    g[i] = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
  }
  return g;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Oracle values: (1 - x^2/r^2)^2 / 4 with x the double nearest 4.5 - 1e-5,
// and the perpendicular ratio d(p,q) / (d(p,0) + d(0,q)) at |p| = |q| =
// 0.999 r, both from 50-digit evaluations of the closed forms.
constexpr double kBoundaryScale = 4.9382606306335662426787262e-12;
constexpr double kRatioAt999 = 0.95440065870503380;
// Bound fixed before implementation from the same evaluation, rounded down.
constexpr double kRatioThreshold = 0.9544;

}  // namespace

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(),
                     [](const CheckResult& r) { return r.passed; });
}

void print_checks(std::ostream& out, const std::vector<CheckResult>& results) {
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::setprecision(6);
  for (const CheckResult& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << " measured=" << r.measured
        << " bound=" << r.bound;
    if (!r.detail.empty()) out << " (" << r.detail << ")";
    out << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

std::vector<CheckResult> check_geometry(const CheckOptions& options) {
  std::vector<CheckResult> out;
  const auto start = std::chrono::steady_clock::now();
  Rng rng(derive_seed(options.seed, 101));
  double identity = 0.0, inverse = 0.0, self = 0.0, symmetry = 0.0, origin = 0.0;
  for (int i = 0; i < options.geometry_samples; ++i) {
    const int dim = 2 + static_cast<int>(uniform_index(rng, 7));
    const BallConfig cfg = make_ball(4.5, 1e-5, dim);
    const Vector p = random_in_ball(rng, dim, 0.999 * cfg.radius);
    const Vector q = random_in_ball(rng, dim, 0.999 * cfg.radius);
    const Vector zero = Vector::Zero(dim);
    identity = std::max(identity, (mobius_add(zero, q, cfg) - q).norm());
    inverse = std::max(inverse, mobius_add(-p, p, cfg).norm());
    self = std::max(self, distance(p, p, cfg));
    symmetry = std::max(symmetry, std::abs(distance(p, q, cfg) - distance(q, p, cfg)));
    const double closed = 2.0 * cfg.radius * std::atanh(q.norm() / cfg.radius);
    if (closed > 0.0) {
      origin = std::max(origin, std::abs(distance(zero, q, cfg) - closed) / closed);
    }
  }
  const std::string n = std::to_string(options.geometry_samples) + " samples";
  out.push_back(at_most("geometry.left_identity", identity, 1e-9, n));
  out.push_back(at_most("geometry.left_inverse", inverse, 1e-9, n));
  out.push_back(at_most("geometry.self_distance", self, 1e-9, n));
  out.push_back(at_most("geometry.symmetry", symmetry, 1e-9, n));
  out.push_back(at_most("geometry.origin_closed_form_rel", origin, 1e-12, n));
  out.push_back(below("geometry.runtime_seconds", seconds_since(start), 1.0));

  // RSGD scale at the clip boundary.
  {
    const BallConfig cfg = make_ball(4.5, 1e-5, 2);
    Vector edge = Vector::Zero(2);
    edge[0] = cfg.max_norm();
    const double scale = inverse_conformal_factor(edge, cfg);
    out.push_back(at_most("geometry.rsgd_scale_rel", std::abs(scale - kBoundaryScale) / kBoundaryScale,
                          1e-15, "r=4.5 eps=1e-5"));
    out.push_back(below("geometry.rsgd_scale_value", scale, 1e-11));
  }

  // Perpendicular distance ratio toward the boundary.
  {
    const BallConfig cfg = make_ball(4.5, 1e-5, 2);
    const double fractions[] = {0.1, 0.5, 0.9, 0.99, 0.999};
    double previous = 0.0, min_step = 1.0, last = 0.0;
    for (double f : fractions) {
      Vector p = Vector::Zero(2), q = Vector::Zero(2), o = Vector::Zero(2);
      p[0] = f * cfg.radius;
      q[1] = f * cfg.radius;
      last = distance(p, q, cfg) / (distance(p, o, cfg) + distance(o, q, cfg));
      min_step = std::min(min_step, last - previous);
      previous = last;
    }
    out.push_back({"geometry.ratio_increasing", min_step > 0.0, min_step, 0.0,
                   "smallest increase over 0.1r..0.999r"});
    out.push_back({"geometry.ratio_at_0.999r", last > kRatioThreshold, last, kRatioThreshold,
                   "must exceed"});
    out.push_back(at_most("geometry.ratio_oracle", std::abs(last - kRatioAt999), 1e-9));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

namespace {

Matrix unit_columns(Rng& rng, int dim, int n) {
  Matrix m(dim, n);
  for (int i = 0; i < n; ++i) m.col(i) = random_unit_vector(rng, dim);
  return m;
}

Matrix ball_columns(Rng& rng, int dim, int n, double max_norm) {
  Matrix m(dim, n);
  for (int i = 0; i < n; ++i) m.col(i) = random_in_ball(rng, dim, max_norm);
  return m;
}

std::vector<double> flatten(const EncoderParams& p) {
  std::vector<double> out;
  for (const auto& s : p.spans()) out.insert(out.end(), s.begin(), s.end());
  return out;
}

struct PathProblem {
  Matrix inputs;             // input x batch
  Matrix euc_keys;           // unit, emb x batch
  Matrix euc_negatives;      // unit
  Matrix hyp_positives;      // ball, emb x batch
  Matrix hyp_negatives;      // ball
  double temperature = 0.2;
  double lambda = 0.1;
  BallConfig ball;
};

// L = mean_i L_euc(i) + lambda * mean_i L_hyp(i) through the encoder.
double path_loss(const Encoder& enc, const PathProblem& pb) {
  const Matrix e = enc.embed(pb.inputs, Branch::euclidean);
  const Matrix h = enc.embed(pb.inputs, Branch::hyperbolic);
  const double b = static_cast<double>(pb.inputs.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < pb.inputs.cols(); ++i) {
    loss += euclidean_infonce(project_euclidean(e.col(i)), pb.euc_keys.col(i),
                              pb.euc_negatives, pb.temperature)
                .loss /
            b;
    loss += pb.lambda *
            hyperbolic_infonce(project_hyperbolic(h.col(i), pb.ball), pb.hyp_positives.col(i),
                               pb.hyp_negatives, pb.temperature, pb.ball)
                .loss /
            b;
  }
  return loss;
}

Vector path_gradient(const Encoder& enc, const PathProblem& pb) {
  const double b = static_cast<double>(pb.inputs.cols());
  const ForwardCache ce = enc.forward(pb.inputs, Branch::euclidean);
  const ForwardCache ch = enc.forward(pb.inputs, Branch::hyperbolic);
  Matrix ge(ce.output.rows(), ce.output.cols());
  Matrix gh(ch.output.rows(), ch.output.cols());
  for (Eigen::Index i = 0; i < pb.inputs.cols(); ++i) {
    const Vector z = project_euclidean(ce.output.col(i));
    const LossResult le =
        euclidean_infonce(z, pb.euc_keys.col(i), pb.euc_negatives, pb.temperature);
    ge.col(i) = project_euclidean_vjp(ce.output.col(i), le.grad) / b;
    const HyperbolicProjection hp = project_hyperbolic_full(ch.output.col(i), pb.ball);
    const LossResult lh = hyperbolic_infonce(hp.point(), pb.hyp_positives.col(i),
                                             pb.hyp_negatives, pb.temperature, pb.ball);
    gh.col(i) = (pb.lambda / b) * hp.clip_backward(hp.vjp_to_clipped(lh.grad), pb.ball);
  }
  EncoderParams grads = enc.backward(ce, ge).grads;
  grads.add_scaled(enc.backward(ch, gh).grads, 1.0);
  const std::vector<double> flat = flatten(grads);
  return Eigen::Map<const Vector>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

Vector path_fd(const Encoder& enc, const PathProblem& pb, double h = 1e-6) {
  Encoder probe = enc;
  std::vector<double*> slots;
  for (auto& s : probe.mutable_params().spans()) {
    for (double& v : s) slots.push_back(&v);
  }
  Vector g(static_cast<Eigen::Index>(slots.size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const double saved = *slots[i];
    auto at = [&](double t) {
      *slots[i] = saved + t;
      return path_loss(probe, pb);
    };
    g[static_cast<Eigen::Index>(i)] =
        (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
    *slots[i] = saved;
  }
  return g;
}

double encoder_path_worst(Rng& rng, HeadMode head, int configs, int& used) {
  double worst = 0.0;
  used = 0;
  for (int attempt = 0; used < configs && attempt < 20 * configs; ++attempt) {
    EncoderShape shape;
    shape.input_dim = 3 + static_cast<int>(uniform_index(rng, 4));
    shape.hidden = {4 + static_cast<int>(uniform_index(rng, 4)),
                    3 + static_cast<int>(uniform_index(rng, 4))};
    shape.embedding_dim = 2 + static_cast<int>(uniform_index(rng, 3));
    shape.head = head;
    Encoder enc(init_encoder(shape, rng));
    PathProblem pb;
    pb.ball = make_ball(4.5, 1e-5, shape.embedding_dim);
    pb.temperature = uniform(rng, 0.1, 1.0);
    pb.lambda = uniform(rng, 0.05, 1.0);
    const int batch = 1 + static_cast<int>(uniform_index(rng, 3));
    pb.inputs = Matrix(shape.input_dim, batch);
    for (int i = 0; i < batch; ++i) pb.inputs.col(i) = normal_vector(rng, shape.input_dim);
    // Keep raw hyperbolic outputs within 0.9 (r - eps), away from the clip kink.
    const Matrix raw = enc.embed(pb.inputs, Branch::hyperbolic);
    if (raw.colwise().norm().maxCoeff() > 0.9 * pb.ball.max_norm()) continue;
    // All-dead ReLU layers give a zero embedding, where normalization is undefined.
    if (enc.embed(pb.inputs, Branch::euclidean).colwise().norm().minCoeff() < 1e-3) continue;
    const int d = shape.embedding_dim;
    pb.euc_keys = unit_columns(rng, d, batch);
    pb.euc_negatives = unit_columns(rng, d, 6);
    pb.hyp_positives = ball_columns(rng, d, batch, 0.9 * pb.ball.max_norm());
    pb.hyp_negatives = ball_columns(rng, d, 6, 0.9 * pb.ball.max_norm());
    worst = std::max(worst, relative_error(path_gradient(enc, pb), path_fd(enc, pb)));
    ++used;
  }
  return worst;
}

}  // namespace

std::vector<CheckResult> check_gradients(const CheckOptions& options) {
  std::vector<CheckResult> out;
  const auto start = std::chrono::steady_clock::now();
  const int n = options.gradient_configs;
  const std::string count = std::to_string(n) + " configurations";
  // Saturated softmax configurations whose gradient is below what finite
  // differences can resolve are redrawn.
  constexpr double kResolvable = 1e-6;
  const std::string resolvable = " with |grad| >= 1e-6";

  {
    Rng rng(derive_seed(options.seed, 201));
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      const int dim = 2 + static_cast<int>(uniform_index(rng, 5));
      const BallConfig cfg = make_ball(uniform(rng, 0.5, 5.0), 1e-5, dim);
      const double lim = 0.9 * cfg.max_norm();
      const Vector p = random_in_ball(rng, dim, lim), q = random_in_ball(rng, dim, lim);
      const DistanceGradient g = grad_distance(p, q, cfg);
      worst = std::max(worst, relative_error(g.d_p, fd_gradient([&](const Vector& x) {
                                               return distance(x, q, cfg);
                                             }, p)));
      worst = std::max(worst, relative_error(g.d_q, fd_gradient([&](const Vector& x) {
                                               return distance(p, x, cfg);
                                             }, q)));
    }
    out.push_back(below("gradients.distance", worst, 1e-6, count));
  }
  {
    Rng rng(derive_seed(options.seed, 202));
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      const int dim = 2 + static_cast<int>(uniform_index(rng, 5));
      const BallConfig cfg = make_ball(4.5, 1e-5, dim);
      const Vector p = random_in_ball(rng, dim, 0.9 * cfg.max_norm());
      const Vector v = normal_vector(rng, dim, 1.0);
      const Vector w = normal_vector(rng, dim);
      const Vector analytic = grad_exp_map(p, v, cfg).vjp(w);
      const Vector fd = fd_gradient([&](const Vector& x) { return w.dot(exp_map(p, x, cfg)); }, v);
      worst = std::max(worst, relative_error(analytic, fd));
    }
    out.push_back(below("gradients.exp_map", worst, 1e-6, count));
  }
  {
    Rng rng(derive_seed(options.seed, 203));
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      const int dim = 2 + static_cast<int>(uniform_index(rng, 5));
      const BallConfig cfg = make_ball(4.5, 1e-5, dim);
      const Vector v = random_in_ball(rng, dim, 0.9 * cfg.max_norm());
      const Vector w = normal_vector(rng, dim);
      const HyperbolicProjection hp = project_hyperbolic_full(v, cfg);
      const Vector analytic = hp.clip_backward(hp.vjp_to_clipped(w), cfg);
      const Vector fd = fd_gradient(
          [&](const Vector& x) { return w.dot(project_hyperbolic(x, cfg)); }, v);
      worst = std::max(worst, relative_error(analytic, fd));
    }
    out.push_back(below("gradients.origin_projection", worst, 1e-6, count));
  }
  {
    Rng rng(derive_seed(options.seed, 204));
    double worst = 0.0;
    for (int accepted = 0; accepted < n;) {
      const int dim = 2 + static_cast<int>(uniform_index(rng, 6));
      const double tau = uniform(rng, 0.1, 1.0);
      const Vector z1 = random_unit_vector(rng, dim), z2 = random_unit_vector(rng, dim);
      const Matrix negs = unit_columns(rng, dim, 1 + static_cast<int>(uniform_index(rng, 12)));
      const Matrix extra = unit_columns(rng, dim, static_cast<int>(uniform_index(rng, 3)));
      const LossResult r = euclidean_infonce(z1, z2, negs, tau, extra);
      if (r.grad.norm() < kResolvable) continue;
      const Vector fd = fd_gradient(
          [&](const Vector& x) { return euclidean_infonce(x, z2, negs, tau, extra).loss; }, z1);
      worst = std::max(worst, relative_error(r.grad, fd));
      ++accepted;
    }
    out.push_back(below("gradients.euclidean_infonce", worst, 1e-6, count + resolvable));
  }
  {
    Rng rng(derive_seed(options.seed, 205));
    double worst = 0.0;
    for (int accepted = 0; accepted < n;) {
      const int dim = 2 + static_cast<int>(uniform_index(rng, 6));
      const BallConfig cfg = make_ball(uniform(rng, 1.0, 5.0), 1e-5, dim);
      const double lim = 0.9 * cfg.max_norm();
      const double tau = uniform(rng, 0.1, 1.0);
      const Vector z1 = random_in_ball(rng, dim, lim), z2 = random_in_ball(rng, dim, lim);
      const Matrix negs = ball_columns(rng, dim, 1 + static_cast<int>(uniform_index(rng, 12)), lim);
      const Matrix extra = ball_columns(rng, dim, static_cast<int>(uniform_index(rng, 3)), lim);
      const LossResult r = hyperbolic_infonce(z1, z2, negs, tau, cfg, extra);
      if (r.grad.norm() < kResolvable) continue;
      const Vector fd = fd_gradient(
          [&](const Vector& x) { return hyperbolic_infonce(x, z2, negs, tau, cfg, extra).loss; },
          z1);
      worst = std::max(worst, relative_error(r.grad, fd));
      ++accepted;
    }
    out.push_back(below("gradients.hyperbolic_infonce", worst, 1e-6, count + resolvable));
  }
  for (HeadMode head : {HeadMode::shared, HeadMode::split}) {
    Rng rng(derive_seed(options.seed, head == HeadMode::shared ? 206 : 207));
    int used = 0;
    const double worst = encoder_path_worst(rng, head, n, used);
    CheckResult r = below("gradients.encoder_to_loss_" + std::string(to_string(head)), worst,
                          1e-6, std::to_string(used) + " configurations");
    r.passed = r.passed && used >= n;
    out.push_back(std::move(r));
  }
  out.push_back(below("gradients.runtime_seconds", seconds_since(start), 30.0));
  return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

namespace {

double dcg_of(const std::vector<double>& gains) {
  double s = 0.0;
  for (std::size_t i = 0; i < gains.size(); ++i) {
    s += gains[i] / std::log2(static_cast<double>(i) + 2.0);
  }
  return s;
}

// Best DCG over every ordering of the gains.
double brute_force_idcg(std::vector<double> gains) {
  std::sort(gains.begin(), gains.end());
  double best = 0.0;
  do {
    best = std::max(best, dcg_of(gains));
  } while (std::next_permutation(gains.begin(), gains.end()));
  return best;
}

// Area under the stepwise precision-recall curve.
double pr_curve_ap(const std::vector<bool>& flags) {
  const double total = static_cast<double>(std::count(flags.begin(), flags.end(), true));
  double hits = 0.0, area = 0.0, recall_prev = 0.0;
  for (std::size_t k = 0; k < flags.size(); ++k) {
    if (flags[k]) hits += 1.0;
    const double precision = hits / static_cast<double>(k + 1);
    const double recall = hits / total;
    area += precision * (recall - recall_prev);
    recall_prev = recall;
  }
  return area;
}

// Mean AP over all orderings of n items with k positives.
double exhaustive_random_ap(int n, int k) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  double sum = 0.0;
  std::size_t count = 0;
  do {
    std::vector<bool> flags(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) flags[static_cast<std::size_t>(i)] = order[static_cast<std::size_t>(i)] < k;
    sum += average_precision(flags);
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  return sum / static_cast<double>(count);
}

}  // namespace

std::vector<CheckResult> check_metrics(const CheckOptions& options) {
  std::vector<CheckResult> out;
  Rng rng(derive_seed(options.seed, 301));
  const std::string cases = std::to_string(options.metric_cases) + " cases";

  double ndcg_gap = 0.0;
  int range_violations = 0, ideal_violations = 0;
  for (int c = 0; c < options.metric_cases; ++c) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 8));
    std::vector<std::string> ids;
    std::map<std::string, double> rel;
    std::vector<double> gains;
    const bool graded = uniform(rng, 0.0, 1.0) < 0.5;
    for (int i = 0; i < n; ++i) {
      const std::string id = "i" + std::to_string(i);
      const double g = graded ? static_cast<double>(uniform_index(rng, 4)) : uniform(rng, 0.0, 3.0);
      ids.push_back(id);
      rel[id] = g;
    }
    std::shuffle(ids.begin(), ids.end(), rng);
    for (const auto& id : ids) gains.push_back(rel[id]);
    const double value = ndcg(ids, rel);
    const double idcg = brute_force_idcg(gains);
    const double oracle = idcg == 0.0 ? 0.0 : dcg_of(gains) / idcg;
    ndcg_gap = std::max(ndcg_gap, std::abs(value - oracle));
    if (value < 0.0 || value > 1.0) ++range_violations;
    const bool sorted = std::is_sorted(gains.begin(), gains.end(), std::greater<>());
    const bool unit = std::abs(value - 1.0) < 1e-12;
    if (idcg > 0.0 && sorted != unit) ++ideal_violations;
  }
  out.push_back(at_most("metrics.ndcg_vs_oracle", ndcg_gap, 1e-12, cases + ", sizes 1..8"));
  out.push_back(at_most("metrics.ndcg_in_unit_interval", range_violations, 0.0));
  out.push_back(at_most("metrics.ndcg_one_iff_ideal", ideal_violations, 0.0));

  double ap_gap = 0.0;
  for (int c = 0; c < options.metric_cases; ++c) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 8));
    std::vector<bool> flags(static_cast<std::size_t>(n));
    for (auto&& f : flags) f = uniform(rng, 0.0, 1.0) < 0.4;
    flags[uniform_index(rng, flags.size())] = true;
    ap_gap = std::max(ap_gap, std::abs(average_precision(flags) - pr_curve_ap(flags)));
  }
  out.push_back(at_most("metrics.ap_vs_oracle", ap_gap, 1e-12, cases + ", sizes 1..8"));

  double expected_gap = 0.0;
  for (int n = 1; n <= 8; ++n) {
    for (int k = 1; k <= n; ++k) {
      expected_gap = std::max(expected_gap, std::abs(random_ranking_ap(static_cast<std::size_t>(n),
                                                                       static_cast<std::size_t>(k)) -
                                                     exhaustive_random_ap(n, k)));
    }
  }
  out.push_back(at_most("metrics.random_ap_vs_exhaustive", expected_gap, 1e-10, "all n<=8, k<=n"));

  {
    Rng shuffle_rng(derive_seed(options.seed, 302));
    std::vector<bool> base = {true, false, false, false};
    double sum = 0.0;
    for (int s = 0; s < options.shuffles; ++s) {
      std::vector<bool> flags = base;
      std::shuffle(flags.begin(), flags.end(), shuffle_rng);
      sum += average_precision(flags);
    }
    const double mean = sum / options.shuffles;
    const double analytic = (1.0 + 1.0 / 2 + 1.0 / 3 + 1.0 / 4) / 4.0;
    std::ostringstream d;
    d << std::setprecision(6) << "mean " << mean << " vs " << analytic << " over "
      << options.shuffles << " shuffles";
    out.push_back(at_most("metrics.random_ap_monte_carlo", std::abs(mean - analytic), 0.01, d.str()));
  }
  return out;
}

}  // namespace hcl
