#include "hcl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace hcl {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

double TrainConfig::resolved_learning_rate() const {
  return learning_rate ? *learning_rate : 0.3 * batch_size / 256.0;
}

BallConfig TrainConfig::ball() const {
  return BallConfig{radius, clip_epsilon, encoder.embedding_dim};
}

LossConfig TrainConfig::loss() const {
  return LossConfig{temperature, lambda, scene_loss_space};
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  const double lr = resolved_learning_rate();
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("learning rate must be positive");
  }
  if (warmup_epochs < 0) throw std::invalid_argument("warmup_epochs must be >= 0");
  if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0)) {
    throw std::invalid_argument("sgd momentum must be in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (!(momentum >= 0.0 && momentum <= 1.0)) {
    throw std::invalid_argument("encoder momentum must be in [0, 1]");
  }
  if (queue_size < 1) throw std::invalid_argument("queue_size must be positive");
  if (!(stall_ratio > 0.0)) throw std::invalid_argument("stall_ratio must be positive");
  if (!(sampling.whole_scene_probability >= 0.0 &&
        sampling.whole_scene_probability <= 1.0)) {
    throw std::invalid_argument("whole_scene_probability must be in [0, 1]");
  }
  if (!(augmentation.noise_sigma >= 0.0) ||
      !(augmentation.dropout >= 0.0 && augmentation.dropout < 1.0)) {
    throw std::invalid_argument("invalid view augmentation");
  }
  ball().validate();
  loss().validate();
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

std::string config_to_json(const TrainConfig& c) {
  json j;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate ? json(*c.learning_rate) : json(nullptr);
  j["warmup_epochs"] = c.warmup_epochs;
  j["sgd_momentum"] = c.sgd_momentum;
  j["weight_decay"] = c.weight_decay;
  j["lambda"] = c.lambda;
  j["temperature"] = c.temperature;
  j["radius"] = c.radius;
  j["clip_epsilon"] = c.clip_epsilon;
  j["optimizer"] = std::string(to_string(c.optimizer));
  j["hierarchy"] = std::string(to_string(c.hierarchy));
  j["scene_loss_space"] = std::string(to_string(c.scene_loss_space));
  j["encoder"] = {{"input_dim", c.encoder.input_dim},
                  {"hidden", c.encoder.hidden},
                  {"embedding_dim", c.encoder.embedding_dim},
                  {"head", std::string(to_string(c.encoder.head))},
                  {"head_init_gain", c.encoder.head_init_gain}};
  j["momentum"] = c.momentum;
  j["queue_size"] = c.queue_size;
  j["queue_warmup"] = c.queue_warmup;
  j["sampling"] = {{"whole_scene_probability", c.sampling.whole_scene_probability},
                   {"scene_negatives", c.sampling.scene_negatives},
                   {"region_min_extra", c.sampling.region.min_extra},
                   {"region_max_extra", c.sampling.region.max_extra},
                   {"expand_target", c.sampling.expansion.target_side},
                   {"jitter_low", c.sampling.expansion.jitter_low},
                   {"jitter_high", c.sampling.expansion.jitter_high}};
  j["augmentation"] = {{"noise_sigma", c.augmentation.noise_sigma},
                       {"dropout", c.augmentation.dropout}};
  j["stall_ratio"] = c.stall_ratio;
  j["stop_on_stall"] = c.stop_on_stall;
  j["seed"] = c.seed;
  return j.dump();
}

TrainConfig config_from_json(const std::string& text) {
  const json j = json::parse(text);
  TrainConfig c;
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  if (!j.at("learning_rate").is_null()) c.learning_rate = j.at("learning_rate").get<double>();
  c.warmup_epochs = j.at("warmup_epochs").get<int>();
  c.sgd_momentum = j.at("sgd_momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.temperature = j.at("temperature").get<double>();
  c.radius = j.at("radius").get<double>();
  c.clip_epsilon = j.at("clip_epsilon").get<double>();
  c.optimizer = parse_optimizer_mode(j.at("optimizer").get<std::string>());
  c.hierarchy = parse_hierarchy_mode(j.at("hierarchy").get<std::string>());
  c.scene_loss_space = parse_scene_loss_space(j.at("scene_loss_space").get<std::string>());
  const json& e = j.at("encoder");
  c.encoder.input_dim = e.at("input_dim").get<int>();
  c.encoder.hidden = e.at("hidden").get<std::vector<int>>();
  c.encoder.embedding_dim = e.at("embedding_dim").get<int>();
  c.encoder.head = parse_head_mode(e.at("head").get<std::string>());
  c.encoder.head_init_gain = e.at("head_init_gain").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.queue_size = j.at("queue_size").get<std::size_t>();
  c.queue_warmup = j.at("queue_warmup").get<std::size_t>();
  const json& s = j.at("sampling");
  c.sampling.whole_scene_probability = s.at("whole_scene_probability").get<double>();
  c.sampling.scene_negatives = s.at("scene_negatives").get<bool>();
  c.sampling.region.min_extra = s.at("region_min_extra").get<int>();
  c.sampling.region.max_extra = s.at("region_max_extra").get<int>();
  c.sampling.expansion.target_side = s.at("expand_target").get<double>();
  c.sampling.expansion.jitter_low = s.at("jitter_low").get<double>();
  c.sampling.expansion.jitter_high = s.at("jitter_high").get<double>();
  const json& a = j.at("augmentation");
  c.augmentation.noise_sigma = a.at("noise_sigma").get<double>();
  c.augmentation.dropout = a.at("dropout").get<double>();
  c.stall_ratio = j.at("stall_ratio").get<double>();
  c.stop_on_stall = j.at("stop_on_stall").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::string EpochMetrics::to_json() const {
  json j;
  j["epoch"] = epoch;
  j["steps"] = steps;
  j["learning_rate"] = learning_rate;
  j["loss_euclidean"] = number_or_null(loss_euclidean);
  j["loss_hyperbolic"] = number_or_null(loss_hyperbolic);
  j["loss_total"] = number_or_null(loss_total);
  j["active_batches"] = active_batches;
  j["object_norm"] = number_or_null(object_norm);
  j["scene_norm"] = number_or_null(scene_norm);
  j["object_ball_norm"] = number_or_null(object_ball_norm);
  j["scene_ball_norm"] = number_or_null(scene_ball_norm);
  j["saturated_fraction"] = number_or_null(saturated_fraction);
  j["rsgd_scale_mean"] = number_or_null(rsgd_scale_mean);
  j["rsgd_scale_min"] = number_or_null(rsgd_scale_min);
  j["hyperbolic_grad_norm"] = number_or_null(hyperbolic_grad_norm);
  j["euclidean_grad_norm"] = number_or_null(euclidean_grad_norm);
  j["stalled"] = stalled;
  return j.dump();
}

namespace {

EpochMetrics metrics_from_json(const std::string& text) {
  const json j = json::parse(text);
  EpochMetrics m;
  m.epoch = j.at("epoch").get<int>();
  m.steps = j.at("steps").get<std::uint64_t>();
  m.learning_rate = j.at("learning_rate").get<double>();
  m.loss_euclidean = number_from(j.at("loss_euclidean"));
  m.loss_hyperbolic = number_from(j.at("loss_hyperbolic"));
  m.loss_total = number_from(j.at("loss_total"));
  m.active_batches = j.at("active_batches").get<int>();
  m.object_norm = number_from(j.at("object_norm"));
  m.scene_norm = number_from(j.at("scene_norm"));
  m.object_ball_norm = number_from(j.at("object_ball_norm"));
  m.scene_ball_norm = number_from(j.at("scene_ball_norm"));
  m.saturated_fraction = number_from(j.at("saturated_fraction"));
  m.rsgd_scale_mean = number_from(j.at("rsgd_scale_mean"));
  m.rsgd_scale_min = number_from(j.at("rsgd_scale_min"));
  m.hyperbolic_grad_norm = number_from(j.at("hyperbolic_grad_norm"));
  m.euclidean_grad_norm = number_from(j.at("euclidean_grad_norm"));
  m.stalled = j.at("stalled").get<bool>();
  return m;
}

Eigen::Index feature_dim_of(const std::vector<SceneRecord>& scenes) {
  for (const SceneRecord& s : scenes) {
    for (const ObjectBox& b : s.objects) {
      if (b.feature.size() > 0) return b.feature.size();
    }
  }
  throw std::invalid_argument("training data carries no object features");
}

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kBatchStreamBase = 1ULL << 32;

}  // namespace

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(std::vector<SceneRecord> scenes, TrainConfig cfg)
    : scenes_(std::move(scenes)),
      cfg_(std::move(cfg)),
      optimizer_(SgdOptions{}),
      euc_queue_(1, 1, QueueKind::unit),
      hyp_queue_(1, 1, QueueKind::unit) {
  if (scenes_.empty()) throw std::invalid_argument("training data is empty");
  const Eigen::Index dim = feature_dim_of(scenes_);
  cfg_.encoder.input_dim = static_cast<int>(dim);
  cfg_.validate();
  for (const SceneRecord& s : scenes_) {
    for (const ObjectBox& b : s.objects) {
      if (b.feature.size() != dim) {
        throw std::invalid_argument("scene " + s.scene_id +
                                    " has an object feature of the wrong dimension");
      }
    }
    if (s.feature.size() != 0 && s.feature.size() != dim) {
      throw std::invalid_argument("scene " + s.scene_id +
                                  " has an offset of the wrong dimension");
    }
  }
  usable_.reserve(scenes_.size());
  for (std::size_t i = 0; i < scenes_.size(); ++i) {
    usable_.push_back(usable_objects(scenes_[i]));
    if (usable_.back().empty()) {
      ++skipped_;
    } else {
      trainable_.push_back(i);
    }
  }
  if (trainable_.empty()) {
    throw std::invalid_argument("no scene has an object that survives box filtering");
  }

  ball_ = cfg_.ball();
  loss_ = cfg_.loss();
  Rng init_rng(derive_seed(cfg_.seed, kInitStream));
  base_ = Encoder(init_encoder(cfg_.encoder, init_rng));
  momentum_ = Encoder(base_.params());
  optimizer_ = Sgd(SgdOptions{cfg_.resolved_learning_rate(), cfg_.sgd_momentum,
                              cfg_.weight_decay});
  const Eigen::Index emb = cfg_.encoder.embedding_dim;
  euc_queue_ = NegativeQueue(cfg_.queue_size, emb, QueueKind::unit);
  hyp_queue_ = cfg_.scene_loss_space == SceneLossSpace::hyperbolic
                   ? NegativeQueue(cfg_.queue_size, emb, QueueKind::ball, cfg_.radius)
                   : NegativeQueue(cfg_.queue_size, emb, QueueKind::unit);
  shuffle_rng_.seed(derive_seed(cfg_.seed, kShuffleStream));
}

namespace {

Matrix realize_all(const std::vector<SceneRecord>& scenes,
                   const std::vector<CropDescriptor>& crops, Eigen::Index dim,
                   const ViewAugmentation& aug) {
  Matrix x(dim, static_cast<Eigen::Index>(crops.size()));
  for (std::size_t i = 0; i < crops.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) = realize_crop(scenes[crops[i].scene], crops[i], aug);
  }
  return x;
}

struct Running {
  double sum = 0.0;
  std::size_t count = 0;
  void add(double v) {
    sum += v;
    ++count;
  }
  double mean() const {
    return count ? sum / static_cast<double>(count)
                 : std::numeric_limits<double>::quiet_NaN();
  }
};

}  // namespace

struct EpochAccumulator {
  Running loss_euc, loss_hyp, loss_total, object_norm, scene_norm, object_ball,
      scene_ball, saturated, scale, hyp_grad, euc_grad;
  double scale_min = std::numeric_limits<double>::infinity();
};

void Trainer::train_batch(const std::vector<std::size_t>& ids, EpochAccumulator& acc) {
  const Eigen::Index dim = cfg_.encoder.input_dim;
  const bool hyperbolic_space = cfg_.scene_loss_space == SceneLossSpace::hyperbolic;
  Rng rng(derive_seed(cfg_.seed, kBatchStreamBase + step_));

  PairBatch batch;
  for (std::size_t id : ids) {
    batch.append(sample_pairs(scenes_[id], id, usable_[id], cfg_.hierarchy, rng,
                              cfg_.sampling));
  }
  const auto B = static_cast<Eigen::Index>(ids.size());
  std::vector<CropDescriptor> flat_negatives;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> neg_range;
  for (auto& negs : batch.negatives) {
    neg_range.emplace_back(static_cast<Eigen::Index>(flat_negatives.size()),
                           static_cast<Eigen::Index>(negs.size()));
    flat_negatives.insert(flat_negatives.end(), negs.begin(), negs.end());
  }
  const ViewAugmentation& aug = cfg_.augmentation;

  // Euclidean branch.
  const ForwardCache query_cache =
      base_.forward(realize_all(scenes_, batch.euclidean_queries, dim, aug), Branch::euclidean);
  const Matrix key_raw =
      momentum_.embed(realize_all(scenes_, batch.euclidean_keys, dim, aug), Branch::euclidean);
  auto require_finite = [&](const Matrix& raw, const char* what) {
    if (!raw.allFinite() || !std::isfinite(raw.squaredNorm())) {
      std::ostringstream msg;
      msg << "training diverged at epoch " << epoch_ << " step " << step_ << ": non-finite "
          << what << " embeddings";
      throw DivergenceError(msg.str());
    }
  };
  require_finite(query_cache.output, "query");
  require_finite(key_raw, "key");
  Matrix keys(key_raw.rows(), B);
  for (Eigen::Index i = 0; i < B; ++i) keys.col(i) = project_euclidean(key_raw.col(i));

  const bool euc_active = euc_queue_.warm(cfg_.queue_warmup);
  Matrix grad_query = Matrix::Zero(query_cache.output.rows(), B);
  double loss_euc = 0.0;
  if (euc_active) {
    const Matrix& negs = euc_queue_.negatives();
    for (Eigen::Index i = 0; i < B; ++i) {
      const Vector q = project_euclidean(query_cache.output.col(i));
      const LossResult r = euclidean_infonce(q, keys.col(i), negs, cfg_.temperature);
      loss_euc += r.loss;
      grad_query.col(i) =
          project_euclidean_vjp(query_cache.output.col(i), r.grad) / static_cast<double>(B);
    }
    loss_euc /= static_cast<double>(B);
  }

  // Hyperbolic branch: anchors through the base encoder, positives and
  // in-scene negatives through the momentum encoder.
  const ForwardCache anchor_cache =
      base_.forward(realize_all(scenes_, batch.anchors, dim, aug), Branch::hyperbolic);
  const Matrix pos_raw =
      momentum_.embed(realize_all(scenes_, batch.positives, dim, aug), Branch::hyperbolic);
  Matrix neg_raw;
  if (!flat_negatives.empty()) {
    neg_raw = momentum_.embed(realize_all(scenes_, flat_negatives, dim, aug),
                              Branch::hyperbolic);
  }
  const Eigen::Index emb = anchor_cache.output.rows();
  auto to_space = [&](const Matrix& raw) {
    Matrix z(emb, raw.cols());
    for (Eigen::Index i = 0; i < raw.cols(); ++i) {
      z.col(i) = hyperbolic_space ? project_hyperbolic(raw.col(i), ball_)
                                  : project_euclidean(raw.col(i));
    }
    return z;
  };
  require_finite(anchor_cache.output, "anchor");
  require_finite(pos_raw, "positive");
  if (neg_raw.cols() > 0) require_finite(neg_raw, "negative");
  const Matrix pos = to_space(pos_raw);
  const Matrix neg = neg_raw.cols() > 0 ? to_space(neg_raw) : Matrix();

  std::vector<HyperbolicProjection> anchors;
  anchors.reserve(static_cast<std::size_t>(B));
  for (Eigen::Index i = 0; i < B; ++i) {
    anchors.push_back(project_hyperbolic_full(anchor_cache.output.col(i), ball_));
  }

  const bool hyp_active = cfg_.lambda > 0.0 && hyp_queue_.warm(cfg_.queue_warmup);
  Matrix grad_anchor = Matrix::Zero(emb, B);
  double loss_hyp = 0.0;
  last_batch_ = BatchTrace{};
  for (Eigen::Index i = 0; i < B; ++i) {
    const HyperbolicProjection& a = anchors[static_cast<std::size_t>(i)];
    last_batch_.anchor_raw_norms.push_back(a.raw.norm());
    last_batch_.anchor_saturated.push_back(a.saturated);
    if (hyperbolic_space) {
      const double s = inverse_conformal_factor(a.clipped, ball_);
      acc.scale.add(s);
      acc.scale_min = std::min(acc.scale_min, s);
    }
    acc.saturated.add(a.saturated ? 1.0 : 0.0);
  }
  if (hyp_active) {
    const Matrix& queue = hyp_queue_.negatives();
    for (Eigen::Index i = 0; i < B; ++i) {
      const HyperbolicProjection& a = anchors[static_cast<std::size_t>(i)];
      const auto [offset, count] = neg_range[static_cast<std::size_t>(i)];
      const Matrix extra = count > 0 ? Matrix(neg.middleCols(offset, count)) : Matrix();
      Vector g_raw;
      if (hyperbolic_space) {
        const LossResult r = hyperbolic_infonce(a.point(), pos.col(i), queue,
                                                cfg_.temperature, ball_, extra);
        loss_hyp += r.loss;
        Vector g = a.vjp_to_clipped(r.grad);
        if (cfg_.optimizer == OptimizerMode::rsgd) {
          g *= inverse_conformal_factor(a.clipped, ball_);
        }
        g_raw = a.clip_backward(g, ball_);
      } else {
        const Vector z = project_euclidean(a.raw);
        const LossResult r =
            euclidean_infonce(z, pos.col(i), queue, cfg_.temperature, extra);
        loss_hyp += r.loss;
        g_raw = project_euclidean_vjp(a.raw, r.grad);
      }
      grad_anchor.col(i) = (cfg_.lambda / static_cast<double>(B)) * g_raw;
    }
    loss_hyp /= static_cast<double>(B);
  }

  // Hard invariant: every ball point produced this batch is inside the ball.
  if (hyperbolic_space) {
    auto check = [&](const Matrix& z) {
      for (Eigen::Index i = 0; i < z.cols(); ++i) {
        if (!(z.col(i).norm() < ball_.radius)) {
          throw std::logic_error("hyperbolic representation left the ball");
        }
      }
    };
    check(pos);
    if (neg.cols() > 0) check(neg);
    for (const auto& a : anchors) {
      if (!(a.point().norm() < ball_.radius)) {
        throw std::logic_error("hyperbolic representation left the ball");
      }
    }
  }

  const double total =
      combined_loss(euc_active ? loss_euc : 0.0, hyp_active ? loss_hyp : 0.0, loss_);
  if (!std::isfinite(total) || !grad_query.allFinite() || !grad_anchor.allFinite()) {
    std::ostringstream msg;
    msg << "training diverged at epoch " << epoch_ << " step " << step_
        << ": L_euc=" << loss_euc << " L_hyp=" << loss_hyp
        << " max anchor norm=" << anchor_cache.output.colwise().norm().maxCoeff();
    throw DivergenceError(msg.str());
  }

  if (euc_active || hyp_active) {
    EncoderParams grads = base_.params().zeros_like();
    if (euc_active) grads.add_scaled(base_.backward(query_cache, grad_query).grads, 1.0);
    if (hyp_active) grads.add_scaled(base_.backward(anchor_cache, grad_anchor).grads, 1.0);
    optimizer_.step(base_.mutable_params().spans(), std::as_const(grads).spans());
  }
  momentum_.momentum_update(base_, cfg_.momentum);

  euc_queue_.push(keys);
  hyp_queue_.push(pos);

  // Collapse detector.
  const double hyp_grad = grad_anchor.norm();
  if (hyp_active) {
    if (stall_.initial_grad_norm == 0.0 && hyp_grad > 0.0) {
      stall_.initial_grad_norm = hyp_grad;
    }
    if (stall_.initial_grad_norm > 0.0) {
      stall_.last_ratio = hyp_grad / stall_.initial_grad_norm;
      stall_.min_ratio = std::min(stall_.min_ratio, stall_.last_ratio);
      const bool all_saturated =
          std::all_of(anchors.begin(), anchors.end(),
                      [](const HyperbolicProjection& a) { return a.saturated; });
      if (!stall_.fired && all_saturated && stall_.last_ratio < cfg_.stall_ratio) {
        stall_.fired = true;
        stall_.epoch = epoch_;
        stall_.step = step_;
      }
    }
    acc.hyp_grad.add(hyp_grad);
    acc.loss_hyp.add(loss_hyp);
  }
  if (euc_active) {
    acc.euc_grad.add(grad_query.norm());
    acc.loss_euc.add(loss_euc);
  }
  if (euc_active || hyp_active) acc.loss_total.add(total);

  // Norm statistics by crop kind.
  auto record = [&](const CropDescriptor& c, double raw, double ball) {
    if (c.kind == NodeKind::object) {
      acc.object_norm.add(raw);
      acc.object_ball.add(ball);
    } else {
      acc.scene_norm.add(raw);
      acc.scene_ball.add(ball);
    }
  };
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto& a = anchors[static_cast<std::size_t>(i)];
    record(batch.anchors[static_cast<std::size_t>(i)], a.raw.norm(),
           hyperbolic_space ? a.point().norm() : 1.0);
    record(batch.positives[static_cast<std::size_t>(i)], pos_raw.col(i).norm(),
           pos.col(i).norm());
  }

  last_batch_.hyperbolic_grad_norm = hyp_grad;
  last_batch_.loss_euclidean = loss_euc;
  last_batch_.loss_hyperbolic = loss_hyp;
  last_batch_.euclidean_active = euc_active;
  last_batch_.hyperbolic_active = hyp_active;
  ++step_;
}

EpochMetrics Trainer::train_epoch() {
  EpochMetrics m;
  m.epoch = epoch_ + 1;
  double lr = cfg_.resolved_learning_rate();
  if (epoch_ < cfg_.warmup_epochs) {
    lr *= static_cast<double>(epoch_ + 1) / (cfg_.warmup_epochs + 1);
  }
  optimizer_.set_learning_rate(lr);
  m.learning_rate = lr;

  std::vector<std::size_t> order = trainable_;
  std::shuffle(order.begin(), order.end(), shuffle_rng_);

  EpochAccumulator acc;
  const auto bs = static_cast<std::size_t>(cfg_.batch_size);
  const std::uint64_t first_step = step_;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::vector<std::size_t> ids(
        order.begin() + static_cast<std::ptrdiff_t>(start),
        order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bs)));
    train_batch(ids, acc);
    if (cfg_.stop_on_stall && stall_.fired) break;
  }

  m.steps = step_ - first_step;
  m.loss_euclidean = acc.loss_euc.mean();
  m.loss_hyperbolic = acc.loss_hyp.mean();
  m.loss_total = acc.loss_total.mean();
  m.active_batches = static_cast<int>(acc.loss_total.count);
  m.object_norm = acc.object_norm.mean();
  m.scene_norm = acc.scene_norm.mean();
  m.object_ball_norm = acc.object_ball.mean();
  m.scene_ball_norm = acc.scene_ball.mean();
  m.saturated_fraction = acc.saturated.mean();
  m.rsgd_scale_mean = acc.scale.mean();
  m.rsgd_scale_min = acc.scale.count ? acc.scale_min
                                     : std::numeric_limits<double>::quiet_NaN();
  m.hyperbolic_grad_norm = acc.hyp_grad.mean();
  m.euclidean_grad_norm = acc.euc_grad.mean();
  m.stalled = stall_.fired;
  ++epoch_;
  history_.push_back(m);
  return m;
}

void Trainer::train(const std::function<void(const EpochMetrics&)>& on_epoch) {
  while (epoch_ < cfg_.epochs) {
    const EpochMetrics m = train_epoch();
    if (on_epoch) on_epoch(m);
    if (cfg_.stop_on_stall && stall_.fired) break;
  }
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

constexpr std::uint64_t kSnapshotMagic = 0x3150414e534c4348ULL;  // "HCLSNAP1"
constexpr std::uint64_t kSnapshotVersion = 1;

// Fields that must agree between a snapshot and the trainer restoring it.
// Epoch count and the stop flag may change on resume.
std::string compatibility_key(TrainConfig c) {
  c.epochs = 0;
  c.stop_on_stall = false;
  return config_to_json(c);
}

std::string read_payload(std::istream& in) {
  if (binary::read_u64(in) != kSnapshotMagic) {
    throw CheckpointError("not a training snapshot");
  }
  const std::uint64_t version = binary::read_u64(in);
  if (version != kSnapshotVersion) {
    throw CheckpointError("unsupported snapshot version " + std::to_string(version));
  }
  const std::uint64_t size = binary::read_u64(in);
  const std::uint64_t checksum = binary::read_u64(in);
  if (size > (1ULL << 34)) throw CheckpointError("implausible snapshot size");
  std::string payload(size, '\0');
  if (size > 0 && !in.read(payload.data(), static_cast<std::streamsize>(size))) {
    throw CheckpointError("snapshot is truncated");
  }
  if (fnv1a(payload) != checksum) throw CheckpointError("snapshot checksum mismatch");
  return payload;
}

void write_stall(std::ostream& out, const StallState& s) {
  binary::write_doubles(out, &s.initial_grad_norm, 1);
  binary::write_doubles(out, &s.last_ratio, 1);
  binary::write_doubles(out, &s.min_ratio, 1);
  binary::write_u64(out, s.fired ? 1 : 0);
  binary::write_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(s.epoch)));
  binary::write_u64(out, s.step);
}

StallState read_stall(std::istream& in) {
  StallState s;
  binary::read_doubles(in, &s.initial_grad_norm, 1);
  binary::read_doubles(in, &s.last_ratio, 1);
  binary::read_doubles(in, &s.min_ratio, 1);
  s.fired = binary::read_u64(in) != 0;
  s.epoch = static_cast<int>(static_cast<std::int64_t>(binary::read_u64(in)));
  s.step = binary::read_u64(in);
  return s;
}

}  // namespace

void Trainer::save_snapshot(std::ostream& out) const {
  std::ostringstream body(std::ios::binary);
  binary::write_string(body, config_to_json(cfg_));
  binary::write_u64(body, static_cast<std::uint64_t>(epoch_));
  binary::write_u64(body, step_);
  binary::write_string(body, rng_state(shuffle_rng_));
  base_.save(body);
  momentum_.save(body);
  const auto& velocity = optimizer_.velocity();
  binary::write_u64(body, velocity.size());
  for (const auto& v : velocity) {
    binary::write_u64(body, v.size());
    binary::write_doubles(body, v.data(), v.size());
  }
  euc_queue_.save(body);
  hyp_queue_.save(body);
  write_stall(body, stall_);
  binary::write_u64(body, history_.size());
  for (const EpochMetrics& m : history_) binary::write_string(body, m.to_json());

  const std::string payload = body.str();
  binary::write_u64(out, kSnapshotMagic);
  binary::write_u64(out, kSnapshotVersion);
  binary::write_u64(out, payload.size());
  binary::write_u64(out, fnv1a(payload));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

void Trainer::save_snapshot(const std::filesystem::path& path) const {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    save_snapshot(out);
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void Trainer::restore_snapshot(std::istream& in) {
  std::istringstream body(read_payload(in), std::ios::binary);
  try {
    const TrainConfig saved = config_from_json(binary::read_string(body));
    if (compatibility_key(saved) != compatibility_key(cfg_)) {
      throw CheckpointError("snapshot was written with a different configuration");
    }
    const auto epoch = static_cast<int>(binary::read_u64(body));
    const std::uint64_t step = binary::read_u64(body);
    Rng shuffle;
    set_rng_state(shuffle, binary::read_string(body));
    Encoder base = Encoder::load(body);
    Encoder mom = Encoder::load(body);
    if (!shapes_match(base.params(), base_.params()) ||
        !shapes_match(mom.params(), base_.params())) {
      throw CheckpointError("snapshot encoder shape does not match configuration");
    }
    const std::uint64_t nv = binary::read_u64(body);
    if (nv != 0 && nv != base_.params().spans().size()) {
      throw CheckpointError("snapshot optimizer state does not match the encoder");
    }
    std::vector<std::vector<double>> velocity(nv);
    const auto spans = base_.params().spans();
    for (std::uint64_t i = 0; i < nv; ++i) {
      const std::uint64_t n = binary::read_u64(body);
      if (n != spans[i].size()) throw CheckpointError("optimizer buffer size mismatch");
      velocity[i].resize(n);
      binary::read_doubles(body, velocity[i].data(), n);
    }
    NegativeQueue euc = euc_queue_;
    NegativeQueue hyp = hyp_queue_;
    euc.load(body);
    hyp.load(body);
    const StallState stall = read_stall(body);
    const std::uint64_t nh = binary::read_u64(body);
    if (nh > 1u << 20) throw CheckpointError("implausible history length");
    std::vector<EpochMetrics> history;
    for (std::uint64_t i = 0; i < nh; ++i) {
      history.push_back(metrics_from_json(binary::read_string(body)));
    }
    if (body.peek() != std::char_traits<char>::eof()) {
      throw CheckpointError("snapshot has trailing data");
    }
    // Everything parsed; apply.
    epoch_ = epoch;
    step_ = step;
    shuffle_rng_ = shuffle;
    base_ = base;
    momentum_ = mom;
    optimizer_.set_velocity(std::move(velocity));
    euc_queue_ = std::move(euc);
    hyp_queue_ = std::move(hyp);
    stall_ = stall;
    history_ = std::move(history);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt snapshot metadata: ") + e.what());
  }
}

void Trainer::restore_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  restore_snapshot(in);
}

ModelCheckpoint load_model(std::istream& in) {
  std::istringstream body(read_payload(in), std::ios::binary);
  try {
    ModelCheckpoint out;
    out.config = config_from_json(binary::read_string(body));
    out.epoch = static_cast<int>(binary::read_u64(body));
    binary::read_u64(body);
    binary::read_string(body);
    out.encoder = Encoder::load(body);
    return out;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt snapshot metadata: ") + e.what());
  }
}

ModelCheckpoint load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_model(in);
}

}  // namespace hcl
