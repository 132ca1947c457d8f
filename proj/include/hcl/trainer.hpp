#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hcl/encoder.hpp"
#include "hcl/hierarchy.hpp"
#include "hcl/objectives.hpp"
#include "hcl/optimizer.hpp"
#include "hcl/synthetic_data.hpp"

namespace hcl {

struct TrainConfig {
  int batch_size = 128;
  int epochs = 20;
  /// Unset means 0.3 * batch_size / 256.
  std::optional<double> learning_rate;
  int warmup_epochs = 0;
  double sgd_momentum = 0.0;
  double weight_decay = 0.0;

  double lambda = 0.1;
  double temperature = 0.2;
  double radius = 4.5;
  double clip_epsilon = 1e-5;
  OptimizerMode optimizer = OptimizerMode::rsgd;
  HierarchyMode hierarchy = HierarchyMode::object_centric;
  SceneLossSpace scene_loss_space = SceneLossSpace::hyperbolic;

  EncoderShape encoder;  // input_dim is taken from the data
  double momentum = 0.999;
  std::size_t queue_size = 4096;
  std::size_t queue_warmup = kQueueWarmup;

  PairSampling sampling;
  ViewAugmentation augmentation;

  /// The collapse detector fires when every anchor of a batch is clipped
  /// and the hyperbolic gradient norm is below stall_ratio times its first
  /// active value.
  double stall_ratio = 1e-10;
  bool stop_on_stall = false;

  std::uint64_t seed = 0;

  double resolved_learning_rate() const;
  BallConfig ball() const;
  LossConfig loss() const;
  void validate() const;
};

/// Aggregates over one epoch. Loss means are over batches where the loss was
/// active (queues warm); NaN when none was.
struct EpochMetrics {
  int epoch = 0;
  std::uint64_t steps = 0;
  double learning_rate = 0.0;
  double loss_euclidean = 0.0;
  double loss_hyperbolic = 0.0;
  double loss_total = 0.0;
  int active_batches = 0;
  double object_norm = 0.0;        // raw hyperbolic-head embedding norms
  double scene_norm = 0.0;         // of region and whole-scene crops
  double object_ball_norm = 0.0;   // norms of the projected ball points
  double scene_ball_norm = 0.0;
  double saturated_fraction = 0.0; // anchors with |raw| > r - eps
  double rsgd_scale_mean = 0.0;
  double rsgd_scale_min = 0.0;
  double hyperbolic_grad_norm = 0.0;
  double euclidean_grad_norm = 0.0;
  bool stalled = false;

  std::string to_json() const;
};

struct StallState {
  double initial_grad_norm = 0.0;  // 0 until the hyperbolic loss first runs
  double last_ratio = 1.0;
  double min_ratio = 1.0;
  bool fired = false;
  int epoch = -1;
  std::uint64_t step = 0;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Embeddings of one batch, exposed for tests and diagnostics.
struct BatchTrace {
  std::vector<double> anchor_raw_norms;
  std::vector<bool> anchor_saturated;
  double hyperbolic_grad_norm = 0.0;
  double loss_euclidean = 0.0;
  double loss_hyperbolic = 0.0;
  bool euclidean_active = false;
  bool hyperbolic_active = false;
};

struct EpochAccumulator;

class Trainer {
 public:
  Trainer(std::vector<SceneRecord> scenes, TrainConfig cfg);

  const TrainConfig& config() const { return cfg_; }
  const std::vector<SceneRecord>& scenes() const { return scenes_; }
  std::size_t skipped_scenes() const { return skipped_; }

  const Encoder& base() const { return base_; }
  const Encoder& momentum_encoder() const { return momentum_; }
  const NegativeQueue& euclidean_queue() const { return euc_queue_; }
  const NegativeQueue& hyperbolic_queue() const { return hyp_queue_; }
  const StallState& stall() const { return stall_; }
  int epoch() const { return epoch_; }
  std::uint64_t step() const { return step_; }
  const std::vector<EpochMetrics>& history() const { return history_; }

  /// Runs one epoch and returns its metrics.
  EpochMetrics train_epoch();
  /// Runs until cfg.epochs (or a stall with stop_on_stall); `on_epoch` sees
  /// every record as it is produced.
  void train(const std::function<void(const EpochMetrics&)>& on_epoch = {});

  /// Full state: both encoders, optimizer buffers, queues, shuffle engine,
  /// counters, stall detector, and history.
  void save_snapshot(std::ostream& out) const;
  void save_snapshot(const std::filesystem::path& path) const;
  /// Validates everything before applying anything.
  void restore_snapshot(std::istream& in);
  void restore_snapshot(const std::filesystem::path& path);

  BatchTrace last_batch() const { return last_batch_; }

 private:
  void train_batch(const std::vector<std::size_t>& scene_ids,
                   EpochAccumulator& acc);

  std::vector<SceneRecord> scenes_;
  std::vector<std::vector<std::size_t>> usable_;
  std::vector<std::size_t> trainable_;
  std::size_t skipped_ = 0;
  TrainConfig cfg_;
  BallConfig ball_;
  LossConfig loss_;
  Encoder base_;
  Encoder momentum_;
  Sgd optimizer_;
  NegativeQueue euc_queue_;
  NegativeQueue hyp_queue_;
  Rng shuffle_rng_;
  int epoch_ = 0;
  std::uint64_t step_ = 0;
  StallState stall_;
  std::vector<EpochMetrics> history_;
  BatchTrace last_batch_;
};

/// Serialized TrainConfig (for manifests and snapshot compatibility checks).
std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& text);

/// FNV-1a, 64 bit.
std::uint64_t fnv1a(const std::string& bytes);

/// Loads only the base encoder and configuration from a snapshot.
struct ModelCheckpoint {
  TrainConfig config;
  Encoder encoder;
  int epoch = 0;
};
ModelCheckpoint load_model(const std::filesystem::path& path);
ModelCheckpoint load_model(std::istream& in);

}  // namespace hcl
