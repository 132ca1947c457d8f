#pragma once

#include <cstddef>
#include <iosfwd>
#include <string_view>

#include "hcl/ball.hpp"

namespace hcl {

enum class SceneLossSpace { hyperbolic, euclidean };

std::string_view to_string(SceneLossSpace space);
SceneLossSpace parse_scene_loss_space(std::string_view text);

struct LossConfig {
  double temperature = 0.2;
  double lambda = 0.1;
  SceneLossSpace scene_loss_space = SceneLossSpace::hyperbolic;

  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  Vector grad;  // w.r.t. the anchor only; positives and negatives are detached
  double positive_probability = 0.0;
};

/// -log softmax of the positive logit z1.z2/tau against z1.z_n/tau for the
/// columns of `negatives` and `extra_negatives`.
LossResult euclidean_infonce(const Eigen::Ref<const Vector>& z1,
                             const Eigen::Ref<const Vector>& z2,
                             const Matrix& negatives, double temperature,
                             const Matrix& extra_negatives = Matrix());

/// Same with logits -d_D(z1, .)/tau.
LossResult hyperbolic_infonce(const Eigen::Ref<const Vector>& z1,
                              const Eigen::Ref<const Vector>& z2,
                              const Matrix& negatives, double temperature,
                              const BallConfig& cfg,
                              const Matrix& extra_negatives = Matrix());

/// L_euc + lambda * L_hyp.
double combined_loss(double euclidean_term, double hyperbolic_term,
                     const LossConfig& cfg);

enum class QueueKind { unit, ball };

/// Fixed-capacity FIFO of column vectors. Entries are returned oldest first.
class NegativeQueue {
 public:
  NegativeQueue(std::size_t capacity, Eigen::Index dimension, QueueKind kind,
                double ball_radius = 0.0);

  std::size_t capacity() const { return capacity_; }
  Eigen::Index dimension() const { return storage_.rows(); }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  bool warm(std::size_t threshold) const { return size_ >= std::min(threshold, capacity_); }
  QueueKind kind() const { return kind_; }

  /// Appends columns in order, evicting the oldest entries when full.
  void push(const Matrix& columns);
  /// Current contents, oldest first (dimension x size).
  const Matrix& negatives() const;

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  void validate_column(const Eigen::Ref<const Vector>& v) const;

  std::size_t capacity_;
  QueueKind kind_;
  double radius_;
  Matrix storage_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;  // next write slot
  mutable Matrix ordered_;
  mutable bool ordered_valid_ = false;
};

inline constexpr std::size_t kQueueWarmup = 256;

}  // namespace hcl
