#include "hcl/objectives.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "hcl/encoder.hpp"

namespace hcl {

std::string_view to_string(SceneLossSpace space) {
  return space == SceneLossSpace::euclidean ? "euclidean" : "hyperbolic";
}

SceneLossSpace parse_scene_loss_space(std::string_view text) {
  if (text == "hyperbolic") return SceneLossSpace::hyperbolic;
  if (text == "euclidean") return SceneLossSpace::euclidean;
  throw std::invalid_argument("unknown scene loss space: " + std::string(text));
}

void LossConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("temperature must be positive");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("lambda must be nonnegative");
  }
}

namespace {

void check_negatives(const Matrix& negatives, const Matrix& extra, Eigen::Index dim) {
  if (negatives.cols() + extra.cols() == 0) {
    throw std::invalid_argument("contrastive loss needs at least one negative");
  }
  if ((negatives.cols() > 0 && negatives.rows() != dim) ||
      (extra.cols() > 0 && extra.rows() != dim)) {
    throw std::invalid_argument("negative dimension does not match the anchor");
  }
}

// Softmax cross-entropy with the positive at logit index 0. Returns the loss
// and writes the softmax into `prob`.
double softmax_xent(const Vector& logits, Vector& prob) {
  const double top = logits.maxCoeff();
  prob = (logits.array() - top).exp().matrix();
  const double z = prob.sum();
  prob /= z;
  return std::log(z) + top - logits[0];
}

}  // namespace

LossResult euclidean_infonce(const Eigen::Ref<const Vector>& z1,
                             const Eigen::Ref<const Vector>& z2,
                             const Matrix& negatives, double temperature,
                             const Matrix& extra_negatives) {
  if (z2.size() != z1.size()) throw std::invalid_argument("positive dimension mismatch");
  check_negatives(negatives, extra_negatives, z1.size());
  const Eigen::Index n1 = negatives.cols();
  const Eigen::Index n2 = extra_negatives.cols();
  Vector logits(1 + n1 + n2);
  logits[0] = z1.dot(z2) / temperature;
  if (n1 > 0) logits.segment(1, n1) = negatives.transpose() * z1 / temperature;
  if (n2 > 0) logits.segment(1 + n1, n2) = extra_negatives.transpose() * z1 / temperature;
  Vector prob;
  LossResult out;
  out.loss = softmax_xent(logits, prob);
  out.positive_probability = prob[0];
  out.grad = (prob[0] - 1.0) * z2;
  if (n1 > 0) out.grad.noalias() += negatives * prob.segment(1, n1);
  if (n2 > 0) out.grad.noalias() += extra_negatives * prob.segment(1 + n1, n2);
  out.grad /= temperature;
  return out;
}

namespace {

// Distances from z to the columns of `points` and the gradient coefficients
// needed for d/dz.
void distances_to(const Eigen::Ref<const Vector>& z, double z_sq, const Matrix& points,
                  const BallConfig& cfg, Vector& dist, Vector& coef, Vector& sq) {
  const Eigen::Index n = points.cols();
  sq = (points.colwise() - z).colwise().squaredNorm().transpose();
  const Vector p_sq = points.colwise().squaredNorm().transpose();
  dist.resize(n);
  coef.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(p_sq[i] < cfg.radius * cfg.radius)) {
      throw DomainError("hyperbolic negative is not inside the ball");
    }
    dist[i] = distance_from_norms(sq[i], z_sq, p_sq[i], cfg);
    coef[i] = distance_gradient_coefficient(sq[i], z_sq, p_sq[i], cfg);
  }
}

}  // namespace

LossResult hyperbolic_infonce(const Eigen::Ref<const Vector>& z1,
                              const Eigen::Ref<const Vector>& z2,
                              const Matrix& negatives, double temperature,
                              const BallConfig& cfg, const Matrix& extra_negatives) {
  require_in_ball(z1, cfg, "anchor");
  require_in_ball(z2, cfg, "positive");
  check_negatives(negatives, extra_negatives, z1.size());
  const double z_sq = z1.squaredNorm();
  const double r2 = cfg.radius * cfg.radius;
  const Eigen::Index n1 = negatives.cols();
  const Eigen::Index n2 = extra_negatives.cols();

  Vector logits(1 + n1 + n2);
  const double pos_sq = (z1 - z2).squaredNorm();
  logits[0] = -distance_from_norms(pos_sq, z_sq, z2.squaredNorm(), cfg) / temperature;
  const double pos_coef =
      distance_gradient_coefficient(pos_sq, z_sq, z2.squaredNorm(), cfg);
  Vector d1, c1, s1, d2, c2, s2;
  if (n1 > 0) {
    distances_to(z1, z_sq, negatives, cfg, d1, c1, s1);
    logits.segment(1, n1) = -d1 / temperature;
  }
  if (n2 > 0) {
    distances_to(z1, z_sq, extra_negatives, cfg, d2, c2, s2);
    logits.segment(1 + n1, n2) = -d2 / temperature;
  }
  Vector prob;
  LossResult out;
  out.loss = softmax_xent(logits, prob);
  out.positive_probability = prob[0];

  // dL/dlogit_i = prob_i - [i = 0]; dlogit_i/dz1 = -grad d(z1, k_i) / tau with
  // grad d = coef * ((z1 - k) + (|z1 - k|^2 / (r^2 - |z1|^2)) z1).
  const double alpha = r2 - z_sq;
  double radial = 0.0;  // accumulated coefficient on z1
  Vector g = Vector::Zero(z1.size());
  auto accumulate = [&](const Matrix& points, const Vector& coef, const Vector& sq,
                        const Eigen::Ref<const Vector>& p) {
    const Vector w = p.cwiseProduct(coef);  // per-point weight
    g.noalias() -= points * w;
    const double wsum = w.sum();
    g += wsum * z1;
    radial += w.dot(sq) / alpha;
  };
  {
    const double w = (prob[0] - 1.0) * pos_coef;
    g += w * (z1 - z2);
    radial += w * pos_sq / alpha;
  }
  if (n1 > 0) accumulate(negatives, c1, s1, prob.segment(1, n1));
  if (n2 > 0) accumulate(extra_negatives, c2, s2, prob.segment(1 + n1, n2));
  g += radial * z1;
  out.grad = -g / temperature;
  return out;
}

double combined_loss(double euclidean_term, double hyperbolic_term,
                     const LossConfig& cfg) {
  if (cfg.lambda == 0.0) return euclidean_term;
  return euclidean_term + cfg.lambda * hyperbolic_term;
}

// ---------------------------------------------------------------------------
// Queue
// ---------------------------------------------------------------------------

NegativeQueue::NegativeQueue(std::size_t capacity, Eigen::Index dimension,
                             QueueKind kind, double ball_radius)
    : capacity_(capacity), kind_(kind), radius_(ball_radius) {
  if (capacity == 0) throw std::invalid_argument("queue capacity must be positive");
  if (dimension < 1) throw std::invalid_argument("queue dimension must be positive");
  if (kind == QueueKind::ball && !(ball_radius > 0.0)) {
    throw std::invalid_argument("ball queue needs a positive radius");
  }
  storage_ = Matrix::Zero(dimension, static_cast<Eigen::Index>(capacity));
}

void NegativeQueue::validate_column(const Eigen::Ref<const Vector>& v) const {
  if (!v.allFinite()) throw std::invalid_argument("queue entry is not finite");
  if (kind_ == QueueKind::unit) {
    if (std::abs(v.norm() - 1.0) > 1e-9) {
      throw std::invalid_argument("euclidean queue entries must be unit vectors");
    }
  } else if (!(v.norm() < radius_)) {
    throw DomainError("hyperbolic queue entries must lie inside the ball");
  }
}

void NegativeQueue::push(const Matrix& columns) {
  if (columns.cols() == 0) return;
  if (columns.rows() != storage_.rows()) {
    throw std::invalid_argument("queue entry dimension mismatch");
  }
  for (Eigen::Index c = 0; c < columns.cols(); ++c) validate_column(columns.col(c));
  for (Eigen::Index c = 0; c < columns.cols(); ++c) {
    storage_.col(static_cast<Eigen::Index>(cursor_)) = columns.col(c);
    cursor_ = (cursor_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
  }
  ordered_valid_ = false;
}

const Matrix& NegativeQueue::negatives() const {
  if (!ordered_valid_) {
    const auto n = static_cast<Eigen::Index>(size_);
    ordered_.resize(storage_.rows(), n);
    const std::size_t start = size_ < capacity_ ? 0 : cursor_;
    for (Eigen::Index i = 0; i < n; ++i) {
      ordered_.col(i) =
          storage_.col(static_cast<Eigen::Index>((start + static_cast<std::size_t>(i)) % capacity_));
    }
    ordered_valid_ = true;
  }
  return ordered_;
}

void NegativeQueue::save(std::ostream& out) const {
  binary::write_u64(out, capacity_);
  binary::write_u64(out, static_cast<std::uint64_t>(storage_.rows()));
  binary::write_u64(out, kind_ == QueueKind::ball ? 1 : 0);
  binary::write_doubles(out, &radius_, 1);
  binary::write_u64(out, size_);
  binary::write_u64(out, cursor_);
  binary::write_doubles(out, storage_.data(), static_cast<std::size_t>(storage_.size()));
}

void NegativeQueue::load(std::istream& in) {
  const std::uint64_t capacity = binary::read_u64(in);
  const std::uint64_t dim = binary::read_u64(in);
  const std::uint64_t kind = binary::read_u64(in);
  double radius = 0.0;
  binary::read_doubles(in, &radius, 1);
  if (capacity != capacity_ || dim != static_cast<std::uint64_t>(storage_.rows()) ||
      kind != (kind_ == QueueKind::ball ? 1u : 0u) || radius != radius_) {
    throw CheckpointError("queue layout in checkpoint does not match configuration");
  }
  const std::uint64_t size = binary::read_u64(in);
  const std::uint64_t cursor = binary::read_u64(in);
  if (size > capacity || cursor >= capacity) {
    throw CheckpointError("queue cursor in checkpoint is out of range");
  }
  Matrix storage(storage_.rows(), storage_.cols());
  binary::read_doubles(in, storage.data(), static_cast<std::size_t>(storage.size()));
  storage_ = std::move(storage);
  size_ = size;
  cursor_ = cursor;
  ordered_valid_ = false;
}

}  // namespace hcl
