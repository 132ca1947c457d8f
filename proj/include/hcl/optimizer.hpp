#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "hcl/ball.hpp"

namespace hcl {

/// rsgd scales gradients at ball points by g_D(p)^-1; sgd leaves them alone.
enum class OptimizerMode { rsgd, sgd };

std::string_view to_string(OptimizerMode mode);
OptimizerMode parse_optimizer_mode(std::string_view text);

/// p <- p - lr * g, element-wise.
void sgd_step(std::span<double> params, std::span<const double> grads,
              double lr);

/// Inverse conformal factor (1 - |p|^2/r^2)^2 / 4 at a ball point.
double rsgd_scale_factor(const Eigen::Ref<const Vector>& point,
                         const BallConfig& cfg);

/// Multiplies a gradient taken at `point` by g_D(point)^-1.
Vector rsgd_scale(const Eigen::Ref<const Vector>& grad,
                  const Eigen::Ref<const Vector>& point, const BallConfig& cfg);

/// Copy of cfg with the clip margin replaced (the SGD ablation raises it to
/// 1e-1). Throws std::invalid_argument unless 0 < epsilon < r.
BallConfig rsgd_epsilon_override(const BallConfig& cfg, double epsilon);

struct SgdOptions {
  double learning_rate = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

/// Stateful SGD over a fixed list of parameter tensors. Momentum buffers are
/// created on the first step and exposed for checkpointing.
class Sgd {
 public:
  explicit Sgd(SgdOptions options);

  void step(const std::vector<std::span<double>>& params,
            const std::vector<std::span<const double>>& grads);

  const SgdOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }

  const std::vector<std::vector<double>>& velocity() const { return velocity_; }
  void set_velocity(std::vector<std::vector<double>> v) { velocity_ = std::move(v); }

 private:
  SgdOptions options_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace hcl
