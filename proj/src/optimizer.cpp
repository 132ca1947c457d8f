#include "hcl/optimizer.hpp"

#include <stdexcept>
#include <string>

namespace hcl {

std::string_view to_string(OptimizerMode mode) {
  return mode == OptimizerMode::rsgd ? "rsgd" : "sgd";
}

OptimizerMode parse_optimizer_mode(std::string_view text) {
  if (text == "rsgd") return OptimizerMode::rsgd;
  if (text == "sgd") return OptimizerMode::sgd;
  throw std::invalid_argument("unknown optimizer mode: " + std::string(text));
}

void sgd_step(std::span<double> params, std::span<const double> grads,
              double lr) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("sgd_step: parameter/gradient size mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] -= lr * grads[i];
  }
}

double rsgd_scale_factor(const Eigen::Ref<const Vector>& point,
                         const BallConfig& cfg) {
  return inverse_conformal_factor(point, cfg);
}

Vector rsgd_scale(const Eigen::Ref<const Vector>& grad,
                  const Eigen::Ref<const Vector>& point, const BallConfig& cfg) {
  return rsgd_scale_factor(point, cfg) * grad;
}

BallConfig rsgd_epsilon_override(const BallConfig& cfg, double epsilon) {
  BallConfig out = cfg;
  out.clip_epsilon = epsilon;
  out.validate();
  return out;
}

Sgd::Sgd(SgdOptions options) : options_(options) {
  if (!(options_.learning_rate >= 0.0) || !(options_.momentum >= 0.0) ||
      !(options_.momentum < 1.0) || !(options_.weight_decay >= 0.0)) {
    throw std::invalid_argument("invalid SGD options");
  }
}

void Sgd::step(const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("Sgd::step: tensor count mismatch");
  }
  const bool plain = options_.momentum == 0.0 && options_.weight_decay == 0.0;
  if (plain) {
    for (std::size_t t = 0; t < params.size(); ++t) {
      sgd_step(params[t], grads[t], options_.learning_rate);
    }
    return;
  }
  if (velocity_.empty()) {
    velocity_.resize(params.size());
    for (std::size_t t = 0; t < params.size(); ++t) {
      velocity_[t].assign(params[t].size(), 0.0);
    }
  }
  if (velocity_.size() != params.size()) {
    throw std::invalid_argument("Sgd::step: velocity buffer mismatch");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t];
    auto g = grads[t];
    auto& v = velocity_[t];
    if (p.size() != g.size() || p.size() != v.size()) {
      throw std::invalid_argument("Sgd::step: tensor size mismatch");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = g[i] + options_.weight_decay * p[i];
      v[i] = options_.momentum * v[i] + d;
      p[i] -= options_.learning_rate * v[i];
    }
  }
}

}  // namespace hcl
