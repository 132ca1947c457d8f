#include "hcl/ball.hpp"

#include <cmath>
#include <sstream>

namespace hcl {

void BallConfig::validate() const {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw std::invalid_argument("ball radius must be positive and finite");
  }
  if (!(clip_epsilon > 0.0) || !(clip_epsilon < radius)) {
    throw std::invalid_argument("clip epsilon must satisfy 0 < eps < radius");
  }
  if (dimension < 2) {
    throw std::invalid_argument("ball dimension must be at least 2");
  }
}

BallConfig make_ball(double radius, double clip_epsilon, int dimension) {
  BallConfig cfg{radius, clip_epsilon, dimension};
  cfg.validate();
  return cfg;
}

void require_in_ball(const Eigen::Ref<const Vector>& p, const BallConfig& cfg,
                     const char* what) {
  if (p.size() != cfg.dimension) {
    std::ostringstream msg;
    msg << what << " has dimension " << p.size() << ", ball has "
        << cfg.dimension;
    throw std::invalid_argument(msg.str());
  }
  const double n = p.norm();
  if (!(n < cfg.radius)) {
    std::ostringstream msg;
    msg << what << " norm " << n << " is not inside the ball of radius "
        << cfg.radius;
    throw DomainError(msg.str());
  }
}

double guarded_atanh(double x) {
  return std::atanh(std::min(x, kAtanhClamp));
}

namespace {

PoincarePoint mobius_add_unchecked(const Eigen::Ref<const Vector>& p,
                                   const Eigen::Ref<const Vector>& q,
                                   double c) {
  const double pq = p.dot(q);
  const double pp = p.squaredNorm();
  const double qq = q.squaredNorm();
  const double a = 1.0 + 2.0 * c * pq + c * qq;
  const double b = 1.0 - c * pp;
  const double denom = 1.0 + 2.0 * c * pq + c * c * pp * qq;
  return (a * p + b * q) / denom;
}

// Rounding can land a mathematically interior result on the sphere |x| = r.
void keep_inside(Vector& x, double radius) {
  constexpr double kInterior = 1.0 - 1e-15;
  const double n = x.norm();
  if (n >= radius * kInterior) x *= radius * kInterior / n;
}

}  // namespace

PoincarePoint mobius_add(const Eigen::Ref<const Vector>& p,
                         const Eigen::Ref<const Vector>& q,
                         const BallConfig& cfg) {
  require_in_ball(p, cfg, "left operand");
  require_in_ball(q, cfg, "right operand");
  Vector out = mobius_add_unchecked(p, q, cfg.curvature());
  keep_inside(out, cfg.radius);
  return out;
}

double distance(const Eigen::Ref<const Vector>& p,
                const Eigen::Ref<const Vector>& q, const BallConfig& cfg) {
  require_in_ball(p, cfg, "p");
  require_in_ball(q, cfg, "q");
  const Vector w = mobius_add_unchecked(-p, q, cfg.curvature());
  return 2.0 * cfg.radius * guarded_atanh(w.norm() / cfg.radius);
}

double distance_from_norms(double sq_dist, double p_sq, double q_sq,
                           const BallConfig& cfg) {
  const double c = cfg.curvature();
  const double cd = c * std::max(sq_dist, 0.0);
  const double denom = (1.0 - c * p_sq) * (1.0 - c * q_sq) + cd;
  return 2.0 * cfg.radius * guarded_atanh(std::sqrt(cd / denom));
}

PoincarePoint exp_map(const Eigen::Ref<const Vector>& p,
                      const Eigen::Ref<const Vector>& v, const BallConfig& cfg) {
  require_in_ball(p, cfg, "base point");
  if (v.size() != p.size()) {
    throw std::invalid_argument("tangent vector dimension mismatch");
  }
  const double vn = v.norm();
  if (vn == 0.0) {
    return p;
  }
  const double r = cfg.radius;
  const double lambda = r * vn / (r * r - p.squaredNorm());
  const Vector step = (std::tanh(lambda) * r / vn) * v;
  Vector out = mobius_add_unchecked(p, step, cfg.curvature());
  keep_inside(out, r);
  return out;
}

Vector clip_to_ball(const Eigen::Ref<const Vector>& x, const BallConfig& cfg) {
  const double n = x.norm();
  const double limit = cfg.max_norm();
  if (n > limit) {
    return x * (limit / n);
  }
  return x;
}

namespace {

// 1 - n^2/r^2 as (r - n)(r + n)/r^2; r - n is exact near the boundary.
double boundary_gap(double n, double r) { return (r - n) * (r + n) / (r * r); }

}  // namespace

double inverse_conformal_factor(const Eigen::Ref<const Vector>& p,
                                const BallConfig& cfg) {
  require_in_ball(p, cfg);
  const double s = boundary_gap(p.norm(), cfg.radius);
  return s * s / 4.0;
}

double conformal_factor(const Eigen::Ref<const Vector>& p,
                        const BallConfig& cfg) {
  require_in_ball(p, cfg);
  const double s = boundary_gap(p.norm(), cfg.radius);
  return 4.0 / (s * s);
}

double distance_gradient_coefficient(double sq_dist, double p_sq, double q_sq,
                                     const BallConfig& cfg) {
  if (!(sq_dist > 0.0)) {
    return 0.0;
  }
  const double r = cfg.radius;
  const double r2 = r * r;
  const double alpha = r2 - p_sq;
  const double beta = r2 - q_sq;
  const double t = r2 * sq_dist / (alpha * beta);
  return 2.0 * r2 * r / (alpha * beta * std::sqrt(t * (1.0 + t)));
}

DistanceGradient grad_distance(const Eigen::Ref<const Vector>& p,
                               const Eigen::Ref<const Vector>& q,
                               const BallConfig& cfg) {
  require_in_ball(p, cfg, "p");
  require_in_ball(q, cfg, "q");
  DistanceGradient out;
  const Vector diff = p - q;
  const double sq = diff.squaredNorm();
  if (sq == 0.0) {
    out.d_p = Vector::Zero(p.size());
    out.d_q = Vector::Zero(p.size());
    out.degenerate = true;
    return out;
  }
  const double pp = p.squaredNorm();
  const double qq = q.squaredNorm();
  const double r2 = cfg.radius * cfg.radius;
  const double k = distance_gradient_coefficient(sq, pp, qq, cfg);
  out.d_p = k * (diff + (sq / (r2 - pp)) * p);
  out.d_q = k * (-diff + (sq / (r2 - qq)) * q);
  return out;
}

Vector grad_squared_distance(const Eigen::Ref<const Vector>& p,
                             const Eigen::Ref<const Vector>& q,
                             const BallConfig& cfg) {
  const DistanceGradient g = grad_distance(p, q, cfg);
  if (g.degenerate) {
    return g.d_p;
  }
  return 2.0 * distance(p, q, cfg) * g.d_p;
}

namespace {

// s(n) = r tanh(k n) / n and (ds/dn)/n, with the small-argument series.
void tanh_scale(double n, double r, double k, double& scale, double& slope) {
  const double x = k * n;
  if (x < 1e-3) {
    const double x2 = x * x;
    scale = r * k * (1.0 - x2 / 3.0 + 2.0 * x2 * x2 / 15.0);
    slope = r * k * k * k * (-2.0 / 3.0 + 8.0 * x2 / 15.0);
    return;
  }
  const double th = std::tanh(x);
  const double sech2 = 1.0 - th * th;
  scale = r * th / n;
  slope = r * (x * sech2 - th) / (n * n * n);
}

}  // namespace

ExpMapJacobian::ExpMapJacobian(const Eigen::Ref<const Vector>& p,
                               const Eigen::Ref<const Vector>& v,
                               const BallConfig& cfg) {
  require_in_ball(p, cfg, "base point");
  if (v.size() != p.size()) {
    throw std::invalid_argument("tangent vector dimension mismatch");
  }
  const Eigen::Index n = p.size();
  const double r = cfg.radius;
  const double c = cfg.curvature();
  const double pp = p.squaredNorm();
  const double k = r / (r * r - pp);
  const double vn = v.norm();

  double s = 0.0;
  double ds = 0.0;
  tanh_scale(vn, r, k, s, ds);
  const Vector y = s * v;
  const Matrix jy = s * Matrix::Identity(n, n) + ds * v * v.transpose();

  const double py = p.dot(y);
  const double yy = y.squaredNorm();
  const double a = 1.0 + 2.0 * c * py + c * yy;
  const double b = 1.0 - c * pp;
  const double denom = 1.0 + 2.0 * c * py + c * c * pp * yy;
  const Vector num = a * p + b * y;
  const Vector da = 2.0 * c * (p + y);
  const Vector dd = 2.0 * c * p + 2.0 * c * c * pp * y;
  const Matrix jadd = (p * da.transpose() + b * Matrix::Identity(n, n)) / denom -
                      num * dd.transpose() / (denom * denom);
  jacobian_ = jadd * jy;
}

Vector ExpMapJacobian::jvp(const Eigen::Ref<const Vector>& u) const {
  return jacobian_ * u;
}

Vector ExpMapJacobian::vjp(const Eigen::Ref<const Vector>& g) const {
  return jacobian_.transpose() * g;
}

ExpMapJacobian grad_exp_map(const Eigen::Ref<const Vector>& p,
                            const Eigen::Ref<const Vector>& v,
                            const BallConfig& cfg) {
  return ExpMapJacobian(p, v, cfg);
}

OriginExpMap OriginExpMap::compute(const Eigen::Ref<const Vector>& v,
                                   const BallConfig& cfg) {
  OriginExpMap out;
  out.tangent = v;
  out.tangent_norm = v.norm();
  tanh_scale(out.tangent_norm, cfg.radius, 1.0 / cfg.radius, out.scale,
             out.scale_slope);
  out.point = out.scale * v;
  return out;
}

Vector OriginExpMap::vjp(const Eigen::Ref<const Vector>& g) const {
  return scale * g + (scale_slope * tangent.dot(g)) * tangent;
}

Vector clip_vjp(const Eigen::Ref<const Vector>& x,
                const Eigen::Ref<const Vector>& g, const BallConfig& cfg) {
  const double n = x.norm();
  const double limit = cfg.max_norm();
  if (!(n > limit)) {
    return g;
  }
  const Vector unit = x / n;
  return (limit / n) * (g - unit.dot(g) * unit);
}

}  // namespace hcl
