#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace hcl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Coordinates of a point strictly inside the ball of radius r.
using PoincarePoint = Vector;
/// A vector in the tangent space at some ball point (no magnitude bound).
using TangentVector = Vector;

/// Raised when a point lies on or outside the ball boundary.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Geometry of the Poincare ball of radius r. Curvature is -1/r^2; the clip
/// margin keeps network outputs at norm r - clip_epsilon or less.
struct BallConfig {
  double radius = 4.5;
  double clip_epsilon = 1e-5;
  int dimension = 2;

  /// Curvature magnitude c = 1/r^2.
  double curvature() const { return 1.0 / (radius * radius); }
  /// Largest norm a clipped vector can have.
  double max_norm() const { return radius - clip_epsilon; }

  /// Throws std::invalid_argument unless r > 0, 0 < eps < r and n >= 2.
  void validate() const;
};

BallConfig make_ball(double radius, double clip_epsilon, int dimension);

/// Throws DomainError when ||p|| >= r and std::invalid_argument on a
/// dimension mismatch.
void require_in_ball(const Eigen::Ref<const Vector>& p, const BallConfig& cfg,
                     const char* what = "point");

/// Mobius (gyrovector) addition on the radius-r ball:
///   p (+) q = ((1 + 2c<p,q> + c|q|^2) p + (1 - c|p|^2) q)
///             / (1 + 2c<p,q> + c^2 |p|^2 |q|^2).
PoincarePoint mobius_add(const Eigen::Ref<const Vector>& p,
                         const Eigen::Ref<const Vector>& q,
                         const BallConfig& cfg);

/// Riemannian distance d(p, q) = 2r atanh(||(-p) (+) q|| / r).
double distance(const Eigen::Ref<const Vector>& p,
                const Eigen::Ref<const Vector>& q, const BallConfig& cfg);

/// Same quantity through the closed form ||(-p)(+)q||^2 = |p-q|^2 / D with
/// precomputed squared norms; used by the loss kernels. No domain checks.
double distance_from_norms(double sq_dist, double p_sq, double q_sq,
                           const BallConfig& cfg);

/// Numeric guard on atanh: arguments are clamped to 1 - 1e-12.
inline constexpr double kAtanhClamp = 1.0 - 1e-12;
double guarded_atanh(double x);

/// exp_p(v) = p (+) (tanh(r|v| / (r^2 - |p|^2)) r v / |v|); exp_p(0) = p.
PoincarePoint exp_map(const Eigen::Ref<const Vector>& p,
                      const Eigen::Ref<const Vector>& v, const BallConfig& cfg);

/// Rescales x to norm r - eps when it is longer; otherwise returns x.
Vector clip_to_ball(const Eigen::Ref<const Vector>& x, const BallConfig& cfg);

/// g_D(p) = 4 / (1 - |p|^2/r^2)^2.
double conformal_factor(const Eigen::Ref<const Vector>& p, const BallConfig& cfg);

/// g_D(p)^-1 = (1 - |p|^2/r^2)^2 / 4, evaluated without forming g_D.
double inverse_conformal_factor(const Eigen::Ref<const Vector>& p,
                                const BallConfig& cfg);

// ---------------------------------------------------------------------------
// Derivatives
// ---------------------------------------------------------------------------

struct DistanceGradient {
  Vector d_p;
  Vector d_q;
  /// True at p == q, where d is not differentiable; both gradients are zero.
  bool degenerate = false;
};

/// Euclidean gradient of d(p, q) with respect to both arguments.
DistanceGradient grad_distance(const Eigen::Ref<const Vector>& p,
                               const Eigen::Ref<const Vector>& q,
                               const BallConfig& cfg);

/// Gradient of d(p, q)^2 with respect to p; zero at p == q.
Vector grad_squared_distance(const Eigen::Ref<const Vector>& p,
                             const Eigen::Ref<const Vector>& q,
                             const BallConfig& cfg);

/// Coefficient k such that grad_p d(p,q) = k * ((p - q) + (|p-q|^2/(r^2-|p|^2)) p).
/// Returns 0 when p == q. Inputs are squared norms and the squared distance.
double distance_gradient_coefficient(double sq_dist, double p_sq, double q_sq,
                                     const BallConfig& cfg);

/// Jacobian of v -> exp_p(v) at a fixed base point p.
class ExpMapJacobian {
 public:
  ExpMapJacobian(const Eigen::Ref<const Vector>& p,
                 const Eigen::Ref<const Vector>& v, const BallConfig& cfg);

  /// J u
  Vector jvp(const Eigen::Ref<const Vector>& u) const;
  /// J^T g
  Vector vjp(const Eigen::Ref<const Vector>& g) const;
  const Matrix& matrix() const { return jacobian_; }

 private:
  Matrix jacobian_;
};

ExpMapJacobian grad_exp_map(const Eigen::Ref<const Vector>& p,
                            const Eigen::Ref<const Vector>& v,
                            const BallConfig& cfg);

/// exp_0(v) = r tanh(|v|/r) v/|v| together with its vector-Jacobian product,
/// specialised for the origin (the encoder projection path).
struct OriginExpMap {
  Vector point;
  Vector tangent;
  double tangent_norm = 0.0;
  double scale = 1.0;        // point = scale * tangent
  double scale_slope = 0.0;  // (d scale / d|v|) / |v|

  static OriginExpMap compute(const Eigen::Ref<const Vector>& v,
                              const BallConfig& cfg);
  Vector vjp(const Eigen::Ref<const Vector>& g) const;
};

/// Vector-Jacobian product of clip_to_ball at x.
Vector clip_vjp(const Eigen::Ref<const Vector>& x,
                const Eigen::Ref<const Vector>& g, const BallConfig& cfg);

}  // namespace hcl
