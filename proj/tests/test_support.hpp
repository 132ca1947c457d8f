#pragma once

#include <algorithm>
#include <functional>

#include "hcl/ball.hpp"
#include "hcl/random.hpp"

namespace hcl::test {

/// Uniform direction, norm uniform in [0, max_norm].
inline Vector random_in_ball(Rng& rng, int dim, double max_norm) {
  return uniform(rng, 0.0, max_norm) * random_unit_vector(rng, dim);
}

/// Central finite-difference gradient of a scalar function.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f,
                          const Vector& x, double h = 1e-6) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// Central finite-difference Jacobian of a vector function.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f,
                          const Vector& x, double h = 1e-6) {
  const Vector f0 = f(x);
  Matrix j(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector a = x, b = x;
    a[i] += h;
    b[i] -= h;
    j.col(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return j;
}

/// ||a - b|| / max(||a||, ||b||, floor): the usual gradient-check measure.
template <class A, class B>
double relative_error(const A& a, const B& b, double floor = 1e-12) {
  const double scale = std::max({a.norm(), b.norm(), floor});
  return (a - b).norm() / scale;
}

}  // namespace hcl::test
