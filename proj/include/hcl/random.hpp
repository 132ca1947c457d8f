#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Dense>

namespace hcl {

/// Every stochastic component draws from this engine; its textual state is
/// what checkpoints store.
using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double sigma = 1.0) {
  return std::normal_distribution<double>(mean, sigma)(rng);
}

inline Eigen::VectorXd normal_vector(Rng& rng, Eigen::Index n,
                                     double sigma = 1.0) {
  std::normal_distribution<double> dist(0.0, sigma);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

/// Uniformly distributed direction.
inline Eigen::VectorXd random_unit_vector(Rng& rng, Eigen::Index n) {
  Eigen::VectorXd v = normal_vector(rng, n);
  while (v.norm() == 0.0) v = normal_vector(rng, n);
  return v / v.norm();
}

/// Derives an independent stream seed from a master seed and a stream id
/// (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::string rng_state(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

inline void set_rng_state(Rng& rng, const std::string& state) {
  std::istringstream in(state);
  in >> rng;
  if (!in) throw std::runtime_error("corrupt random engine state");
}

}  // namespace hcl
