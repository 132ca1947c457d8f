#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hcl/ball.hpp"
#include "hcl/random.hpp"

namespace hcl {

enum class Activation { identity, relu };
enum class HeadMode { shared, split };
/// Which projection head a forward pass ends in.
enum class Branch { euclidean, hyperbolic };

std::string_view to_string(Activation a);
std::string_view to_string(HeadMode mode);
HeadMode parse_head_mode(std::string_view text);

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::identity;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

struct EncoderShape {
  int input_dim = 64;
  std::vector<int> hidden = {128, 128};
  int embedding_dim = 32;
  HeadMode head = HeadMode::shared;
  /// Standard deviation multiplier for the head weights relative to
  /// 1/sqrt(fan_in); hidden layers use He initialization.
  double head_init_gain = 1.0;
};

/// Trunk layers followed by one projection head (shared) or two heads of
/// identical shape (split: euclidean first, hyperbolic second).
struct EncoderParams {
  std::vector<Layer> trunk;
  std::vector<Layer> heads;

  HeadMode head_mode() const {
    return heads.size() == 2 ? HeadMode::split : HeadMode::shared;
  }
  const Layer& head(Branch branch) const;
  Eigen::Index input_dim() const;
  Eigen::Index embedding_dim() const;

  /// Zero-valued parameters with the same shapes.
  EncoderParams zeros_like() const;
  std::size_t parameter_count() const;
  /// Every weight and bias, trunk first, in a fixed order.
  std::vector<std::span<double>> spans();
  std::vector<std::span<const double>> spans() const;

  void add_scaled(const EncoderParams& other, double scale);
  void validate() const;
};

bool shapes_match(const EncoderParams& a, const EncoderParams& b);

EncoderParams init_encoder(const EncoderShape& shape, Rng& rng);

class StaleCacheError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Truncated, corrupt, or wrong-version checkpoint data.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace binary {
void write_u64(std::ostream& out, std::uint64_t v);
std::uint64_t read_u64(std::istream& in);
void write_doubles(std::ostream& out, const double* data, std::size_t n);
void read_doubles(std::istream& in, double* data, std::size_t n);
void write_string(std::ostream& out, const std::string& s);
std::string read_string(std::istream& in, std::size_t max_size = 1u << 26);
}  // namespace binary

/// Per-layer inputs and pre-activations of a batched forward pass.
struct ForwardCache {
  std::uint64_t owner = 0;
  std::uint64_t generation = 0;
  Branch branch = Branch::euclidean;
  std::vector<Matrix> inputs;          // one per layer, in x batch
  std::vector<Matrix> preactivations;  // one per layer, out x batch
  Matrix output;                       // embedding_dim x batch
};

struct BackwardResult {
  EncoderParams grads;
  Matrix input_grad;  // input_dim x batch
};

/// An encoder that owns its parameters. Forward caches are stamped with the
/// encoder identity and its parameter generation; every mutable access bumps
/// the generation so backward on a stale cache throws.
class Encoder {
 public:
  Encoder();
  explicit Encoder(EncoderParams params);
  Encoder(const Encoder& other);
  Encoder& operator=(const Encoder& other);

  const EncoderParams& params() const { return params_; }
  EncoderParams& mutable_params();
  std::uint64_t generation() const { return generation_; }

  /// Inputs are columns.
  ForwardCache forward(const Matrix& inputs, Branch branch) const;
  Matrix embed(const Matrix& inputs, Branch branch) const;
  Vector embed(const Vector& input, Branch branch) const;

  BackwardResult backward(const ForwardCache& cache, const Matrix& output_grad) const;

  /// momentum <- m * momentum + (1 - m) * base, parameter-wise.
  void momentum_update(const Encoder& base, double m);

  /// Binary dump with shape headers; bit-exact round trip.
  void save(std::ostream& out) const;
  static Encoder load(std::istream& in);

 private:
  static std::uint64_t next_id();

  EncoderParams params_;
  std::uint64_t id_;
  std::uint64_t generation_ = 0;
};

/// momentum_update on a base/momentum pair with coefficient m in [0, 1].
struct MomentumState {
  Encoder encoder;
  double coefficient = 0.999;
};

void momentum_update(const Encoder& base, MomentumState& state);

// ---------------------------------------------------------------------------
// Projections
// ---------------------------------------------------------------------------

/// v / |v|; throws std::domain_error on a zero vector.
Vector project_euclidean(const Eigen::Ref<const Vector>& v);
/// Gradient w.r.t. v given the gradient w.r.t. v / |v|.
Vector project_euclidean_vjp(const Eigen::Ref<const Vector>& v,
                             const Eigen::Ref<const Vector>& g);

/// exp_0(clip(v)). Keeps the clipped tangent vector for RSGD scaling.
struct HyperbolicProjection {
  Vector raw;
  Vector clipped;
  bool saturated = false;  // |raw| > r - eps
  OriginExpMap map;

  const Vector& point() const { return map.point; }
  /// Gradient w.r.t. the clipped tangent vector.
  Vector vjp_to_clipped(const Eigen::Ref<const Vector>& g) const;
  /// Gradient w.r.t. raw given the gradient w.r.t. the clipped vector.
  Vector clip_backward(const Eigen::Ref<const Vector>& g_clipped,
                       const BallConfig& cfg) const;
};

HyperbolicProjection project_hyperbolic_full(const Eigen::Ref<const Vector>& v,
                                             const BallConfig& cfg);
PoincarePoint project_hyperbolic(const Eigen::Ref<const Vector>& v,
                                 const BallConfig& cfg);

}  // namespace hcl
