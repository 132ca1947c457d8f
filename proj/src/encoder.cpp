#include "hcl/encoder.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace hcl {

std::string_view to_string(Activation a) {
  return a == Activation::relu ? "relu" : "identity";
}

std::string_view to_string(HeadMode mode) {
  return mode == HeadMode::split ? "split" : "shared";
}

HeadMode parse_head_mode(std::string_view text) {
  if (text == "shared") return HeadMode::shared;
  if (text == "split") return HeadMode::split;
  throw std::invalid_argument("unknown head mode: " + std::string(text));
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

const Layer& EncoderParams::head(Branch branch) const {
  if (heads.empty()) throw std::logic_error("encoder has no head");
  return (branch == Branch::hyperbolic && heads.size() == 2) ? heads[1] : heads[0];
}

Eigen::Index EncoderParams::input_dim() const {
  return trunk.empty() ? heads.at(0).in_dim() : trunk.front().in_dim();
}

Eigen::Index EncoderParams::embedding_dim() const { return heads.at(0).out_dim(); }

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z = *this;
  for (auto& span : z.spans()) std::fill(span.begin(), span.end(), 0.0);
  return z;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& s : spans()) n += s.size();
  return n;
}

namespace {

template <typename LayerT, typename SpanT>
void collect(LayerT& layers, std::vector<SpanT>& out) {
  for (auto& l : layers) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
}

}  // namespace

std::vector<std::span<double>> EncoderParams::spans() {
  std::vector<std::span<double>> out;
  collect(trunk, out);
  collect(heads, out);
  return out;
}

std::vector<std::span<const double>> EncoderParams::spans() const {
  std::vector<std::span<const double>> out;
  collect(trunk, out);
  collect(heads, out);
  return out;
}

void EncoderParams::add_scaled(const EncoderParams& other, double scale) {
  if (!shapes_match(*this, other)) {
    throw std::invalid_argument("parameter shapes differ");
  }
  auto dst = spans();
  const auto src = other.spans();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    for (std::size_t j = 0; j < dst[i].size(); ++j) dst[i][j] += scale * src[i][j];
  }
}

void EncoderParams::validate() const {
  if (heads.empty() || heads.size() > 2) {
    throw std::invalid_argument("encoder needs one shared head or two split heads");
  }
  Eigen::Index width = input_dim();
  for (const Layer& l : trunk) {
    if (l.in_dim() != width || l.bias.size() != l.out_dim()) {
      throw std::invalid_argument("trunk layer dimensions are incompatible");
    }
    width = l.out_dim();
  }
  for (const Layer& h : heads) {
    if (h.in_dim() != width || h.bias.size() != h.out_dim() ||
        h.out_dim() != heads[0].out_dim()) {
      throw std::invalid_argument("head dimensions are incompatible");
    }
  }
}

bool shapes_match(const EncoderParams& a, const EncoderParams& b) {
  auto same = [](const std::vector<Layer>& x, const std::vector<Layer>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].weight.rows() != y[i].weight.rows() ||
          x[i].weight.cols() != y[i].weight.cols() ||
          x[i].bias.size() != y[i].bias.size() ||
          x[i].activation != y[i].activation) {
        return false;
      }
    }
    return true;
  };
  return same(a.trunk, b.trunk) && same(a.heads, b.heads);
}

EncoderParams init_encoder(const EncoderShape& shape, Rng& rng) {
  if (shape.input_dim < 1 || shape.embedding_dim < 1) {
    throw std::invalid_argument("encoder dimensions must be positive");
  }
  EncoderParams p;
  int width = shape.input_dim;
  for (int h : shape.hidden) {
    if (h < 1) throw std::invalid_argument("hidden width must be positive");
    Layer l;
    const double sd = std::sqrt(2.0 / width);
    l.weight = Matrix(h, width);
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = normal(rng, 0.0, sd);
    l.bias = Vector::Zero(h);
    l.activation = Activation::relu;
    p.trunk.push_back(std::move(l));
    width = h;
  }
  const int head_count = shape.head == HeadMode::split ? 2 : 1;
  for (int k = 0; k < head_count; ++k) {
    Layer l;
    const double sd = shape.head_init_gain / std::sqrt(static_cast<double>(width));
    l.weight = Matrix(shape.embedding_dim, width);
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = normal(rng, 0.0, sd);
    l.bias = Vector::Zero(shape.embedding_dim);
    l.activation = Activation::identity;
    p.heads.push_back(std::move(l));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

std::uint64_t Encoder::next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

Encoder::Encoder() : id_(next_id()) {}

Encoder::Encoder(EncoderParams params) : params_(std::move(params)), id_(next_id()) {
  params_.validate();
}

Encoder::Encoder(const Encoder& other) : params_(other.params_), id_(next_id()) {}

Encoder& Encoder::operator=(const Encoder& other) {
  if (this != &other) {
    params_ = other.params_;
    ++generation_;
  }
  return *this;
}

EncoderParams& Encoder::mutable_params() {
  ++generation_;
  return params_;
}

ForwardCache Encoder::forward(const Matrix& inputs, Branch branch) const {
  if (inputs.rows() != params_.input_dim()) {
    throw std::invalid_argument("encoder input has dimension " +
                                std::to_string(inputs.rows()) + ", expected " +
                                std::to_string(params_.input_dim()));
  }
  ForwardCache cache;
  cache.owner = id_;
  cache.generation = generation_;
  cache.branch = branch;
  Matrix x = inputs;
  auto apply = [&](const Layer& l) {
    Matrix z = l.weight * x;
    z.colwise() += l.bias;
    cache.inputs.push_back(std::move(x));
    x = l.activation == Activation::relu ? Matrix(z.cwiseMax(0.0)) : z;
    cache.preactivations.push_back(std::move(z));
  };
  for (const Layer& l : params_.trunk) apply(l);
  apply(params_.head(branch));
  cache.output = std::move(x);
  return cache;
}

Matrix Encoder::embed(const Matrix& inputs, Branch branch) const {
  return forward(inputs, branch).output;
}

Vector Encoder::embed(const Vector& input, Branch branch) const {
  return forward(Matrix(input), branch).output.col(0);
}

BackwardResult Encoder::backward(const ForwardCache& cache,
                                 const Matrix& output_grad) const {
  if (cache.owner != id_ || cache.generation != generation_) {
    throw StaleCacheError("forward cache does not belong to the current parameters");
  }
  if (output_grad.rows() != cache.output.rows() ||
      output_grad.cols() != cache.output.cols()) {
    throw std::invalid_argument("output gradient shape does not match the forward pass");
  }
  BackwardResult out;
  out.grads = params_.zeros_like();
  const std::size_t layers = params_.trunk.size() + 1;
  const std::size_t head_index =
      (cache.branch == Branch::hyperbolic && params_.heads.size() == 2) ? 1 : 0;
  Matrix g = output_grad;
  for (std::size_t k = layers; k-- > 0;) {
    const bool is_head = k == layers - 1;
    const Layer& l = is_head ? params_.heads[head_index] : params_.trunk[k];
    Layer& gl = is_head ? out.grads.heads[head_index] : out.grads.trunk[k];
    if (l.activation == Activation::relu) {
      g = g.cwiseProduct((cache.preactivations[k].array() > 0.0).matrix().cast<double>());
    }
    gl.weight.noalias() = g * cache.inputs[k].transpose();
    gl.bias = g.rowwise().sum();
    g = l.weight.transpose() * g;
  }
  out.input_grad = std::move(g);
  return out;
}

void Encoder::momentum_update(const Encoder& base, double m) {
  if (!(m >= 0.0 && m <= 1.0)) {
    throw std::invalid_argument("momentum coefficient must be in [0, 1]");
  }
  if (!shapes_match(params_, base.params_)) {
    throw std::invalid_argument("momentum encoder shape differs from base");
  }
  ++generation_;
  if (m == 1.0) return;
  auto dst = params_.spans();
  const auto src = base.params_.spans();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    for (std::size_t j = 0; j < dst[i].size(); ++j) {
      dst[i][j] = m * dst[i][j] + (1.0 - m) * src[i][j];
    }
  }
}

void momentum_update(const Encoder& base, MomentumState& state) {
  state.encoder.momentum_update(base, state.coefficient);
}

// ---------------------------------------------------------------------------
// Binary checkpoint
// ---------------------------------------------------------------------------

namespace binary {

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
    throw CheckpointError("checkpoint is truncated");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes[i]} << (8 * i);
  return v;
}

void write_doubles(std::ostream& out, const double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, data + i, sizeof bits);
    write_u64(out, bits);
  }
}

void read_doubles(std::istream& in, double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t bits = read_u64(in);
    std::memcpy(data + i, &bits, sizeof bits);
  }
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, std::size_t max_size) {
  const std::uint64_t n = read_u64(in);
  if (n > max_size) throw CheckpointError("checkpoint string length is implausible");
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw CheckpointError("checkpoint is truncated");
  }
  return s;
}

}  // namespace binary

namespace {

constexpr std::uint64_t kEncoderMagic = 0x31434e454c4348ULL;  // "HCLENC1"
constexpr std::uint64_t kEncoderVersion = 1;
constexpr std::uint64_t kMaxDim = 1u << 20;

void write_layer(std::ostream& out, const Layer& l) {
  binary::write_u64(out, l.activation == Activation::relu ? 1 : 0);
  binary::write_u64(out, static_cast<std::uint64_t>(l.weight.rows()));
  binary::write_u64(out, static_cast<std::uint64_t>(l.weight.cols()));
  binary::write_doubles(out, l.weight.data(), static_cast<std::size_t>(l.weight.size()));
  binary::write_doubles(out, l.bias.data(), static_cast<std::size_t>(l.bias.size()));
}

Layer read_layer(std::istream& in) {
  Layer l;
  const std::uint64_t act = binary::read_u64(in);
  if (act > 1) throw CheckpointError("unknown activation tag in checkpoint");
  l.activation = act == 1 ? Activation::relu : Activation::identity;
  const std::uint64_t rows = binary::read_u64(in);
  const std::uint64_t cols = binary::read_u64(in);
  if (rows == 0 || cols == 0 || rows > kMaxDim || cols > kMaxDim) {
    throw CheckpointError("implausible layer shape in checkpoint");
  }
  l.weight.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  l.bias.resize(static_cast<Eigen::Index>(rows));
  binary::read_doubles(in, l.weight.data(), static_cast<std::size_t>(l.weight.size()));
  binary::read_doubles(in, l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  return l;
}

}  // namespace

void Encoder::save(std::ostream& out) const {
  binary::write_u64(out, kEncoderMagic);
  binary::write_u64(out, kEncoderVersion);
  binary::write_u64(out, params_.trunk.size());
  binary::write_u64(out, params_.heads.size());
  for (const Layer& l : params_.trunk) write_layer(out, l);
  for (const Layer& l : params_.heads) write_layer(out, l);
}

Encoder Encoder::load(std::istream& in) {
  if (binary::read_u64(in) != kEncoderMagic) {
    throw CheckpointError("not an encoder checkpoint");
  }
  const std::uint64_t version = binary::read_u64(in);
  if (version != kEncoderVersion) {
    throw CheckpointError("unsupported encoder checkpoint version " +
                          std::to_string(version));
  }
  const std::uint64_t trunk = binary::read_u64(in);
  const std::uint64_t heads = binary::read_u64(in);
  if (trunk > 64 || heads < 1 || heads > 2) {
    throw CheckpointError("implausible encoder layout in checkpoint");
  }
  EncoderParams p;
  for (std::uint64_t i = 0; i < trunk; ++i) p.trunk.push_back(read_layer(in));
  for (std::uint64_t i = 0; i < heads; ++i) p.heads.push_back(read_layer(in));
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("inconsistent checkpoint: ") + e.what());
  }
  return Encoder(std::move(p));
}

// ---------------------------------------------------------------------------
// Projections
// ---------------------------------------------------------------------------

Vector project_euclidean(const Eigen::Ref<const Vector>& v) {
  const double n = v.norm();
  if (!(n > 0.0)) throw std::domain_error("cannot normalize a zero embedding");
  if (!std::isfinite(n)) throw std::domain_error("cannot normalize a non-finite embedding");
  return v / n;
}

Vector project_euclidean_vjp(const Eigen::Ref<const Vector>& v,
                             const Eigen::Ref<const Vector>& g) {
  const double n = v.norm();
  if (!(n > 0.0)) throw std::domain_error("cannot normalize a zero embedding");
  const Vector u = v / n;
  return (g - u.dot(g) * u) / n;
}

Vector HyperbolicProjection::vjp_to_clipped(const Eigen::Ref<const Vector>& g) const {
  return map.vjp(g);
}

Vector HyperbolicProjection::clip_backward(const Eigen::Ref<const Vector>& g_clipped,
                                           const BallConfig& cfg) const {
  return clip_vjp(raw, g_clipped, cfg);
}

HyperbolicProjection project_hyperbolic_full(const Eigen::Ref<const Vector>& v,
                                             const BallConfig& cfg) {
  if (!v.allFinite()) throw std::domain_error("embedding has non-finite entries");
  HyperbolicProjection out;
  out.raw = v;
  out.clipped = clip_to_ball(v, cfg);
  out.saturated = v.norm() > cfg.max_norm();
  out.map = OriginExpMap::compute(out.clipped, cfg);
  return out;
}

PoincarePoint project_hyperbolic(const Eigen::Ref<const Vector>& v,
                                 const BallConfig& cfg) {
  return project_hyperbolic_full(v, cfg).map.point;
}

}  // namespace hcl
