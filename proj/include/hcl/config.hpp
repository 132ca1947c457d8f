#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hcl/synthetic_data.hpp"
#include "hcl/trainer.hpp"

namespace hcl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TreeCheckConfig {
  int depth = 4;
  int dimension = 2;
  double radius = 1.0;
  int steps = 4000;
  double learning_rate = 0.2;
  int seeds = 5;
};

struct EvalConfig {
  /// 0 means the full list.
  std::size_t ndcg_cutoff = 0;
  /// Softmax temperature over negative prototype distances.
  double prototype_temperature = 0.2;
  TreeCheckConfig tree;
};

/// Everything one command needs. The master seed is the only source of
/// randomness; data and training seeds are derived from it.
struct RunConfig {
  std::uint64_t seed = 0;
  GeneratorConfig data;
  TrainConfig train;
  EvalConfig eval;

  /// Copies the derived seeds into data and train.
  void resolve_seeds();
  void validate() const;
};

/// Parses YAML text on top of the built-in defaults. Unknown keys, wrong
/// types and invalid values raise ConfigError naming the dotted key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Sets one dotted key (e.g. "train.lambda") from a YAML scalar or flow
/// sequence, with the same validation as the file parser.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

/// Complete resolved configuration; parse_config(to_yaml(c)) == c.
std::string to_yaml(const RunConfig& cfg);

/// Sweep axis name to the dotted key it sets.
std::string sweep_key(const std::string& param);

}  // namespace hcl
