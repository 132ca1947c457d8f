#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hcl/hierarchy.hpp"

namespace hcl {

struct GeneratorConfig {
  int classes = 10;
  int contexts = 3;
  int feature_dim = 64;
  int scenes = 2000;
  int min_objects = 1;
  int max_objects = 8;
  /// Class prototypes are shared_mean + separation * unit direction, with
  /// |shared_mean| = mean_norm.
  double separation = 2.0;
  double mean_norm = 4.0;
  /// Per-object Gaussian noise added to the prototype, per coordinate.
  double noise_sigma = 0.1;
  /// Probability that an object after the first in a multi-object scene is
  /// replaced by a class of another context.
  double planting_rate = 0.0;
  /// Per-scene offset = context_offset * context direction + offset_sigma
  /// Gaussian noise per coordinate.
  double context_offset = 0.5;
  double offset_sigma = 0.3;
  double scene_width = 1024.0;
  double scene_height = 768.0;
  double min_box_side = 64.0;
  double max_box_side = 192.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GroundTruthRow {
  std::string scene_id;
  std::size_t object_index = 0;
  bool out_of_context = false;
  int class_id = 0;
  std::size_t object_count = 0;
};

struct SyntheticDataset {
  std::vector<SceneRecord> scenes;
  std::vector<GroundTruthRow> ground_truth;
  std::vector<int> scene_context;
  Matrix prototypes;  // classes x feature_dim
};

inline int context_of_class(int class_id, int contexts) {
  return class_id % contexts;
}

SyntheticDataset generate_dataset(const GeneratorConfig& cfg);

/// CSV with header scene_id,object_index,is_out_of_context,class_id,object_count.
void write_ground_truth(std::ostream& out, const std::vector<GroundTruthRow>& rows);
void write_ground_truth(const std::filesystem::path& path,
                        const std::vector<GroundTruthRow>& rows);
std::vector<GroundTruthRow> read_ground_truth(std::istream& in);
std::vector<GroundTruthRow> read_ground_truth(const std::filesystem::path& path);

class EmptyCrop : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mean of the object features weighted by the fraction of each box inside
/// the rectangle, plus the scene offset. Objects without a feature are
/// skipped; `masked` excludes one object. Throws EmptyCrop when nothing
/// contributes.
Vector crop_feature(const SceneRecord& scene, const Rect& rect,
                    std::optional<std::size_t> masked = std::nullopt);
Vector whole_scene_feature(const SceneRecord& scene,
                           std::optional<std::size_t> masked = std::nullopt);
Vector region_feature(const SceneRecord& scene, const Region& region);

struct ViewAugmentation {
  double noise_sigma = 0.05;
  double dropout = 0.1;
};

/// Additive Gaussian noise plus coordinate dropout, seeded by the view seed.
Vector augment_view(const Vector& feature, std::uint64_t view_seed,
                    const ViewAugmentation& cfg = {});

/// Crop feature of a descriptor, augmented when the descriptor asks for it.
Vector realize_crop(const SceneRecord& scene, const CropDescriptor& crop,
                    const ViewAugmentation& cfg = {});

}  // namespace hcl
