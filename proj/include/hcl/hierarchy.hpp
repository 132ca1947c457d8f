#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hcl/ball.hpp"
#include "hcl/random.hpp"

namespace hcl {

enum class BoxSource { ground_truth, proposal };

std::string_view to_string(BoxSource source);
BoxSource parse_box_source(std::string_view text);

/// Axis-aligned rectangle [x0, x1) x [y0, y1) in pixels.
struct Rect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  Rect intersection(const Rect& o) const;
  Rect bounding_union(const Rect& o) const;
  friend bool operator==(const Rect&, const Rect&) = default;
};

double iou(const Rect& a, const Rect& b);

struct Extent {
  double width = 0.0;
  double height = 0.0;
  Rect rect() const { return {0.0, 0.0, width, height}; }
};

/// One annotated object. `feature` is the optional per-box descriptor that
/// stands in for the pixels inside the box.
struct ObjectBox {
  double x = 0.0;
  double y = 0.0;
  double width = 0.0;
  double height = 0.0;
  int class_id = 0;
  BoxSource source = BoxSource::ground_truth;
  Vector feature;

  Rect rect() const { return {x, y, x + width, y + height}; }
  double area() const { return width * height; }
};

/// Box restricted to the scene extent; boxes that vanish keep zero size.
ObjectBox clamp_to_extent(ObjectBox box, const Extent& extent);

/// One image. `feature` is the per-scene context offset added to every crop.
struct SceneRecord {
  std::string scene_id;
  Extent extent;
  std::vector<ObjectBox> objects;
  Vector feature;
};

// ---------------------------------------------------------------------------
// Box preprocessing
// ---------------------------------------------------------------------------

struct ProposalFilter {
  double min_side = 96.0;
  double min_aspect = 1.0 / 3.0;
  double max_aspect = 3.0;
  double max_iou = 0.5;
  std::size_t max_count = 100;
};

/// Selective-search style filtering: minimum side, aspect ratio window,
/// greedy suppression in descending-area order, truncation. Never modifies
/// surviving boxes; output is in descending-area order.
std::vector<ObjectBox> filter_proposals(const std::vector<ObjectBox>& boxes,
                                        const Extent& extent,
                                        const ProposalFilter& filter = {});

inline constexpr double kSmallBoxArea = 56.0 * 56.0;

/// Removes boxes with width * height <= 56 * 56. Order is preserved.
std::vector<ObjectBox> drop_small_boxes(const std::vector<ObjectBox>& boxes,
                                        double max_dropped_area = kSmallBoxArea);

struct ExpansionConfig {
  double target_side = 256.0;
  double jitter_low = 0.9;
  double jitter_high = 1.1;
};

/// Boxes with area <= target^2 grow about their center so each side is at
/// least min(target, extent side); the result is shifted back inside.
ObjectBox expand_box(const ObjectBox& box, const Extent& extent,
                     const ExpansionConfig& cfg = {});

/// Scales width and height by independent uniform factors in
/// [jitter_low, jitter_high] about the center, then re-fits to the extent.
ObjectBox jitter_box(const ObjectBox& box, const Extent& extent, Rng& rng,
                     const ExpansionConfig& cfg = {});

ObjectBox expand_and_jitter(const ObjectBox& box, const Extent& extent, Rng& rng,
                            const ExpansionConfig& cfg = {});

// ---------------------------------------------------------------------------
// Regions and hierarchy
// ---------------------------------------------------------------------------

/// A set of objects of one scene and the union of their boxes.
struct Region {
  std::vector<std::size_t> members;  // sorted object indices
  Rect bounds;

  bool contains(std::size_t object) const;
  bool contains_all(const std::vector<std::size_t>& objects) const;
};

Region make_region(const SceneRecord& scene, std::vector<std::size_t> members);

struct RegionSampling {
  int min_extra = 1;
  int max_extra = 5;
};

/// Merges the anchor object with 1 to 5 other objects drawn uniformly without
/// replacement from `candidates` (capped by availability).
Region sample_scene_region(const SceneRecord& scene, std::size_t anchor_object,
                           const std::vector<std::size_t>& candidates, Rng& rng,
                           const RegionSampling& cfg = {});
Region sample_scene_region(const SceneRecord& scene, std::size_t anchor_object,
                           Rng& rng, const RegionSampling& cfg = {});

enum class NodeKind { object, region, scene };

struct HierarchyNode {
  NodeKind kind = NodeKind::object;
  std::vector<std::size_t> objects;  // sorted
};

/// Parent is the smaller object set: objects are roots, scenes are leaves.
struct HierarchyEdge {
  std::size_t parent = 0;
  std::size_t child = 0;
};

struct SceneHierarchy {
  std::vector<HierarchyNode> nodes;
  std::vector<HierarchyEdge> edges;
};

inline constexpr std::size_t kMaxHierarchyObjects = 16;

/// Nodes are all nonempty subsets of the listed objects: singletons are
/// objects, proper subsets of size >= 2 are regions, the full set is the
/// scene. An edge joins u and v iff one set strictly contains the other.
SceneHierarchy build_hierarchy(const std::vector<std::size_t>& objects);
SceneHierarchy build_hierarchy(const SceneRecord& scene);

// ---------------------------------------------------------------------------
// Pair sampling
// ---------------------------------------------------------------------------

enum class HierarchyMode { object_centric, scene_centric };

std::string_view to_string(HierarchyMode mode);
HierarchyMode parse_hierarchy_mode(std::string_view text);

/// What to crop from which scene: a rectangle, the object set it stands for,
/// and the seed of its augmentation view.
struct CropDescriptor {
  std::size_t scene = 0;
  Rect rect;
  NodeKind kind = NodeKind::object;
  std::vector<std::size_t> objects;
  std::uint64_t view_seed = 0;
  bool augment = false;
};

struct PairBatch {
  // Euclidean branch: two views of one expanded, jittered object crop.
  std::vector<CropDescriptor> euclidean_queries;
  std::vector<CropDescriptor> euclidean_keys;
  // Hyperbolic branch.
  std::vector<CropDescriptor> anchors;
  std::vector<CropDescriptor> positives;
  std::vector<std::vector<CropDescriptor>> negatives;

  void append(PairBatch&& other);
};

class UnusableScene : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PairSampling {
  /// Probability that the object-centric anchor is the whole scene rather
  /// than a merged region.
  double whole_scene_probability = 0.25;
  bool scene_negatives = true;
  RegionSampling region;
  ExpansionConfig expansion;
};

/// Object indices that survive preprocessing: drop_small_boxes for every
/// box, filter_proposals on top for proposal boxes.
std::vector<std::size_t> usable_objects(const SceneRecord& scene);

/// Samples one Euclidean pair and one hyperbolic (anchor, positive,
/// in-scene negatives) triple from one scene. Throws UnusableScene when no
/// object survives preprocessing.
PairBatch sample_pairs(const SceneRecord& scene, std::size_t scene_index,
                       HierarchyMode mode, Rng& rng,
                       const PairSampling& cfg = {});
PairBatch sample_pairs(const SceneRecord& scene, std::size_t scene_index,
                       const std::vector<std::size_t>& usable, HierarchyMode mode,
                       Rng& rng, const PairSampling& cfg = {});

}  // namespace hcl
