#include "hcl/hierarchy.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <string>

namespace hcl {

std::string_view to_string(BoxSource source) {
  return source == BoxSource::proposal ? "proposal" : "ground_truth";
}

BoxSource parse_box_source(std::string_view text) {
  if (text == "ground_truth" || text == "gt") return BoxSource::ground_truth;
  if (text == "proposal") return BoxSource::proposal;
  throw std::invalid_argument("unknown box source: " + std::string(text));
}

std::string_view to_string(HierarchyMode mode) {
  return mode == HierarchyMode::scene_centric ? "scene_centric"
                                              : "object_centric";
}

HierarchyMode parse_hierarchy_mode(std::string_view text) {
  if (text == "object_centric") return HierarchyMode::object_centric;
  if (text == "scene_centric") return HierarchyMode::scene_centric;
  throw std::invalid_argument("unknown hierarchy mode: " + std::string(text));
}

Rect Rect::intersection(const Rect& o) const {
  Rect r{std::max(x0, o.x0), std::max(y0, o.y0), std::min(x1, o.x1),
         std::min(y1, o.y1)};
  if (r.x1 < r.x0) r.x1 = r.x0;
  if (r.y1 < r.y0) r.y1 = r.y0;
  return r;
}

Rect Rect::bounding_union(const Rect& o) const {
  return {std::min(x0, o.x0), std::min(y0, o.y0), std::max(x1, o.x1),
          std::max(y1, o.y1)};
}

double iou(const Rect& a, const Rect& b) {
  const double inter = a.intersection(b).area();
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

ObjectBox clamp_to_extent(ObjectBox box, const Extent& extent) {
  const Rect r = box.rect().intersection(extent.rect());
  box.x = r.x0;
  box.y = r.y0;
  box.width = r.width();
  box.height = r.height();
  return box;
}

// ---------------------------------------------------------------------------
// Box preprocessing
// ---------------------------------------------------------------------------

namespace {

bool passes_shape_filter(const ObjectBox& b, const ProposalFilter& f) {
  if (std::min(b.width, b.height) < f.min_side) return false;
  const double aspect = b.width / b.height;
  return aspect >= f.min_aspect && aspect <= f.max_aspect;
}

// Indices of surviving boxes in descending-area order.
std::vector<std::size_t> filter_indices(const std::vector<ObjectBox>& boxes,
                                        const std::vector<std::size_t>& from,
                                        const ProposalFilter& f) {
  std::vector<std::size_t> order;
  for (std::size_t i : from) {
    if (passes_shape_filter(boxes[i], f)) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return boxes[a].area() > boxes[b].area();
  });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    if (kept.size() >= f.max_count) break;
    const Rect r = boxes[i].rect();
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return iou(r, boxes[k].rect()) > f.max_iou;
    });
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

}  // namespace

std::vector<ObjectBox> filter_proposals(const std::vector<ObjectBox>& boxes,
                                        const Extent& extent,
                                        const ProposalFilter& filter) {
  std::vector<ObjectBox> clamped;
  clamped.reserve(boxes.size());
  for (const ObjectBox& b : boxes) clamped.push_back(clamp_to_extent(b, extent));
  std::vector<std::size_t> all(clamped.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<ObjectBox> out;
  for (std::size_t i : filter_indices(clamped, all, filter)) {
    out.push_back(clamped[i]);
  }
  return out;
}

std::vector<ObjectBox> drop_small_boxes(const std::vector<ObjectBox>& boxes,
                                        double max_dropped_area) {
  std::vector<ObjectBox> out;
  for (const ObjectBox& b : boxes) {
    if (b.area() > max_dropped_area) out.push_back(b);
  }
  return out;
}

namespace {

// Centers a w x h box on (cx, cy), shrinks it to the extent if needed, and
// translates it inside.
ObjectBox place(ObjectBox box, double cx, double cy, double w, double h,
                const Extent& extent) {
  w = std::min(w, extent.width);
  h = std::min(h, extent.height);
  double x = cx - w / 2.0;
  double y = cy - h / 2.0;
  x = std::clamp(x, 0.0, extent.width - w);
  y = std::clamp(y, 0.0, extent.height - h);
  box.x = x;
  box.y = y;
  box.width = w;
  box.height = h;
  return box;
}

}  // namespace

ObjectBox expand_box(const ObjectBox& box, const Extent& extent,
                     const ExpansionConfig& cfg) {
  const double target = cfg.target_side;
  if (box.area() > target * target) return clamp_to_extent(box, extent);
  const double w = std::max(box.width, std::min(target, extent.width));
  const double h = std::max(box.height, std::min(target, extent.height));
  return place(box, box.x + box.width / 2.0, box.y + box.height / 2.0, w, h,
               extent);
}

ObjectBox jitter_box(const ObjectBox& box, const Extent& extent, Rng& rng,
                     const ExpansionConfig& cfg) {
  const double fw = uniform(rng, cfg.jitter_low, cfg.jitter_high);
  const double fh = uniform(rng, cfg.jitter_low, cfg.jitter_high);
  return place(box, box.x + box.width / 2.0, box.y + box.height / 2.0,
               box.width * fw, box.height * fh, extent);
}

ObjectBox expand_and_jitter(const ObjectBox& box, const Extent& extent, Rng& rng,
                            const ExpansionConfig& cfg) {
  return jitter_box(expand_box(box, extent, cfg), extent, rng, cfg);
}

// ---------------------------------------------------------------------------
// Regions and hierarchy
// ---------------------------------------------------------------------------

bool Region::contains(std::size_t object) const {
  return std::binary_search(members.begin(), members.end(), object);
}

bool Region::contains_all(const std::vector<std::size_t>& objects) const {
  return std::all_of(objects.begin(), objects.end(),
                     [&](std::size_t o) { return contains(o); });
}

Region make_region(const SceneRecord& scene, std::vector<std::size_t> members) {
  if (members.empty()) throw std::invalid_argument("region needs a member");
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  Region region;
  for (std::size_t m : members) {
    if (m >= scene.objects.size()) {
      throw std::out_of_range("region member is not an object of the scene");
    }
    const Rect r = scene.objects[m].rect();
    region.bounds = region.members.empty() ? r : region.bounds.bounding_union(r);
    region.members.push_back(m);
  }
  return region;
}

Region sample_scene_region(const SceneRecord& scene, std::size_t anchor_object,
                           const std::vector<std::size_t>& candidates, Rng& rng,
                           const RegionSampling& cfg) {
  std::vector<std::size_t> pool;
  for (std::size_t c : candidates) {
    if (c != anchor_object) pool.push_back(c);
  }
  std::vector<std::size_t> members{anchor_object};
  if (!pool.empty()) {
    const int lo = std::max(0, cfg.min_extra);
    const int hi = std::max(lo, cfg.max_extra);
    const std::size_t want =
        lo + uniform_index(rng, static_cast<std::size_t>(hi - lo + 1));
    const std::size_t take = std::min(want, pool.size());
    // Partial Fisher-Yates: the first `take` entries are a uniform sample.
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
      members.push_back(pool[i]);
    }
  }
  return make_region(scene, std::move(members));
}

Region sample_scene_region(const SceneRecord& scene, std::size_t anchor_object,
                           Rng& rng, const RegionSampling& cfg) {
  std::vector<std::size_t> all(scene.objects.size());
  std::iota(all.begin(), all.end(), 0);
  return sample_scene_region(scene, anchor_object, all, rng, cfg);
}

SceneHierarchy build_hierarchy(const std::vector<std::size_t>& objects) {
  const std::size_t n = objects.size();
  if (n > kMaxHierarchyObjects) {
    throw std::invalid_argument("hierarchy enumeration supports at most 16 objects");
  }
  SceneHierarchy h;
  if (n == 0) return h;
  const std::uint32_t full = (std::uint32_t{1} << n) - 1;
  // Order nodes by subset size then mask, so objects come first and the
  // scene last.
  std::vector<std::uint32_t> masks(full);
  std::iota(masks.begin(), masks.end(), 1u);
  std::stable_sort(masks.begin(), masks.end(), [](std::uint32_t a, std::uint32_t b) {
    return std::popcount(a) < std::popcount(b);
  });
  for (std::uint32_t mask : masks) {
    HierarchyNode node;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::uint32_t{1} << i)) node.objects.push_back(objects[i]);
    }
    std::sort(node.objects.begin(), node.objects.end());
    node.kind = mask == full          ? NodeKind::scene
                : std::popcount(mask) == 1 ? NodeKind::object
                                           : NodeKind::region;
    // A one-object scene gets its scene leaf below.
    if (n == 1) node.kind = NodeKind::object;
    h.nodes.push_back(std::move(node));
  }
  if (n == 1) {
    HierarchyNode scene_node{NodeKind::scene, h.nodes[0].objects};
    h.nodes.push_back(std::move(scene_node));
    h.edges.push_back({0, 1});
    return h;
  }
  for (std::size_t a = 0; a < masks.size(); ++a) {
    for (std::size_t b = 0; b < masks.size(); ++b) {
      if (a != b && (masks[a] & masks[b]) == masks[a]) h.edges.push_back({a, b});
    }
  }
  return h;
}

SceneHierarchy build_hierarchy(const SceneRecord& scene) {
  return build_hierarchy(usable_objects(scene));
}

// ---------------------------------------------------------------------------
// Pair sampling
// ---------------------------------------------------------------------------

void PairBatch::append(PairBatch&& other) {
  auto move_into = [](auto& dst, auto& src) {
    dst.insert(dst.end(), std::make_move_iterator(src.begin()),
               std::make_move_iterator(src.end()));
  };
  move_into(euclidean_queries, other.euclidean_queries);
  move_into(euclidean_keys, other.euclidean_keys);
  move_into(anchors, other.anchors);
  move_into(positives, other.positives);
  move_into(negatives, other.negatives);
}

std::vector<std::size_t> usable_objects(const SceneRecord& scene) {
  std::vector<ObjectBox> clamped;
  clamped.reserve(scene.objects.size());
  for (const ObjectBox& b : scene.objects) {
    clamped.push_back(clamp_to_extent(b, scene.extent));
  }
  std::vector<std::size_t> ground_truth;
  std::vector<std::size_t> proposals;
  for (std::size_t i = 0; i < clamped.size(); ++i) {
    if (clamped[i].area() <= kSmallBoxArea) continue;
    (clamped[i].source == BoxSource::proposal ? proposals : ground_truth)
        .push_back(i);
  }
  if (!proposals.empty()) {
    const std::vector<std::size_t> kept = filter_indices(clamped, proposals, {});
    ground_truth.insert(ground_truth.end(), kept.begin(), kept.end());
    std::sort(ground_truth.begin(), ground_truth.end());
  }
  return ground_truth;
}

namespace {

CropDescriptor object_crop(const SceneRecord& scene, std::size_t scene_index,
                           std::size_t object, Rng& rng,
                           const ExpansionConfig& cfg) {
  CropDescriptor c;
  c.scene = scene_index;
  c.kind = NodeKind::object;
  c.objects = {object};
  c.rect = expand_and_jitter(scene.objects[object], scene.extent, rng, cfg).rect();
  c.view_seed = rng();
  c.augment = true;
  return c;
}

CropDescriptor region_crop(const SceneRecord& scene, std::size_t scene_index,
                           const Region& region, bool whole_scene, Rng& rng) {
  CropDescriptor c;
  c.scene = scene_index;
  c.kind = whole_scene ? NodeKind::scene : NodeKind::region;
  c.objects = region.members;
  c.rect = whole_scene ? scene.extent.rect() : region.bounds;
  c.view_seed = rng();
  c.augment = true;
  return c;
}

}  // namespace

PairBatch sample_pairs(const SceneRecord& scene, std::size_t scene_index,
                       HierarchyMode mode, Rng& rng, const PairSampling& cfg) {
  return sample_pairs(scene, scene_index, usable_objects(scene), mode, rng, cfg);
}

PairBatch sample_pairs(const SceneRecord& scene, std::size_t scene_index,
                       const std::vector<std::size_t>& usable, HierarchyMode mode,
                       Rng& rng, const PairSampling& cfg) {
  if (usable.empty()) {
    throw UnusableScene("scene " + scene.scene_id +
                        " has no object that survives box filtering");
  }
  PairBatch batch;

  // Euclidean branch: one expanded object box, two jittered augmented views.
  const std::size_t euc_object = usable[uniform_index(rng, usable.size())];
  const ObjectBox expanded =
      expand_box(scene.objects[euc_object], scene.extent, cfg.expansion);
  for (auto* views : {&batch.euclidean_queries, &batch.euclidean_keys}) {
    CropDescriptor c;
    c.scene = scene_index;
    c.kind = NodeKind::object;
    c.objects = {euc_object};
    c.rect = jitter_box(expanded, scene.extent, rng, cfg.expansion).rect();
    c.view_seed = rng();
    c.augment = true;
    views->push_back(std::move(c));
  }

  // Hyperbolic branch: a region (or the whole scene) and one contained object.
  const std::size_t seed_object = usable[uniform_index(rng, usable.size())];
  const bool whole_scene =
      usable.size() == 1 || uniform(rng, 0.0, 1.0) < cfg.whole_scene_probability;
  const Region region =
      whole_scene ? make_region(scene, usable)
                  : sample_scene_region(scene, seed_object, usable, rng, cfg.region);
  const CropDescriptor region_view =
      region_crop(scene, scene_index, region, whole_scene, rng);

  std::vector<CropDescriptor> negatives;
  if (mode == HierarchyMode::object_centric) {
    const std::size_t positive =
        region.members[uniform_index(rng, region.members.size())];
    batch.anchors.push_back(region_view);
    batch.positives.push_back(
        object_crop(scene, scene_index, positive, rng, cfg.expansion));
    if (cfg.scene_negatives) {
      for (std::size_t o : usable) {
        if (!region.contains(o)) {
          negatives.push_back(object_crop(scene, scene_index, o, rng, cfg.expansion));
        }
      }
    }
  } else {
    const std::size_t anchor =
        region.members[uniform_index(rng, region.members.size())];
    batch.anchors.push_back(
        object_crop(scene, scene_index, anchor, rng, cfg.expansion));
    batch.positives.push_back(region_view);
    if (cfg.scene_negatives) {
      // Regions built around objects outside the positive region that do not
      // contain the anchor.
      for (std::size_t o : usable) {
        if (region.contains(o)) continue;
        std::vector<std::size_t> others;
        for (std::size_t c : usable) {
          if (c != anchor) others.push_back(c);
        }
        const Region neg = sample_scene_region(scene, o, others, rng, cfg.region);
        negatives.push_back(region_crop(scene, scene_index, neg, false, rng));
      }
    }
  }
  batch.negatives.push_back(std::move(negatives));
  return batch;
}

}  // namespace hcl
