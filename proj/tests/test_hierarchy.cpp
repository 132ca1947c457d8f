#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "hcl/hierarchy.hpp"

namespace hcl {
namespace {

ObjectBox box(double x, double y, double w, double h, int cls = 0,
              BoxSource src = BoxSource::ground_truth) {
  ObjectBox b;
  b.x = x;
  b.y = y;
  b.width = w;
  b.height = h;
  b.class_id = cls;
  b.source = src;
  return b;
}

SceneRecord scene_with(std::vector<ObjectBox> objects, double w = 1000, double h = 1000) {
  SceneRecord s;
  s.scene_id = "s";
  s.extent = {w, h};
  s.objects = std::move(objects);
  return s;
}

TEST(FilterProposals, AspectSideAndDuplicates) {
  const Extent e{1000, 1000};
  EXPECT_TRUE(filter_proposals({box(0, 0, 50, 400)}, e).empty());
  EXPECT_EQ(filter_proposals({box(10, 10, 100, 100)}, e).size(), 1u);
  EXPECT_EQ(filter_proposals({box(10, 10, 100, 100), box(10, 10, 100, 100)}, e).size(), 1u);
  EXPECT_TRUE(filter_proposals({box(0, 0, 95, 200)}, e).empty());
  // Aspect exactly 3 is inside the window.
  EXPECT_EQ(filter_proposals({box(0, 0, 300, 100)}, e).size(), 1u);
}

TEST(FilterProposals, SuppressionAndTruncation) {
  const Extent e{1000, 1000};
  // IoU of these two is 0.6 > 0.5: the larger survives.
  const auto kept = filter_proposals({box(0, 0, 100, 100), box(0, 0, 100, 160)}, e);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].height, 160);
  // IoU exactly 0.5 is kept.
  EXPECT_EQ(filter_proposals({box(0, 0, 200, 100), box(0, 0, 100, 100)}, e).size(), 2u);
  std::vector<ObjectBox> many;
  for (int i = 0; i < 150; ++i) many.push_back(box((i % 15) * 110.0, (i / 15) * 110.0, 100, 100));
  EXPECT_EQ(filter_proposals(many, {2000, 2000}).size(), 100u);
}

TEST(DropSmallBoxes, AreaRule) {
  const auto out = drop_small_boxes({box(0, 0, 50, 60), box(0, 0, 60, 60), box(0, 0, 56, 56)});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].width, 60);
}

TEST(ExpandBox, GrowsToTargetAboutCenter) {
  const Extent e{1000, 1000};
  const ObjectBox b = expand_box(box(450, 450, 100, 100), e);
  EXPECT_DOUBLE_EQ(b.width, 256);
  EXPECT_DOUBLE_EQ(b.height, 256);
  EXPECT_DOUBLE_EQ(b.x + b.width / 2, 500);
  EXPECT_DOUBLE_EQ(b.y + b.height / 2, 500);
  const ObjectBox big = expand_box(box(10, 10, 300, 300), e);
  EXPECT_EQ(big.rect(), box(10, 10, 300, 300).rect());
}

TEST(ExpandBox, CornerIsClampedInside) {
  const ObjectBox b = expand_box(box(0, 0, 200, 200), {1000, 1000});
  EXPECT_EQ(b.rect(), (Rect{0, 0, 256, 256}));
  const ObjectBox far = expand_box(box(800, 800, 200, 200), {1000, 1000});
  EXPECT_EQ(far.rect(), (Rect{744, 744, 1000, 1000}));
  // A scene narrower than the target caps the side.
  const ObjectBox narrow = expand_box(box(0, 0, 100, 100), {200, 1000});
  EXPECT_DOUBLE_EQ(narrow.width, 200);
}

TEST(JitterBox, FactorsWithinBoundsAndInExtent) {
  Rng rng(3);
  const Extent e{1000, 1000};
  for (int i = 0; i < 500; ++i) {
    const ObjectBox b = jitter_box(box(400, 400, 200, 200), e, rng);
    EXPECT_GE(b.width, 180 - 1e-9);
    EXPECT_LE(b.width, 220 + 1e-9);
    EXPECT_GE(b.x, 0);
    EXPECT_LE(b.x + b.width, 1000 + 1e-9);
  }
}

TEST(SampleSceneRegion, MembersAndUnion) {
  std::vector<ObjectBox> objs;
  for (int i = 0; i < 8; ++i) objs.push_back(box(i * 100.0, i * 50.0, 80, 80));
  const SceneRecord s = scene_with(objs);
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const Region r = sample_scene_region(s, 2, rng);
    EXPECT_TRUE(r.contains(2));
    EXPECT_GE(r.members.size(), 2u);
    EXPECT_LE(r.members.size(), 6u);
    EXPECT_TRUE(std::is_sorted(r.members.begin(), r.members.end()));
    Rect u = s.objects[r.members[0]].rect();
    for (std::size_t m : r.members) u = u.bounding_union(s.objects[m].rect());
    EXPECT_EQ(r.bounds, u);
  }
  // Availability caps the extra count.
  const SceneRecord two = scene_with({box(0, 0, 80, 80), box(100, 0, 80, 80)});
  EXPECT_EQ(sample_scene_region(two, 0, rng).members, (std::vector<std::size_t>{0, 1}));
  const SceneRecord one = scene_with({box(0, 0, 80, 80)});
  EXPECT_EQ(sample_scene_region(one, 0, rng).members, (std::vector<std::size_t>{0}));
}

TEST(BuildHierarchy, EdgesAreStrictInclusion) {
  const SceneHierarchy h = build_hierarchy(std::vector<std::size_t>{0, 1, 2});
  ASSERT_EQ(h.nodes.size(), 7u);
  int objects = 0, regions = 0, scenes = 0;
  for (const auto& n : h.nodes) {
    objects += n.kind == NodeKind::object;
    regions += n.kind == NodeKind::region;
    scenes += n.kind == NodeKind::scene;
  }
  EXPECT_EQ(objects, 3);
  EXPECT_EQ(regions, 3);
  EXPECT_EQ(scenes, 1);
  std::set<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& e : h.edges) edges.insert({e.parent, e.child});
  for (std::size_t u = 0; u < h.nodes.size(); ++u) {
    for (std::size_t v = 0; v < h.nodes.size(); ++v) {
      const auto& a = h.nodes[u].objects;
      const auto& b = h.nodes[v].objects;
      const bool strict = a.size() < b.size() && std::includes(b.begin(), b.end(), a.begin(), a.end());
      EXPECT_EQ(edges.count({u, v}) == 1, strict);
    }
  }
  // Scenes are leaves.
  for (const auto& e : h.edges) EXPECT_NE(h.nodes[e.parent].kind, NodeKind::scene);
}

TEST(BuildHierarchy, SingleObjectAndLimit) {
  const SceneHierarchy h = build_hierarchy(std::vector<std::size_t>{4});
  // The object and its scene hold the same set; the scene is still the leaf.
  ASSERT_EQ(h.nodes.size(), 2u);
  EXPECT_EQ(h.nodes[0].kind, NodeKind::object);
  EXPECT_EQ(h.nodes[1].kind, NodeKind::scene);
  ASSERT_EQ(h.edges.size(), 1u);
  EXPECT_EQ(h.edges[0].parent, 0u);
  EXPECT_EQ(h.edges[0].child, 1u);
  std::vector<std::size_t> big(kMaxHierarchyObjects + 1);
  for (std::size_t i = 0; i < big.size(); ++i) big[i] = i;
  EXPECT_ANY_THROW(build_hierarchy(big));
}

TEST(SamplePairs, ObjectCentricInvariants) {
  std::vector<ObjectBox> objs;
  for (int i = 0; i < 6; ++i) objs.push_back(box(i * 150.0, 100, 120, 120, i));
  const SceneRecord s = scene_with(objs);
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const PairBatch b = sample_pairs(s, 0, HierarchyMode::object_centric, rng);
    ASSERT_EQ(b.anchors.size(), 1u);
    ASSERT_EQ(b.positives.size(), 1u);
    ASSERT_EQ(b.euclidean_queries.size(), 1u);
    const auto& anchor = b.anchors[0].objects;
    ASSERT_EQ(b.positives[0].objects.size(), 1u);
    EXPECT_TRUE(std::binary_search(anchor.begin(), anchor.end(), b.positives[0].objects[0]));
    for (const auto& n : b.negatives[0]) {
      ASSERT_EQ(n.objects.size(), 1u);
      EXPECT_FALSE(std::binary_search(anchor.begin(), anchor.end(), n.objects[0]));
    }
    EXPECT_EQ(b.euclidean_queries[0].objects, b.euclidean_keys[0].objects);
    EXPECT_NE(b.euclidean_queries[0].view_seed, b.euclidean_keys[0].view_seed);
  }
}

TEST(SamplePairs, SceneCentricSwapsRoles) {
  std::vector<ObjectBox> objs;
  for (int i = 0; i < 5; ++i) objs.push_back(box(i * 150.0, 100, 120, 120, i));
  const SceneRecord s = scene_with(objs);
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    const PairBatch b = sample_pairs(s, 0, HierarchyMode::scene_centric, rng);
    ASSERT_EQ(b.anchors[0].objects.size(), 1u);
    const auto& region = b.positives[0].objects;
    EXPECT_TRUE(std::binary_search(region.begin(), region.end(), b.anchors[0].objects[0]));
    for (const auto& n : b.negatives[0]) {
      EXPECT_FALSE(std::binary_search(n.objects.begin(), n.objects.end(), b.anchors[0].objects[0]));
    }
  }
}

TEST(SamplePairs, UnusableSceneThrows) {
  const SceneRecord s = scene_with({box(0, 0, 40, 40)});
  Rng rng(1);
  EXPECT_THROW(sample_pairs(s, 0, HierarchyMode::object_centric, rng), UnusableScene);
}

TEST(SamplePairs, DeterministicForSeed) {
  std::vector<ObjectBox> objs;
  for (int i = 0; i < 4; ++i) objs.push_back(box(i * 200.0, 100, 120, 120, i));
  const SceneRecord s = scene_with(objs);
  Rng a(9), b(9);
  for (int t = 0; t < 20; ++t) {
    const PairBatch x = sample_pairs(s, 0, HierarchyMode::object_centric, a);
    const PairBatch y = sample_pairs(s, 0, HierarchyMode::object_centric, b);
    EXPECT_EQ(x.anchors[0].rect, y.anchors[0].rect);
    EXPECT_EQ(x.positives[0].view_seed, y.positives[0].view_seed);
  }
}

TEST(HierarchyMode, ParseRoundTrip) {
  for (HierarchyMode m : {HierarchyMode::object_centric, HierarchyMode::scene_centric}) {
    EXPECT_EQ(parse_hierarchy_mode(to_string(m)), m);
  }
  EXPECT_ANY_THROW(parse_hierarchy_mode("nope"));
}

}  // namespace
}  // namespace hcl
