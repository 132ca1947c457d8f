#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "hcl/scene_io.hpp"
#include "hcl/synthetic_data.hpp"

namespace hcl {
namespace {

GeneratorConfig small(std::uint64_t seed = 1, double planting = 0.0) {
  GeneratorConfig c;
  c.scenes = 300;
  c.feature_dim = 16;
  c.seed = seed;
  c.planting_rate = planting;
  return c;
}

TEST(Generator, DeterministicBytes) {
  std::ostringstream a, b, ga, gb;
  const auto x = generate_dataset(small(7, 0.1));
  const auto y = generate_dataset(small(7, 0.1));
  write_scenes(a, x.scenes);
  write_scenes(b, y.scenes);
  write_ground_truth(ga, x.ground_truth);
  write_ground_truth(gb, y.ground_truth);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(ga.str(), gb.str());
  std::ostringstream c;
  write_scenes(c, generate_dataset(small(8, 0.1)).scenes);
  EXPECT_NE(a.str(), c.str());
}

TEST(Generator, PrefixStable) {
  GeneratorConfig big = small(3);
  big.scenes = 500;
  const auto a = generate_dataset(small(3));
  const auto b = generate_dataset(big);
  for (std::size_t i = 0; i < a.scenes.size(); ++i) {
    EXPECT_EQ(scene_to_json_line(a.scenes[i]).substr(5), scene_to_json_line(b.scenes[i]).substr(5));
  }
}

TEST(Generator, ShapesAndContexts) {
  const GeneratorConfig cfg = small(2);
  const auto ds = generate_dataset(cfg);
  ASSERT_EQ(ds.scenes.size(), 300u);
  EXPECT_EQ(ds.prototypes.rows(), cfg.classes);
  EXPECT_EQ(ds.prototypes.cols(), cfg.feature_dim);
  std::size_t rows = 0;
  std::set<std::string> ids;
  std::map<std::size_t, int> counts;
  for (std::size_t s = 0; s < ds.scenes.size(); ++s) {
    const SceneRecord& sc = ds.scenes[s];
    ids.insert(sc.scene_id);
    ASSERT_GE(sc.objects.size(), 1u);
    ASSERT_LE(sc.objects.size(), 8u);
    ++counts[sc.objects.size()];
    EXPECT_EQ(sc.feature.size(), cfg.feature_dim);
    for (const ObjectBox& o : sc.objects) {
      EXPECT_EQ(o.feature.size(), cfg.feature_dim);
      EXPECT_GE(o.x, 0);
      EXPECT_LE(o.x + o.width, cfg.scene_width);
      EXPECT_LE(o.y + o.height, cfg.scene_height);
      // Without planting every object matches the scene context.
      EXPECT_EQ(context_of_class(o.class_id, cfg.contexts), ds.scene_context[s]);
      ++rows;
    }
  }
  EXPECT_EQ(ids.size(), ds.scenes.size());
  EXPECT_EQ(rows, ds.ground_truth.size());
  EXPECT_EQ(counts.size(), 8u);  // every object count occurs
  for (const auto& r : ds.ground_truth) EXPECT_FALSE(r.out_of_context);
}

TEST(Generator, PlantedObjectsLeaveContext) {
  const auto ds = generate_dataset(small(4, 0.1));
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) index[ds.scenes[i].scene_id] = i;
  std::size_t planted = 0, eligible = 0;
  for (const auto& r : ds.ground_truth) {
    const std::size_t s = index.at(r.scene_id);
    const int ctx = context_of_class(r.class_id, 3);
    EXPECT_EQ(r.class_id, ds.scenes[s].objects[r.object_index].class_id);
    EXPECT_EQ(r.object_count, ds.scenes[s].objects.size());
    if (r.object_index == 0) {
      EXPECT_FALSE(r.out_of_context);
      continue;
    }
    ++eligible;
    if (r.out_of_context) {
      ++planted;
      EXPECT_NE(ctx, ds.scene_context[s]);
    } else {
      EXPECT_EQ(ctx, ds.scene_context[s]);
    }
  }
  const double rate = static_cast<double>(planted) / eligible;
  EXPECT_NEAR(rate, 0.1, 0.03);
}

TEST(GroundTruth, CsvRoundTrip) {
  const auto ds = generate_dataset(small(5, 0.2));
  std::stringstream io;
  write_ground_truth(io, ds.ground_truth);
  const auto back = read_ground_truth(io);
  ASSERT_EQ(back.size(), ds.ground_truth.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].scene_id, ds.ground_truth[i].scene_id);
    EXPECT_EQ(back[i].object_index, ds.ground_truth[i].object_index);
    EXPECT_EQ(back[i].out_of_context, ds.ground_truth[i].out_of_context);
    EXPECT_EQ(back[i].class_id, ds.ground_truth[i].class_id);
    EXPECT_EQ(back[i].object_count, ds.ground_truth[i].object_count);
  }
  std::istringstream bad_header("a,b\n");
  EXPECT_ANY_THROW(read_ground_truth(bad_header));
  std::istringstream bad_line("scene_id,object_index,is_out_of_context,class_id,object_count\nx,1\n");
  EXPECT_ANY_THROW(read_ground_truth(bad_line));
}

TEST(Generator, RejectsInvalidConfig) {
  GeneratorConfig c = small();
  c.contexts = 1;
  EXPECT_THROW(generate_dataset(c), std::invalid_argument);
  c = small();
  c.planting_rate = 1.0;
  EXPECT_THROW(generate_dataset(c), std::invalid_argument);
  c = small();
  c.min_objects = 5;
  c.max_objects = 2;
  EXPECT_THROW(generate_dataset(c), std::invalid_argument);
  c = small();
  c.max_box_side = 5000;
  EXPECT_THROW(generate_dataset(c), std::invalid_argument);
}

SceneRecord two_objects() {
  SceneRecord s;
  s.scene_id = "t";
  s.extent = {100, 100};
  ObjectBox a;
  a.width = a.height = 10;
  a.feature = Vector::Constant(2, 1.0);
  ObjectBox b = a;
  b.x = 50;
  b.feature = Vector::Constant(2, 3.0);
  s.objects = {a, b};
  s.feature = Vector::Constant(2, 0.5);
  return s;
}

TEST(CropFeature, AreaWeightedMeanPlusOffset) {
  const SceneRecord s = two_objects();
  EXPECT_EQ(whole_scene_feature(s), Vector::Constant(2, 2.5));
  EXPECT_EQ(crop_feature(s, {0, 0, 10, 10}), Vector::Constant(2, 1.5));
  // Half of object a: weight 0.5 against b's weight 1.
  EXPECT_TRUE(crop_feature(s, {5, 0, 60, 10}).isApprox(Vector::Constant(2, (0.5 + 3.0) / 1.5 + 0.5)));
  EXPECT_EQ(whole_scene_feature(s, 1), Vector::Constant(2, 1.5));
  EXPECT_THROW(crop_feature(s, {20, 20, 40, 40}), EmptyCrop);
  SceneRecord only = s;
  only.objects.resize(1);
  EXPECT_THROW(whole_scene_feature(only, 0), EmptyCrop);
}

TEST(AugmentView, SeededAndBounded) {
  const Vector f = Vector::Constant(500, 1.0);
  const ViewAugmentation cfg{0.05, 0.1};
  EXPECT_EQ(augment_view(f, 9, cfg), augment_view(f, 9, cfg));
  EXPECT_NE(augment_view(f, 9, cfg), augment_view(f, 10, cfg));
  const Vector v = augment_view(f, 9, cfg);
  const auto zeros = (v.array() == 0.0).count();
  EXPECT_GT(zeros, 20);
  EXPECT_LT(zeros, 90);
  EXPECT_EQ(augment_view(f, 9, {0.0, 0.0}), f);
}

}  // namespace
}  // namespace hcl
