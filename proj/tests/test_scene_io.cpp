#include <sstream>

#include <gtest/gtest.h>

#include "hcl/scene_io.hpp"
#include "hcl/synthetic_data.hpp"

namespace hcl {
namespace {

SceneRecord sample_scene() {
  SceneRecord s;
  s.scene_id = "img-1";
  s.extent = {640, 480};
  ObjectBox a;
  a.x = 10.5;
  a.y = 20.25;
  a.width = 100;
  a.height = 0.1 + 0.2;  // not exactly representable in decimal
  a.class_id = 3;
  a.feature = Vector::LinSpaced(4, -1.0, 1.0 / 3.0);
  ObjectBox b;
  b.x = 0;
  b.y = 0;
  b.width = 64;
  b.height = 64;
  b.class_id = 7;
  b.source = BoxSource::proposal;
  s.objects = {a, b};
  s.feature = Vector::Constant(4, 1e-300);
  return s;
}

void expect_same(const SceneRecord& x, const SceneRecord& y) {
  EXPECT_EQ(x.scene_id, y.scene_id);
  EXPECT_EQ(x.extent.width, y.extent.width);
  EXPECT_EQ(x.extent.height, y.extent.height);
  ASSERT_EQ(x.objects.size(), y.objects.size());
  for (std::size_t i = 0; i < x.objects.size(); ++i) {
    EXPECT_EQ(x.objects[i].rect(), y.objects[i].rect());
    EXPECT_EQ(x.objects[i].class_id, y.objects[i].class_id);
    EXPECT_EQ(x.objects[i].source, y.objects[i].source);
    EXPECT_EQ(x.objects[i].feature, y.objects[i].feature);
  }
  EXPECT_EQ(x.feature, y.feature);
}

TEST(SceneJson, RoundTripIsExact) {
  const SceneRecord s = sample_scene();
  const std::string line = scene_to_json_line(s);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  expect_same(scene_from_json_line(line), s);
  EXPECT_EQ(scene_to_json_line(scene_from_json_line(line)), line);
}

TEST(SceneJson, StreamRoundTripAndBlankLines) {
  const SyntheticDataset ds = generate_dataset([] {
    GeneratorConfig c;
    c.scenes = 20;
    c.feature_dim = 5;
    return c;
  }());
  std::stringstream io;
  write_scenes(io, ds.scenes);
  std::string text = io.str() + "\n\n";
  std::istringstream in(text);
  const auto back = read_scenes(in);
  ASSERT_EQ(back.size(), ds.scenes.size());
  for (std::size_t i = 0; i < back.size(); ++i) expect_same(back[i], ds.scenes[i]);
}

TEST(SceneJson, RejectsMalformedRecords) {
  EXPECT_THROW(scene_from_json_line("{not json"), FormatError);
  EXPECT_THROW(scene_from_json_line(R"({"width":1,"height":1,"objects":[]})"), FormatError);
  EXPECT_THROW(scene_from_json_line(R"({"scene_id":"a","width":0,"height":1,"objects":[]})"),
               FormatError);
  EXPECT_THROW(
      scene_from_json_line(
          R"({"scene_id":"a","width":10,"height":10,"objects":[{"x":0,"y":0,"w":0,"h":2,"class_id":1}]})"),
      FormatError);
  EXPECT_THROW(
      scene_from_json_line(
          R"({"scene_id":"a","width":10,"height":10,"objects":[{"x":0,"y":0,"w":1,"h":2,"class_id":1,"source":"guess"}]})"),
      FormatError);
  std::istringstream in(scene_to_json_line(sample_scene()) + "\n{bad\n");
  try {
    read_scenes(in);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(SceneJson, OptionalFeatures) {
  const SceneRecord s = scene_from_json_line(
      R"({"scene_id":"a","width":10,"height":10,"objects":[{"x":0,"y":0,"w":1,"h":2,"class_id":1}]})");
  EXPECT_EQ(s.feature.size(), 0);
  ASSERT_EQ(s.objects.size(), 1u);
  EXPECT_EQ(s.objects[0].feature.size(), 0);
  EXPECT_EQ(s.objects[0].source, BoxSource::ground_truth);
}

TEST(ConvertAnnotations, ImagesAnnotationsAndIds) {
  std::istringstream in(R"({
    "images": [{"id": 2, "width": 100, "height": 80, "file_name": "b.jpg"},
               {"id": 1, "width": 50, "height": 50},
               {"id": 3, "width": 30, "height": 30}],
    "annotations": [{"image_id": 2, "bbox": [1, 2, 30, 40], "category_id": 5},
                    {"image_id": 1, "bbox": [0, 0, 10, 10], "category_id": 9},
                    {"image_id": 2, "bbox": [10, 10, 5, 5], "category_id": 6}]
  })");
  const auto scenes = convert_detection_annotations(in);
  ASSERT_EQ(scenes.size(), 3u);
  EXPECT_EQ(scenes[0].scene_id, "b.jpg");
  EXPECT_EQ(scenes[1].scene_id, "1");
  EXPECT_TRUE(scenes[2].objects.empty());
  ASSERT_EQ(scenes[0].objects.size(), 2u);
  EXPECT_EQ(scenes[0].objects[0].rect(), (Rect{1, 2, 31, 42}));
  EXPECT_EQ(scenes[0].objects[1].class_id, 6);
  EXPECT_EQ(scenes[1].objects[0].class_id, 9);
}

TEST(ConvertAnnotations, Errors) {
  std::istringstream unknown(
      R"({"images":[{"id":1,"width":5,"height":5}],"annotations":[{"image_id":4,"bbox":[0,0,1,1],"category_id":1}]})");
  EXPECT_THROW(convert_detection_annotations(unknown), FormatError);
  std::istringstream dup(
      R"({"images":[{"id":1,"width":5,"height":5},{"id":1,"width":5,"height":5}],"annotations":[]})");
  EXPECT_THROW(convert_detection_annotations(dup), FormatError);
  std::istringstream bbox(
      R"({"images":[{"id":1,"width":5,"height":5}],"annotations":[{"image_id":1,"bbox":[0,0,1],"category_id":1}]})");
  EXPECT_THROW(convert_detection_annotations(bbox), FormatError);
  std::istringstream junk("[1, 2");
  EXPECT_THROW(convert_detection_annotations(junk), FormatError);
}

}  // namespace
}  // namespace hcl
