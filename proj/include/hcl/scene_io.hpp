#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "hcl/hierarchy.hpp"

namespace hcl {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One scene per line:
///   {"scene_id": "...", "width": W, "height": H,
///    "objects": [{"x":..,"y":..,"w":..,"h":..,"class_id":..,
///                 "source":"ground_truth"|"proposal", "feature":[...]}],
///    "feature": [...]}
/// Object and scene features are optional.
std::string scene_to_json_line(const SceneRecord& scene);
SceneRecord scene_from_json_line(const std::string& line);

void write_scenes(std::ostream& out, const std::vector<SceneRecord>& scenes);
std::vector<SceneRecord> read_scenes(std::istream& in);

void write_scenes(const std::filesystem::path& path,
                  const std::vector<SceneRecord>& scenes);
std::vector<SceneRecord> read_scenes(const std::filesystem::path& path);

/// Converts a detection-dataset annotation file ("images" with id, width,
/// height and optional file_name; "annotations" with image_id, bbox
/// [x, y, w, h] and category_id) to scene records. class_id is the
/// category_id; scene_id is the file_name when present, else the image id.
/// Images are emitted in input order; images without annotations are kept.
std::vector<SceneRecord> convert_detection_annotations(std::istream& in);

}  // namespace hcl
