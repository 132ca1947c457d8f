#include "hcl/scene_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

namespace hcl {

using nlohmann::json;

namespace {

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector vector_from_json(const json& arr) {
  if (!arr.is_array()) throw FormatError("feature must be an array");
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  }
  return v;
}

template <typename T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) {
    throw FormatError(std::string("missing field '") + key + "'");
  }
  return j.at(key).get<T>();
}

}  // namespace

std::string scene_to_json_line(const SceneRecord& scene) {
  json j;
  j["scene_id"] = scene.scene_id;
  j["width"] = scene.extent.width;
  j["height"] = scene.extent.height;
  json objects = json::array();
  for (const ObjectBox& b : scene.objects) {
    json o;
    o["x"] = b.x;
    o["y"] = b.y;
    o["w"] = b.width;
    o["h"] = b.height;
    o["class_id"] = b.class_id;
    o["source"] = std::string(to_string(b.source));
    if (b.feature.size() > 0) o["feature"] = vector_to_json(b.feature);
    objects.push_back(std::move(o));
  }
  j["objects"] = std::move(objects);
  if (scene.feature.size() > 0) j["feature"] = vector_to_json(scene.feature);
  return j.dump();
}

SceneRecord scene_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed scene line: ") + e.what());
  }
  try {
    SceneRecord scene;
    const json& id = j.at("scene_id");
    scene.scene_id = id.is_string() ? id.get<std::string>() : id.dump();
    scene.extent.width = required<double>(j, "width");
    scene.extent.height = required<double>(j, "height");
    if (!(scene.extent.width > 0.0) || !(scene.extent.height > 0.0)) {
      throw FormatError("scene " + scene.scene_id + " has an empty extent");
    }
    for (const json& o : j.value("objects", json::array())) {
      ObjectBox b;
      b.x = required<double>(o, "x");
      b.y = required<double>(o, "y");
      b.width = required<double>(o, "w");
      b.height = required<double>(o, "h");
      b.class_id = required<int>(o, "class_id");
      b.source = parse_box_source(o.value("source", std::string("ground_truth")));
      if (!(b.width > 0.0) || !(b.height > 0.0)) {
        throw FormatError("scene " + scene.scene_id + " has a box with no area");
      }
      if (o.contains("feature")) b.feature = vector_from_json(o.at("feature"));
      scene.objects.push_back(std::move(b));
    }
    if (j.contains("feature")) scene.feature = vector_from_json(j.at("feature"));
    return scene;
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid scene record: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
}

void write_scenes(std::ostream& out, const std::vector<SceneRecord>& scenes) {
  for (const SceneRecord& s : scenes) out << scene_to_json_line(s) << '\n';
}

std::vector<SceneRecord> read_scenes(std::istream& in) {
  std::vector<SceneRecord> scenes;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      scenes.push_back(scene_from_json_line(line));
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  return scenes;
}

void write_scenes(const std::filesystem::path& path,
                  const std::vector<SceneRecord>& scenes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_scenes(out, scenes);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<SceneRecord> read_scenes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_scenes(in);
}

std::vector<SceneRecord> convert_detection_annotations(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed annotation file: ") + e.what());
  }
  try {
    std::vector<SceneRecord> scenes;
    std::unordered_map<std::int64_t, std::size_t> index;
    for (const json& img : j.at("images")) {
      SceneRecord s;
      const auto id = img.at("id").get<std::int64_t>();
      s.scene_id = img.contains("file_name") ? img.at("file_name").get<std::string>()
                                             : std::to_string(id);
      s.extent.width = img.at("width").get<double>();
      s.extent.height = img.at("height").get<double>();
      if (!index.emplace(id, scenes.size()).second) {
        throw FormatError("duplicate image id " + std::to_string(id));
      }
      scenes.push_back(std::move(s));
    }
    for (const json& ann : j.value("annotations", json::array())) {
      const auto image = ann.at("image_id").get<std::int64_t>();
      const auto it = index.find(image);
      if (it == index.end()) {
        throw FormatError("annotation refers to unknown image " +
                          std::to_string(image));
      }
      const json& bbox = ann.at("bbox");
      if (!bbox.is_array() || bbox.size() != 4) {
        throw FormatError("bbox must be [x, y, w, h]");
      }
      ObjectBox b;
      b.x = bbox[0].get<double>();
      b.y = bbox[1].get<double>();
      b.width = bbox[2].get<double>();
      b.height = bbox[3].get<double>();
      b.class_id = ann.at("category_id").get<int>();
      if (!(b.width > 0.0) || !(b.height > 0.0)) continue;
      scenes[it->second].objects.push_back(std::move(b));
    }
    return scenes;
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid annotation file: ") + e.what());
  }
}

}  // namespace hcl
