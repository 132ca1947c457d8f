#include "hcl/synthetic_data.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace hcl {

void GeneratorConfig::validate() const {
  if (classes < 2) throw std::invalid_argument("need at least 2 classes");
  if (contexts < 2 || contexts > classes) {
    throw std::invalid_argument("contexts must be in [2, classes]");
  }
  if (feature_dim < 1) throw std::invalid_argument("feature_dim must be positive");
  if (scenes < 1) throw std::invalid_argument("need at least one scene");
  if (min_objects < 1 || max_objects < min_objects) {
    throw std::invalid_argument("invalid objects-per-scene range");
  }
  if (!(separation > 0.0)) throw std::invalid_argument("separation must be positive");
  if (!(mean_norm >= 0.0)) throw std::invalid_argument("mean_norm must be >= 0");
  if (!(noise_sigma >= 0.0) || !(offset_sigma >= 0.0)) {
    throw std::invalid_argument("noise levels must be >= 0");
  }
  if (!(planting_rate >= 0.0) || !(planting_rate < 1.0)) {
    throw std::invalid_argument("planting_rate must be in [0, 1)");
  }
  if (!(min_box_side > 0.0) || max_box_side < min_box_side ||
      max_box_side > std::min(scene_width, scene_height)) {
    throw std::invalid_argument("box side range does not fit the scene");
  }
}

namespace {

constexpr std::uint64_t kPrototypeStream = 0xffffffffULL;

Vector gaussian(Rng& rng, int n, double sigma) {
  if (sigma == 0.0) return Vector::Zero(n);
  return normal_vector(rng, n, sigma);
}

}  // namespace

SyntheticDataset generate_dataset(const GeneratorConfig& cfg) {
  cfg.validate();
  const int d = cfg.feature_dim;
  SyntheticDataset out;

  Rng proto_rng(derive_seed(cfg.seed, kPrototypeStream));
  const Vector shared = cfg.mean_norm * random_unit_vector(proto_rng, d);
  out.prototypes.resize(cfg.classes, d);
  for (int c = 0; c < cfg.classes; ++c) {
    out.prototypes.row(c) =
        (shared + cfg.separation * random_unit_vector(proto_rng, d)).transpose();
  }
  std::vector<Vector> context_dirs;
  for (int k = 0; k < cfg.contexts; ++k) {
    context_dirs.push_back(random_unit_vector(proto_rng, d));
  }
  std::vector<std::vector<int>> in_context(cfg.contexts);
  std::vector<std::vector<int>> out_of_context(cfg.contexts);
  for (int c = 0; c < cfg.classes; ++c) {
    for (int k = 0; k < cfg.contexts; ++k) {
      (context_of_class(c, cfg.contexts) == k ? in_context : out_of_context)[k]
          .push_back(c);
    }
  }

  const auto width_digits = std::to_string(cfg.scenes - 1).size();
  for (int s = 0; s < cfg.scenes; ++s) {
    // One stream per scene so any partition of the id space regenerates
    // the same records.
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(s)));
    SceneRecord scene;
    std::string id = std::to_string(s);
    scene.scene_id = "s" + std::string(width_digits - id.size(), '0') + id;
    scene.extent = {cfg.scene_width, cfg.scene_height};
    const int context = static_cast<int>(uniform_index(rng, cfg.contexts));
    const int count =
        cfg.min_objects +
        static_cast<int>(uniform_index(rng, cfg.max_objects - cfg.min_objects + 1));
    for (int j = 0; j < count; ++j) {
      bool planted = false;
      const std::vector<int>* pool = &in_context[context];
      if (j > 0 && uniform(rng, 0.0, 1.0) < cfg.planting_rate) {
        planted = true;
        pool = &out_of_context[context];
      }
      ObjectBox box;
      box.class_id = (*pool)[uniform_index(rng, pool->size())];
      box.width = uniform(rng, cfg.min_box_side, cfg.max_box_side);
      box.height = uniform(rng, cfg.min_box_side, cfg.max_box_side);
      box.x = uniform(rng, 0.0, cfg.scene_width - box.width);
      box.y = uniform(rng, 0.0, cfg.scene_height - box.height);
      box.feature = out.prototypes.row(box.class_id).transpose() +
                    gaussian(rng, d, cfg.noise_sigma);
      scene.objects.push_back(std::move(box));
      out.ground_truth.push_back({scene.scene_id, static_cast<std::size_t>(j),
                                  planted, scene.objects.back().class_id,
                                  static_cast<std::size_t>(count)});
    }
    scene.feature =
        cfg.context_offset * context_dirs[context] + gaussian(rng, d, cfg.offset_sigma);
    out.scene_context.push_back(context);
    out.scenes.push_back(std::move(scene));
  }
  return out;
}

void write_ground_truth(std::ostream& out, const std::vector<GroundTruthRow>& rows) {
  out << "scene_id,object_index,is_out_of_context,class_id,object_count\n";
  for (const GroundTruthRow& r : rows) {
    out << r.scene_id << ',' << r.object_index << ',' << (r.out_of_context ? 1 : 0)
        << ',' << r.class_id << ',' << r.object_count << '\n';
  }
}

void write_ground_truth(const std::filesystem::path& path,
                        const std::vector<GroundTruthRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_ground_truth(out, rows);
}

std::vector<GroundTruthRow> read_ground_truth(std::istream& in) {
  std::vector<GroundTruthRow> rows;
  std::string line;
  if (!std::getline(in, line) ||
      line.rfind("scene_id,object_index,is_out_of_context", 0) != 0) {
    throw std::runtime_error("ground-truth file lacks the expected header");
  }
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::istringstream fields(line);
    GroundTruthRow r;
    std::string cell;
    int flag = 0;
    char comma = 0;
    if (!std::getline(fields, r.scene_id, ',') ||
        !(fields >> r.object_index >> comma >> flag >> comma >> r.class_id >> comma >>
          r.object_count)) {
      throw std::runtime_error("malformed ground-truth line " + std::to_string(number));
    }
    r.out_of_context = flag != 0;
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<GroundTruthRow> read_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_ground_truth(in);
}

Vector crop_feature(const SceneRecord& scene, const Rect& rect,
                    std::optional<std::size_t> masked) {
  Vector sum;
  double weight = 0.0;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const ObjectBox& b = scene.objects[i];
    if ((masked && *masked == i) || b.feature.size() == 0) continue;
    const double area = b.area();
    if (!(area > 0.0)) continue;
    const double w = b.rect().intersection(rect).area() / area;
    if (w <= 0.0) continue;
    if (weight == 0.0) {
      sum = w * b.feature;
    } else {
      sum += w * b.feature;
    }
    weight += w;
  }
  if (weight == 0.0) {
    throw EmptyCrop("crop of scene " + scene.scene_id + " contains no object");
  }
  Vector out = sum / weight;
  if (scene.feature.size() == out.size()) {
    out += scene.feature;
  } else if (scene.feature.size() != 0) {
    throw std::invalid_argument("scene offset and object features differ in size");
  }
  return out;
}

Vector whole_scene_feature(const SceneRecord& scene, std::optional<std::size_t> masked) {
  return crop_feature(scene, scene.extent.rect(), masked);
}

Vector region_feature(const SceneRecord& scene, const Region& region) {
  return crop_feature(scene, region.bounds);
}

Vector augment_view(const Vector& feature, std::uint64_t view_seed,
                    const ViewAugmentation& cfg) {
  Rng rng(view_seed);
  Vector out = feature;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (cfg.noise_sigma > 0.0) out[i] += normal(rng, 0.0, cfg.noise_sigma);
    if (cfg.dropout > 0.0 && uniform(rng, 0.0, 1.0) < cfg.dropout) out[i] = 0.0;
  }
  return out;
}

Vector realize_crop(const SceneRecord& scene, const CropDescriptor& crop,
                    const ViewAugmentation& cfg) {
  Vector f = crop_feature(scene, crop.rect);
  return crop.augment ? augment_view(f, crop.view_seed, cfg) : f;
}

}  // namespace hcl
