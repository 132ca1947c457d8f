#include "hcl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include <yaml-cpp/yaml.h>

namespace hcl {

namespace {

constexpr std::uint64_t kDataStream = 0x64617461;     // "data"
constexpr std::uint64_t kTrainStream = 0x747261696e;  // "train"

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Reads the keys of one mapping and rejects the ones nobody asked for.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) {
      throw ConfigError(label() + " must be a mapping");
    }
  }

  template <class T>
  void get(const std::string& key, T& out) {
    const YAML::Node v = lookup(key);
    if (!v) return;
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (v.IsScalar() && !v.Scalar().empty() && v.Scalar()[0] == '-') {
        throw ConfigError(join(path_, key) + ": must be nonnegative");
      }
    }
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(join(path_, key) + ": wrong type");
    }
  }

  void get(const std::string& key, std::optional<double>& out) {
    const YAML::Node v = lookup(key);
    if (!v) return;
    if (v.IsNull()) {
      out.reset();
      return;
    }
    double d = 0.0;
    get(key, d);
    out = d;
  }

  template <class Enum, class Parse>
  void get_enum(const std::string& key, Enum& out, Parse parse) {
    std::string text;
    const YAML::Node v = lookup(key);
    if (!v) return;
    get(key, text);
    try {
      out = parse(text);
    } catch (const std::exception& e) {
      throw ConfigError(join(path_, key) + ": " + e.what());
    }
  }

  Section child(const std::string& key) {
    const YAML::Node v = lookup(key);
    return Section(v ? v : YAML::Node(), join(path_, key));
  }

  void finish() const {
    if (!node_ || node_.IsNull()) return;
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError("unknown config key " + join(path_, key));
    }
  }

 private:
  YAML::Node lookup(const std::string& key) {
    seen_.insert(key);
    const YAML::Node& n = node_;
    if (!n || n.IsNull()) return YAML::Node(YAML::NodeType::Undefined);
    return n[key];
  }

  std::string label() const { return path_.empty() ? "config" : path_; }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_data(Section s, GeneratorConfig& g) {
  s.get("classes", g.classes);
  s.get("contexts", g.contexts);
  s.get("feature_dim", g.feature_dim);
  s.get("scenes", g.scenes);
  s.get("min_objects", g.min_objects);
  s.get("max_objects", g.max_objects);
  s.get("separation", g.separation);
  s.get("mean_norm", g.mean_norm);
  s.get("noise_sigma", g.noise_sigma);
  s.get("planting_rate", g.planting_rate);
  s.get("context_offset", g.context_offset);
  s.get("offset_sigma", g.offset_sigma);
  s.get("scene_width", g.scene_width);
  s.get("scene_height", g.scene_height);
  s.get("min_box_side", g.min_box_side);
  s.get("max_box_side", g.max_box_side);
  s.finish();
}

void read_train(Section s, TrainConfig& t) {
  s.get("batch_size", t.batch_size);
  s.get("epochs", t.epochs);
  s.get("learning_rate", t.learning_rate);
  s.get("warmup_epochs", t.warmup_epochs);
  s.get("sgd_momentum", t.sgd_momentum);
  s.get("weight_decay", t.weight_decay);
  s.get("lambda", t.lambda);
  s.get("temperature", t.temperature);
  s.get("radius", t.radius);
  s.get("clip_epsilon", t.clip_epsilon);
  s.get_enum("optimizer", t.optimizer, parse_optimizer_mode);
  s.get_enum("hierarchy", t.hierarchy, parse_hierarchy_mode);
  s.get_enum("scene_loss_space", t.scene_loss_space, parse_scene_loss_space);
  s.get("momentum", t.momentum);
  s.get("queue_size", t.queue_size);
  s.get("queue_warmup", t.queue_warmup);
  s.get("stall_ratio", t.stall_ratio);
  s.get("stop_on_stall", t.stop_on_stall);
  {
    Section e = s.child("encoder");
    e.get("hidden", t.encoder.hidden);
    e.get("embedding_dim", t.encoder.embedding_dim);
    e.get_enum("head", t.encoder.head, parse_head_mode);
    e.get("head_init_gain", t.encoder.head_init_gain);
    e.finish();
  }
  {
    Section p = s.child("sampling");
    p.get("whole_scene_probability", t.sampling.whole_scene_probability);
    p.get("scene_negatives", t.sampling.scene_negatives);
    Section r = p.child("region");
    r.get("min_extra", t.sampling.region.min_extra);
    r.get("max_extra", t.sampling.region.max_extra);
    r.finish();
    Section x = p.child("expansion");
    x.get("target_side", t.sampling.expansion.target_side);
    x.get("jitter_low", t.sampling.expansion.jitter_low);
    x.get("jitter_high", t.sampling.expansion.jitter_high);
    x.finish();
    p.finish();
  }
  {
    Section a = s.child("augmentation");
    a.get("noise_sigma", t.augmentation.noise_sigma);
    a.get("dropout", t.augmentation.dropout);
    a.finish();
  }
  s.finish();
}

void read_eval(Section s, EvalConfig& e) {
  s.get("ndcg_cutoff", e.ndcg_cutoff);
  s.get("prototype_temperature", e.prototype_temperature);
  Section t = s.child("tree");
  t.get("depth", e.tree.depth);
  t.get("dimension", e.tree.dimension);
  t.get("radius", e.tree.radius);
  t.get("steps", e.tree.steps);
  t.get("learning_rate", e.tree.learning_rate);
  t.get("seeds", e.tree.seeds);
  t.finish();
  s.finish();
}

RunConfig from_node(const YAML::Node& root) {
  RunConfig cfg;
  Section s(root, "");
  s.get("seed", cfg.seed);
  read_data(s.child("data"), cfg.data);
  read_train(s.child("train"), cfg.train);
  read_eval(s.child("eval"), cfg.eval);
  s.finish();
  cfg.resolve_seeds();
  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return cfg;
}

YAML::Node to_node(const RunConfig& c) {
  YAML::Node root;
  root["seed"] = c.seed;
  YAML::Node d = root["data"];
  const GeneratorConfig& g = c.data;
  d["classes"] = g.classes;
  d["contexts"] = g.contexts;
  d["feature_dim"] = g.feature_dim;
  d["scenes"] = g.scenes;
  d["min_objects"] = g.min_objects;
  d["max_objects"] = g.max_objects;
  d["separation"] = g.separation;
  d["mean_norm"] = g.mean_norm;
  d["noise_sigma"] = g.noise_sigma;
  d["planting_rate"] = g.planting_rate;
  d["context_offset"] = g.context_offset;
  d["offset_sigma"] = g.offset_sigma;
  d["scene_width"] = g.scene_width;
  d["scene_height"] = g.scene_height;
  d["min_box_side"] = g.min_box_side;
  d["max_box_side"] = g.max_box_side;

  YAML::Node t = root["train"];
  const TrainConfig& tc = c.train;
  t["batch_size"] = tc.batch_size;
  t["epochs"] = tc.epochs;
  if (tc.learning_rate) {
    t["learning_rate"] = *tc.learning_rate;
  } else {
    t["learning_rate"] = YAML::Node(YAML::NodeType::Null);
  }
  t["warmup_epochs"] = tc.warmup_epochs;
  t["sgd_momentum"] = tc.sgd_momentum;
  t["weight_decay"] = tc.weight_decay;
  t["lambda"] = tc.lambda;
  t["temperature"] = tc.temperature;
  t["radius"] = tc.radius;
  t["clip_epsilon"] = tc.clip_epsilon;
  t["optimizer"] = std::string(to_string(tc.optimizer));
  t["hierarchy"] = std::string(to_string(tc.hierarchy));
  t["scene_loss_space"] = std::string(to_string(tc.scene_loss_space));
  t["momentum"] = tc.momentum;
  t["queue_size"] = tc.queue_size;
  t["queue_warmup"] = tc.queue_warmup;
  t["stall_ratio"] = tc.stall_ratio;
  t["stop_on_stall"] = tc.stop_on_stall;
  YAML::Node e = t["encoder"];
  e["hidden"] = tc.encoder.hidden;
  e["hidden"].SetStyle(YAML::EmitterStyle::Flow);
  e["embedding_dim"] = tc.encoder.embedding_dim;
  e["head"] = std::string(to_string(tc.encoder.head));
  e["head_init_gain"] = tc.encoder.head_init_gain;
  YAML::Node p = t["sampling"];
  p["whole_scene_probability"] = tc.sampling.whole_scene_probability;
  p["scene_negatives"] = tc.sampling.scene_negatives;
  p["region"]["min_extra"] = tc.sampling.region.min_extra;
  p["region"]["max_extra"] = tc.sampling.region.max_extra;
  p["expansion"]["target_side"] = tc.sampling.expansion.target_side;
  p["expansion"]["jitter_low"] = tc.sampling.expansion.jitter_low;
  p["expansion"]["jitter_high"] = tc.sampling.expansion.jitter_high;
  t["augmentation"]["noise_sigma"] = tc.augmentation.noise_sigma;
  t["augmentation"]["dropout"] = tc.augmentation.dropout;

  YAML::Node v = root["eval"];
  v["ndcg_cutoff"] = c.eval.ndcg_cutoff;
  v["prototype_temperature"] = c.eval.prototype_temperature;
  v["tree"]["depth"] = c.eval.tree.depth;
  v["tree"]["dimension"] = c.eval.tree.dimension;
  v["tree"]["radius"] = c.eval.tree.radius;
  v["tree"]["steps"] = c.eval.tree.steps;
  v["tree"]["learning_rate"] = c.eval.tree.learning_rate;
  v["tree"]["seeds"] = c.eval.tree.seeds;
  return root;
}

std::string emit(const YAML::Node& node) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << node;
  return std::string(out.c_str()) + "\n";
}

}  // namespace

void RunConfig::resolve_seeds() {
  data.seed = derive_seed(seed, kDataStream);
  train.seed = derive_seed(seed, kTrainStream);
}

void RunConfig::validate() const {
  data.validate();
  train.validate();
  if (static_cast<int>(train.encoder.hidden.size()) < 1) {
    throw ConfigError("train.encoder.hidden needs at least one layer");
  }
  for (int h : train.encoder.hidden) {
    if (h < 1) throw ConfigError("train.encoder.hidden widths must be positive");
  }
  if (train.encoder.embedding_dim < 1) {
    throw ConfigError("train.encoder.embedding_dim must be positive");
  }
  if (!(train.encoder.head_init_gain > 0.0)) {
    throw ConfigError("train.encoder.head_init_gain must be positive");
  }
  if (train.sampling.region.min_extra < 0 ||
      train.sampling.region.max_extra < train.sampling.region.min_extra) {
    throw ConfigError("train.sampling.region needs 0 <= min_extra <= max_extra");
  }
  const ExpansionConfig& x = train.sampling.expansion;
  if (!(x.target_side > 0.0) || !(x.jitter_low > 0.0) || !(x.jitter_high >= x.jitter_low)) {
    throw ConfigError("train.sampling.expansion is invalid");
  }
  if (!(eval.prototype_temperature > 0.0)) {
    throw ConfigError("eval.prototype_temperature must be positive");
  }
  const TreeCheckConfig& t = eval.tree;
  if (t.depth < 1 || t.dimension < 1 || !(t.radius > 0.0) || t.steps < 1 ||
      !(t.learning_rate > 0.0) || t.seeds < 1) {
    throw ConfigError("eval.tree is invalid");
  }
}

RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  if (root && !root.IsNull() && !root.IsMap()) {
    throw ConfigError("config must be a mapping at the top level");
  }
  return from_node(root);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  YAML::Node root = to_node(cfg);
  YAML::Node parsed;
  try {
    parsed = YAML::Load(value);
  } catch (const YAML::Exception& e) {
    throw ConfigError(key + ": cannot parse value '" + value + "'");
  }
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  if (parts.empty()) throw ConfigError("empty config key");
  // Walk with fresh handles; yaml-cpp node assignment would alias.
  std::vector<YAML::Node> chain{root};
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node next = chain.back()[parts[i]];
    if (!next || !next.IsMap()) throw ConfigError("unknown config key " + key);
    chain.push_back(next);
  }
  YAML::Node leaf_parent = chain.back();
  if (!leaf_parent[parts.back()]) throw ConfigError("unknown config key " + key);
  leaf_parent[parts.back()] = parsed;
  cfg = from_node(YAML::Load(emit(root)));
}

std::string to_yaml(const RunConfig& cfg) { return emit(to_node(cfg)); }

std::string sweep_key(const std::string& param) {
  if (param == "lambda" || param == "λ") return "train.lambda";
  if (param == "r" || param == "radius") return "train.radius";
  if (param == "optimizer") return "train.optimizer";
  if (param == "hierarchy") return "train.hierarchy";
  if (param == "head") return "train.encoder.head";
  if (param == "space") return "train.scene_loss_space";
  throw ConfigError("unknown sweep parameter '" + param +
                    "' (expected lambda, r, optimizer, hierarchy, head or space)");
}

}  // namespace hcl
