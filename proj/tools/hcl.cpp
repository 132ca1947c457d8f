// Command-line entry point: data generation, training, evaluation, property
// checks and parameter sweeps.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "hcl/analysis.hpp"
#include "hcl/checks.hpp"
#include "hcl/config.hpp"
#include "hcl/evaluation.hpp"
#include "hcl/scene_io.hpp"
#include "hcl/synthetic_data.hpp"
#include "hcl/trainer.hpp"

#ifndef HCL_GIT_DESCRIBE
#define HCL_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kScenesFile = "scenes.jsonl";
constexpr const char* kGroundTruthFile = "ground_truth.csv";
constexpr const char* kCheckpointFile = "checkpoint.bin";
constexpr const char* kMetricsFile = "metrics.jsonl";
constexpr const char* kManifestFile = "manifest.json";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.config, "YAML configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", flags.overrides, "Override one dotted key, e.g. train.lambda=0.5");
  cmd->add_option("--seed", flags.seed, "Master seed (overrides the config)");
}

// Built-in defaults, then the file, then --set, then explicit flags.
hcl::RunConfig resolve_config(const ConfigFlags& flags) {
  hcl::RunConfig cfg = flags.config.empty() ? hcl::parse_config("") : hcl::load_config(flags.config);
  for (const std::string& kv : flags.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got " + kv);
    hcl::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (flags.seed) cfg.seed = *flags.seed;
  cfg.resolve_seeds();
  cfg.validate();
  return cfg;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string config_hash(const hcl::RunConfig& cfg) { return hex(hcl::fnv1a(hcl::to_yaml(cfg))); }

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
  }
  fs::rename(tmp, path);
}

void write_manifest(const fs::path& dir, const std::string& command, const hcl::RunConfig& cfg,
                    const json& inputs, const std::vector<std::string>& outputs,
                    const json& metrics = json::object(),
                    const std::string& file = kManifestFile) {
  json m;
  m["command"] = command;
  m["version"] = HCL_GIT_DESCRIBE;
  m["seed"] = cfg.seed;
  m["config_hash"] = config_hash(cfg);
  m["config"] = hcl::to_yaml(cfg);
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  m["metrics"] = metrics;
  write_text(dir / file, m.dump(2) + "\n");
}

struct DataPaths {
  fs::path scenes;
  fs::path ground_truth;  // may not exist
};

DataPaths data_paths(const std::string& data, const std::string& ground_truth) {
  if (data.empty()) throw UsageError("--data is required");
  DataPaths p;
  if (fs::is_directory(data)) {
    p.scenes = fs::path(data) / kScenesFile;
    p.ground_truth = fs::path(data) / kGroundTruthFile;
  } else {
    p.scenes = data;
    p.ground_truth = fs::path(data).parent_path() / kGroundTruthFile;
  }
  if (!ground_truth.empty()) p.ground_truth = ground_truth;
  if (!fs::exists(p.scenes)) throw std::runtime_error("missing scene file " + p.scenes.string());
  return p;
}

fs::path checkpoint_path(const std::string& checkpoint) {
  if (checkpoint.empty()) throw UsageError("--checkpoint is required");
  fs::path p = checkpoint;
  if (fs::is_directory(p)) p /= kCheckpointFile;
  if (!fs::exists(p)) throw std::runtime_error("missing checkpoint " + p.string());
  return p;
}

void save_snapshot_atomic(const hcl::Trainer& trainer, const fs::path& path) {
  const fs::path tmp = path.string() + ".tmp";
  trainer.save_snapshot(tmp);
  fs::rename(tmp, path);
}

std::string metrics_log(const std::vector<hcl::EpochMetrics>& history) {
  std::string out;
  for (const auto& m : history) out += m.to_json() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// gen / convert
// ---------------------------------------------------------------------------

int run_gen(const ConfigFlags& flags, const std::string& out_dir) {
  const hcl::RunConfig cfg = resolve_config(flags);
  const fs::path dir = out_dir;
  fs::create_directories(dir);
  const hcl::SyntheticDataset ds = hcl::generate_dataset(cfg.data);
  hcl::write_scenes(dir / kScenesFile, ds.scenes);
  hcl::write_ground_truth(dir / kGroundTruthFile, ds.ground_truth);
  std::size_t planted = 0;
  for (const auto& r : ds.ground_truth) planted += r.out_of_context ? 1 : 0;
  json metrics;
  metrics["scenes"] = ds.scenes.size();
  metrics["objects"] = ds.ground_truth.size();
  metrics["planted"] = planted;
  write_manifest(dir, "gen", cfg, json::array(), {kScenesFile, kGroundTruthFile}, metrics);
  std::cout << "wrote " << ds.scenes.size() << " scenes to " << dir.string() << "\n";
  return 0;
}

int run_convert(const std::string& in_path, const std::string& out_path) {
  std::ifstream in(in_path);
  if (!in) throw std::runtime_error("cannot open " + in_path);
  const std::vector<hcl::SceneRecord> scenes = hcl::convert_detection_annotations(in);
  hcl::write_scenes(fs::path(out_path), scenes);
  std::cout << "converted " << scenes.size() << " scenes\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOutcome {
  bool stalled = false;
  std::size_t epochs = 0;
};

TrainOutcome train_into(const hcl::RunConfig& cfg, const std::vector<hcl::SceneRecord>& scenes,
                        const fs::path& dir, const std::string& resume, const json& inputs,
                        bool quiet) {
  fs::create_directories(dir);
  hcl::Trainer trainer(scenes, cfg.train);
  if (!resume.empty()) {
    fs::path p = resume;
    if (fs::is_directory(p)) p /= kCheckpointFile;
    trainer.restore_snapshot(p);
    if (!quiet) std::cerr << "resumed at epoch " << trainer.epoch() << "\n";
  }
  if (trainer.skipped_scenes() > 0 && !quiet) {
    std::cerr << "skipped " << trainer.skipped_scenes() << " scenes without usable objects\n";
  }
  write_manifest(dir, "train", cfg, inputs, {kCheckpointFile, kMetricsFile});
  trainer.train([&](const hcl::EpochMetrics& m) {
    save_snapshot_atomic(trainer, dir / kCheckpointFile);
    write_text(dir / kMetricsFile, metrics_log(trainer.history()));
    if (!quiet) std::cerr << m.to_json() << "\n";
  });
  save_snapshot_atomic(trainer, dir / kCheckpointFile);
  write_text(dir / kMetricsFile, metrics_log(trainer.history()));
  const hcl::StallState& stall = trainer.stall();
  json metrics;
  metrics["epochs"] = trainer.epoch();
  metrics["stalled"] = stall.fired;
  metrics["stall_epoch"] = stall.epoch;
  metrics["stall_min_ratio"] = stall.min_ratio;
  if (!trainer.history().empty()) {
    metrics["final"] = json::parse(trainer.history().back().to_json());
  }
  write_manifest(dir, "train", cfg, inputs, {kCheckpointFile, kMetricsFile}, metrics);
  return {stall.fired, static_cast<std::size_t>(trainer.epoch())};
}

int run_train(const ConfigFlags& flags, const std::string& data, const std::string& out_dir,
              const std::string& resume) {
  const hcl::RunConfig cfg = resolve_config(flags);
  const DataPaths paths = data_paths(data, "");
  const auto scenes = hcl::read_scenes(paths.scenes);
  json inputs = json::array({paths.scenes.string()});
  if (!resume.empty()) inputs.push_back(resume);
  const TrainOutcome r = train_into(cfg, scenes, out_dir, resume, inputs, false);
  std::cout << "trained " << r.epochs << " epochs" << (r.stalled ? " (stalled)" : "") << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

using Rows = std::vector<hcl::ResultRow>;

Rows eval_norms(const hcl::RunConfig& cfg, const hcl::ModelCheckpoint& model,
                const std::vector<hcl::SceneRecord>& scenes, const std::string& hash) {
  const hcl::NormAnalysis a =
      hcl::analyze_norms(scenes, model.encoder, model.config.ball(), cfg.eval.ndcg_cutoff,
                         cfg.eval.prototype_temperature);
  return {{"spearman_norm_object_count", a.spearman, hash, cfg.seed},
          {"ndcg_norm", a.ndcg_norm, hash, cfg.seed},
          {"ndcg_entropy", a.ndcg_entropy, hash, cfg.seed},
          {"ndcg_borda", a.ndcg_borda, hash, cfg.seed}};
}

Rows eval_ooc(const hcl::RunConfig& cfg, const hcl::ModelCheckpoint& model,
              const std::vector<hcl::SceneRecord>& scenes,
              const std::vector<hcl::GroundTruthRow>& truth, const std::string& hash) {
  const hcl::OutOfContextAnalysis a =
      hcl::analyze_out_of_context(scenes, truth, model.encoder, model.config.ball());
  return {{"ooc_map", a.map, hash, cfg.seed},
          {"ooc_random_baseline", a.random_baseline, hash, cfg.seed},
          {"ooc_scenes_scored", static_cast<double>(a.scenes_scored), hash, cfg.seed},
          {"ooc_scenes_with_positives", static_cast<double>(a.scenes_with_positives), hash,
           cfg.seed}};
}

Rows eval_prototypes(const hcl::RunConfig& cfg, const hcl::ModelCheckpoint& model,
                     const std::vector<hcl::SceneRecord>& scenes, const std::string& hash) {
  const hcl::PrototypeAnalysis a =
      hcl::analyze_prototypes(scenes, model.encoder, model.config.ball());
  return {{"prototype_accuracy", a.accuracy, hash, cfg.seed},
          {"majority_baseline", a.majority_baseline, hash, cfg.seed},
          {"prototype_classes", static_cast<double>(a.classes), hash, cfg.seed},
          {"prototype_test_points", static_cast<double>(a.test_points), hash, cfg.seed}};
}

Rows eval_tree(const hcl::RunConfig& cfg, const std::string& hash) {
  const hcl::TreeCheckConfig& t = cfg.eval.tree;
  const hcl::TreeAnalysis a =
      hcl::analyze_tree(t.depth, t.dimension, t.radius, t.steps, t.learning_rate, t.seeds, cfg.seed);
  Rows rows;
  for (const auto& s : a.seeds) {
    rows.push_back({"tree_hyperbolic_distortion", s.hyperbolic_distortion, hash, s.seed});
    rows.push_back({"tree_euclidean_distortion", s.euclidean_distortion, hash, s.seed});
  }
  rows.push_back({"tree_hyperbolic_wins", static_cast<double>(a.hyperbolic_wins), hash, cfg.seed});
  return rows;
}

std::string rows_text(const Rows& rows) {
  std::ostringstream s;
  hcl::write_results(s, rows);
  return s.str();
}

int run_eval(const std::string& what, const ConfigFlags& flags, const std::string& checkpoint,
             const std::string& data, const std::string& ground_truth, const std::string& out) {
  hcl::RunConfig cfg = resolve_config(flags);
  std::string hash = config_hash(cfg);
  Rows rows;
  json inputs = json::array();
  if (what == "tree") {
    rows = eval_tree(cfg, hash);
  } else {
    const fs::path ckpt = checkpoint_path(checkpoint);
    // Rows describe the trained model when its manifest is available.
    const fs::path train_manifest = ckpt.parent_path() / "manifest.json";
    if (fs::exists(train_manifest)) {
      std::ifstream in(train_manifest);
      const json m = json::parse(in, nullptr, false);
      if (m.is_object() && m.contains("seed") && m.contains("config_hash")) {
        if (!flags.seed) cfg.seed = m["seed"].get<std::uint64_t>();
        hash = m["config_hash"].get<std::string>();
      }
    }
    const DataPaths paths = data_paths(data, ground_truth);
    const hcl::ModelCheckpoint model = hcl::load_model(ckpt);
    const auto scenes = hcl::read_scenes(paths.scenes);
    inputs = json::array({ckpt.string(), paths.scenes.string()});
    if (what == "norms") {
      rows = eval_norms(cfg, model, scenes, hash);
    } else if (what == "prototypes") {
      rows = eval_prototypes(cfg, model, scenes, hash);
    } else {
      if (!fs::exists(paths.ground_truth)) {
        throw std::runtime_error("missing ground truth " + paths.ground_truth.string());
      }
      inputs.push_back(paths.ground_truth.string());
      rows = eval_ooc(cfg, model, scenes, hcl::read_ground_truth(paths.ground_truth), hash);
    }
  }
  const std::string text = rows_text(rows);
  if (out.empty()) {
    std::cout << text;
    return 0;
  }
  const fs::path dir = out;
  fs::create_directories(dir);
  const std::string file = "results_" + what + ".tsv";
  write_text(dir / file, text);
  json metrics;
  for (const auto& r : rows) metrics[r.metric] = r.value;
  write_manifest(dir, "eval " + what, cfg, inputs, {file}, metrics, "manifest_" + what + ".json");
  std::cout << text;
  return 0;
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

int run_check(const std::string& what, std::uint64_t seed) {
  hcl::CheckOptions options;
  options.seed = seed;
  std::vector<hcl::CheckResult> results;
  auto add = [&](std::vector<hcl::CheckResult> r) { results.insert(results.end(), r.begin(), r.end()); };
  if (what == "geometry" || what == "all") add(hcl::check_geometry(options));
  if (what == "gradients" || what == "all") add(hcl::check_gradients(options));
  if (what == "metrics" || what == "all") add(hcl::check_metrics(options));
  hcl::print_checks(std::cout, results);
  const bool ok = hcl::all_passed(results);
  std::cout << (ok ? "all checks passed" : "some checks FAILED") << "\n";
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

std::vector<std::string> split_values(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const std::string& item : raw) {
    std::stringstream s(item);
    std::string v;
    while (std::getline(s, v, ',')) {
      if (!v.empty()) out.push_back(v);
    }
  }
  return out;
}

std::string safe_name(std::string s) {
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_')) c = '_';
  }
  return s;
}

int run_sweep(const ConfigFlags& flags, std::string param, const std::vector<std::string>& raw_values,
              const std::string& data, const std::string& out_dir) {
  if (param == "\xce\xbb") param = "lambda";
  const std::string key = hcl::sweep_key(param);
  const std::vector<std::string> values = split_values(raw_values);
  if (values.empty()) throw UsageError("--values needs at least one value");
  const hcl::RunConfig base = resolve_config(flags);
  // Validate every value before any run starts.
  std::vector<hcl::RunConfig> configs;
  for (const std::string& v : values) {
    hcl::RunConfig c = base;
    hcl::apply_override(c, key, v);
    c.resolve_seeds();
    c.validate();
    configs.push_back(c);
  }

  const fs::path root = out_dir;
  fs::create_directories(root);
  std::vector<hcl::SceneRecord> scenes;
  std::vector<hcl::GroundTruthRow> truth;
  json inputs = json::array();
  if (data.empty()) {
    const hcl::SyntheticDataset ds = hcl::generate_dataset(base.data);
    hcl::write_scenes(root / kScenesFile, ds.scenes);
    hcl::write_ground_truth(root / kGroundTruthFile, ds.ground_truth);
    scenes = ds.scenes;
    truth = ds.ground_truth;
    inputs.push_back((root / kScenesFile).string());
  } else {
    const DataPaths paths = data_paths(data, "");
    scenes = hcl::read_scenes(paths.scenes);
    inputs.push_back(paths.scenes.string());
    if (fs::exists(paths.ground_truth)) truth = hcl::read_ground_truth(paths.ground_truth);
  }
  bool planted = false;
  for (const auto& r : truth) planted = planted || r.out_of_context;

  std::ostringstream report;
  report << std::setprecision(17) << "param\tvalue\tstalled\tepochs\tloss_euclidean\tloss_hyperbolic"
         << "\tsaturated_fraction\tspearman_norm_object_count\tndcg_norm\tooc_map"
         << "\tooc_random_baseline\trun_dir\n";
  json runs = json::array();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const hcl::RunConfig& cfg = configs[i];
    const fs::path dir = root / (safe_name(param) + "=" + safe_name(values[i]));
    std::cerr << "sweep: " << key << "=" << values[i] << "\n";
    const TrainOutcome outcome = train_into(cfg, scenes, dir, "", inputs, true);
    const hcl::ModelCheckpoint model = hcl::load_model(dir / kCheckpointFile);
    const std::string hash = config_hash(cfg);
    Rows rows = eval_norms(cfg, model, scenes, hash);
    double map = std::nan(""), baseline = std::nan("");
    if (planted) {
      const Rows ooc = eval_ooc(cfg, model, scenes, truth, hash);
      map = ooc[0].value;
      baseline = ooc[1].value;
      rows.insert(rows.end(), ooc.begin(), ooc.end());
    }
    write_text(dir / "results.tsv", rows_text(rows));

    std::ifstream log(dir / kMetricsFile);
    std::string last, line;
    while (std::getline(log, line)) if (!line.empty()) last = line;
    const json final_epoch = last.empty() ? json::object() : json::parse(last);
    auto field = [&](const char* k) {
      return final_epoch.contains(k) ? final_epoch[k].get<double>() : std::nan("");
    };
    report << param << '\t' << values[i] << '\t' << (outcome.stalled ? "stalled" : "ok") << '\t'
           << outcome.epochs << '\t' << field("loss_euclidean") << '\t' << field("loss_hyperbolic")
           << '\t' << field("saturated_fraction") << '\t' << rows[0].value << '\t' << rows[1].value
           << '\t' << map << '\t' << baseline << '\t' << dir.filename().string() << '\n';
    runs.push_back({{"value", values[i]}, {"dir", dir.filename().string()},
                    {"stalled", outcome.stalled}});
  }
  write_text(root / "report.tsv", report.str());
  json metrics;
  metrics["param"] = param;
  metrics["key"] = key;
  metrics["runs"] = runs;
  write_manifest(root, "sweep", base, inputs, {"report.tsv"}, metrics);
  std::cout << report.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical contrastive learning on the Poincare ball"};
  app.require_subcommand(1);
  app.set_version_flag("--version", HCL_GIT_DESCRIBE);

  ConfigFlags gen_flags;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic scene dataset");
  add_config_flags(gen, gen_flags);
  gen->add_option("--out", gen_out, "Output directory")->required();

  std::string convert_in, convert_out;
  auto* convert = app.add_subcommand("convert", "Convert detection annotations to scene records");
  convert->add_option("--in", convert_in, "Annotation JSON")->required()->check(CLI::ExistingFile);
  convert->add_option("--out", convert_out, "Output scene file (JSON lines)")->required();

  ConfigFlags train_flags;
  std::string train_data, train_out, train_resume;
  auto* train = app.add_subcommand("train", "Train an encoder");
  add_config_flags(train, train_flags);
  train->add_option("--data", train_data, "Dataset directory or scene file")->required();
  train->add_option("--out", train_out, "Run directory")->required();
  train->add_option("--resume", train_resume, "Snapshot (or run directory) to resume from");

  ConfigFlags eval_flags;
  std::string eval_what, eval_ckpt, eval_data, eval_truth, eval_out;
  auto* eval = app.add_subcommand("eval", "Evaluate a trained encoder");
  add_config_flags(eval, eval_flags);
  eval->add_option("analysis", eval_what, "norms | ooc | prototypes | tree")
      ->required()
      ->check(CLI::IsMember({"norms", "ooc", "prototypes", "tree"}));
  eval->add_option("--checkpoint", eval_ckpt, "Snapshot or run directory");
  eval->add_option("--data", eval_data, "Dataset directory or scene file");
  eval->add_option("--ground-truth", eval_truth, "Ground-truth CSV (default: next to the data)");
  eval->add_option("--out", eval_out, "Output directory (default: print only)");

  std::string check_what;
  std::uint64_t check_seed = 0;
  auto* check = app.add_subcommand("check", "Run the property suites");
  check->add_option("suite", check_what, "gradients | geometry | metrics | all")
      ->required()
      ->check(CLI::IsMember({"gradients", "geometry", "metrics", "all"}));
  check->add_option("--seed", check_seed, "Seed for the random cases");

  ConfigFlags sweep_flags;
  std::string sweep_param, sweep_data, sweep_out;
  std::vector<std::string> sweep_values;
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate one run per parameter value");
  add_config_flags(sweep, sweep_flags);
  sweep->add_option("--param", sweep_param, "lambda | r | optimizer | hierarchy | head | space")
      ->required();
  sweep->add_option("--values", sweep_values, "Comma-separated values")->required();
  sweep->add_option("--data", sweep_data, "Dataset (default: generate from the config)");
  sweep->add_option("--out", sweep_out, "Sweep directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return run_gen(gen_flags, gen_out);
    if (*convert) return run_convert(convert_in, convert_out);
    if (*train) return run_train(train_flags, train_data, train_out, train_resume);
    if (*eval) return run_eval(eval_what, eval_flags, eval_ckpt, eval_data, eval_truth, eval_out);
    if (*check) return run_check(check_what, check_seed);
    if (*sweep) return run_sweep(sweep_flags, sweep_param, sweep_values, sweep_data, sweep_out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const hcl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const hcl::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
