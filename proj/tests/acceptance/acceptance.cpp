// Prints one PASS/FAIL line per acceptance criterion with the measured values.
// Exit status is 0 once every criterion has been evaluated; --strict also
// exits 1 when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "hcl/analysis.hpp"
#include "hcl/checks.hpp"
#include "hcl/config.hpp"
#include "hcl/synthetic_data.hpp"
#include "hcl/trainer.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* pattern, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt("%.3f", v[i]);
  return s + "]";
}

int failures = 0;

void report(const std::string& id, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << id << ' ' << (pass ? "PASS" : "FAIL") << ' ' << detail << std::endl;
}

const hcl::CheckResult& find(const std::vector<hcl::CheckResult>& rs, const std::string& name) {
  for (const auto& r : rs) {
    if (r.name == name) return r;
  }
  throw std::runtime_error("missing check " + name);
}

bool all_of(const std::vector<hcl::CheckResult>& rs, const std::vector<std::string>& names,
            std::string& detail) {
  bool ok = true;
  for (const auto& n : names) {
    const auto& r = find(rs, n);
    ok = ok && r.passed;
    detail += " " + n.substr(n.find('.') + 1) + "=" + fmt("%.3g", r.measured) +
              (r.passed ? "" : "(>" + fmt("%.3g", r.bound) + ")");
  }
  return ok;
}

struct Run {
  hcl::Trainer trainer;
  hcl::SyntheticDataset data;
  double seconds = 0.0;
};

Run train(std::uint64_t seed, double lambda, double planting) {
  hcl::RunConfig cfg;
  cfg.seed = seed;
  cfg.data.planting_rate = planting;
  cfg.train.lambda = lambda;
  cfg.resolve_seeds();
  cfg.validate();
  const auto t0 = Clock::now();
  hcl::SyntheticDataset data = hcl::generate_dataset(cfg.data);
  hcl::Trainer trainer(data.scenes, cfg.train);
  trainer.train();
  std::cerr << "  seed " << seed << " lambda " << lambda << " planting " << planting << ": "
            << fmt("%.1f", seconds_since(t0)) << " s" << std::endl;
  return {std::move(trainer), std::move(data), seconds_since(t0)};
}

std::string history_log(const hcl::Trainer& t) {
  std::string s;
  for (const auto& m : t.history()) s += m.to_json() + "\n";
  return s;
}

std::string snapshot_bytes(const hcl::Trainer& t) {
  std::ostringstream out(std::ios::binary);
  t.save_snapshot(out);
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  int seeds = 5;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--strict") {
      strict = true;
    } else if (a == "--seeds" && i + 1 < argc) {
      seeds = std::stoi(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--strict] [--seeds N]\n";
      return 2;
    }
  }
  try {
    const hcl::RunConfig defaults;

    const auto geometry = hcl::check_geometry();
    std::string d1;
    const bool ac1 = all_of(geometry,
                            {"geometry.left_identity", "geometry.left_inverse",
                             "geometry.self_distance", "geometry.symmetry",
                             "geometry.origin_closed_form_rel", "geometry.runtime_seconds"},
                            d1);
    report("AC1", ac1, "geometry exactness:" + d1);

    const auto gradients = hcl::check_gradients();
    std::string d2;
    std::vector<std::string> names;
    for (const auto& r : gradients) names.push_back(r.name);
    const bool ac2 = all_of(gradients, names, d2);
    report("AC2", ac2, "gradient fidelity:" + d2);

    std::string d3;
    const bool ac3 =
        all_of(geometry, {"geometry.rsgd_scale_rel", "geometry.rsgd_scale_value"}, d3);
    report("AC3", ac3, "RSGD scale at r-eps:" + d3);

    std::string d4;
    const bool ac4 = all_of(
        geometry, {"geometry.ratio_increasing", "geometry.ratio_at_0.999r", "geometry.ratio_oracle"},
        d4);
    report("AC4", ac4, "perpendicular distance ratio:" + d4);

    {
      const auto& t = defaults.eval.tree;
      const auto t0 = Clock::now();
      const hcl::TreeAnalysis a =
          hcl::analyze_tree(t.depth, t.dimension, t.radius, t.steps, t.learning_rate, t.seeds, 0);
      const double secs = seconds_since(t0);
      std::vector<double> hyp, euc;
      for (const auto& s : a.seeds) {
        hyp.push_back(s.hyperbolic_distortion);
        euc.push_back(s.euclidean_distortion);
      }
      report("AC5", a.hyperbolic_wins >= 4 && secs < 120.0,
             "tree distortion: hyperbolic wins " + std::to_string(a.hyperbolic_wins) + "/" +
                 std::to_string(a.seeds.size()) + " hyperbolic=" + list(hyp) +
                 " euclidean=" + list(euc) + " runtime_s=" + fmt("%.1f", secs));
    }

    const auto metrics = hcl::check_metrics();
    std::string d6;
    names.clear();
    for (const auto& r : metrics) names.push_back(r.name);
    const bool ac6 = all_of(metrics, names, d6);
    report("AC6", ac6, "metric oracles:" + d6);

    // Norm hierarchy on the unplanted dataset.
    std::vector<double> rho_hyp, rho_base;
    double ac7_seconds = 0.0;
    bool any_fired_at_default = false;
    std::string default_stall;
    std::cerr << "training for AC7" << std::endl;
    for (int s = 0; s < seeds; ++s) {
      for (double lambda : {0.1, 0.0}) {
        const Run r = train(static_cast<std::uint64_t>(s), lambda, 0.0);
        ac7_seconds += r.seconds;
        const hcl::NormAnalysis a = hcl::analyze_norms(
            r.data.scenes, r.trainer.base(), r.trainer.config().ball(),
            defaults.eval.ndcg_cutoff, defaults.eval.prototype_temperature);
        (lambda > 0 ? rho_hyp : rho_base).push_back(a.spearman);
        if (lambda > 0) {
          any_fired_at_default = any_fired_at_default || r.trainer.stall().fired;
          default_stall += fmt(" %.3g", r.trainer.stall().min_ratio);
        }
      }
    }
    const double m_hyp = median(rho_hyp), m_base = median(rho_base);
    report("AC7", m_hyp >= 0.5 && std::abs(m_base) < 0.2 && ac7_seconds < 600.0,
           "norm vs object count: median spearman lambda=0.1 " + fmt("%.3f", m_hyp) +
               " (>=0.5) " + list(rho_hyp) + ", lambda=0 " + fmt("%.3f", m_base) +
               " (|.|<0.2) " + list(rho_base) + " runtime_s=" + fmt("%.0f", ac7_seconds));

    // Out-of-context ranking with 10% planted objects.
    std::vector<double> gain, map_hyp, map_base;
    std::cerr << "training for AC8" << std::endl;
    for (int s = 0; s < seeds; ++s) {
      for (double lambda : {0.1, 0.0}) {
        const Run r = train(static_cast<std::uint64_t>(s), lambda, 0.1);
        const hcl::OutOfContextAnalysis a =
            hcl::analyze_out_of_context(r.data.scenes, r.data.ground_truth, r.trainer.base(),
                                        r.trainer.config().ball());
        if (lambda > 0) {
          map_hyp.push_back(a.map);
          gain.push_back(a.map - a.random_baseline);
        } else {
          map_base.push_back(a.map);
        }
      }
    }
    const double m_gain = median(gain), mh = median(map_hyp), mb = median(map_base);
    report("AC8", m_gain >= 0.10 && mh > mb,
           "out-of-context mAP: median gain over random " + fmt("%.3f", m_gain) +
               " (>=0.10) " + list(gain) + ", lambda=0.1 " + fmt("%.3f", mh) + " " +
               list(map_hyp) + " vs lambda=0 " + fmt("%.3f", mb) + " " + list(map_base));

    // Collapse detector: lambda=0.5 must fire, the lambda=0.1 runs must not.
    {
      std::cerr << "training for AC9" << std::endl;
      const Run r = train(0, 0.5, 0.0);
      const hcl::StallState& st = r.trainer.stall();
      const double sat = r.trainer.history().empty()
                             ? 0.0
                             : r.trainer.history().back().saturated_fraction;
      report("AC9", st.fired && !any_fired_at_default,
             std::string("stall detector: lambda=0.5 ") + (st.fired ? "fired" : "did not fire") +
                 " min_ratio=" + fmt("%.3g", st.min_ratio) + " final_saturated=" +
                 fmt("%.3f", sat) + "; lambda=0.1 " +
                 (any_fired_at_default ? "fired" : "did not fire") + " min_ratio=[" +
                 default_stall.substr(1) + "]");
    }

    // Determinism and resume on a reduced run.
    {
      hcl::RunConfig cfg;
      cfg.seed = 7;
      cfg.data.scenes = 300;
      cfg.train.epochs = 4;
      cfg.resolve_seeds();
      const auto scenes = hcl::generate_dataset(cfg.data).scenes;
      hcl::Trainer a(scenes, cfg.train), b(scenes, cfg.train);
      a.train();
      b.train();
      const bool same_log = history_log(a) == history_log(b);
      hcl::TrainConfig half = cfg.train;
      half.epochs = 2;
      hcl::Trainer first(scenes, half);
      first.train();
      std::istringstream saved(snapshot_bytes(first), std::ios::binary);
      hcl::Trainer resumed(scenes, cfg.train);
      resumed.restore_snapshot(saved);
      resumed.train();
      const bool same_resume = history_log(resumed) == history_log(a) &&
                               snapshot_bytes(resumed) == snapshot_bytes(a);
      report("AC10", same_log && same_resume,
             std::string("determinism: repeated run logs ") +
                 (same_log ? "identical" : "differ") + ", resume after epoch 2 " +
                 (same_resume ? "identical" : "differs"));
    }
  } catch (const std::exception& e) {
    std::cerr << "acceptance aborted: " << e.what() << "\n";
    return 2;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << std::endl;
  return strict && failures > 0 ? 1 : 0;
}
