#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace hcl {

/// One property with its measured value and the bound it must meet.
struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double bound = 0.0;
  std::string detail;
};

struct CheckOptions {
  std::uint64_t seed = 0;
  int geometry_samples = 1000;
  int gradient_configs = 50;
  int metric_cases = 1000;
  int shuffles = 10000;
};

/// Mobius identities, metric axioms, the origin closed form, the RSGD scale
/// at the clip boundary, and the perpendicular distance ratio.
std::vector<CheckResult> check_geometry(const CheckOptions& options = {});

/// Central finite differences against the analytic gradients of d_D, the exp
/// map, both losses, and the encoder-to-loss path in both head modes.
std::vector<CheckResult> check_gradients(const CheckOptions& options = {});

/// NDCG and AP against exhaustive-permutation oracles, and the Monte Carlo
/// random-ranking AP.
std::vector<CheckResult> check_metrics(const CheckOptions& options = {});

bool all_passed(const std::vector<CheckResult>& results);

/// One "PASS|FAIL name measured bound detail" line per result.
void print_checks(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace hcl
