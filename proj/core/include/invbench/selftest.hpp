#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace invbench {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;   ///< worst value observed
  double threshold = 0.0;  ///< pass iff measured <= threshold
  std::string detail;
};

/// Training-free property checks: analytic gradients against central finite
/// differences, rotation orthogonality, shuffle multiset preservation and
/// byte-level determinism of a small end-to-end run.
std::vector<CheckResult> run_selftest(std::uint64_t seed, int n_cases = 100);

}  // namespace invbench
