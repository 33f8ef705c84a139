#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cdsd::cli {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelftestOptions {
  bool inject_gradient_bug = false;  // negative control for the finite-difference check
  unsigned long long seed = 12345;
};

CheckResult check_finite_differences(const SelftestOptions& opts);
CheckResult check_kl_monte_carlo(const SelftestOptions& opts);
CheckResult check_stabilization(const SelftestOptions& opts);
CheckResult check_mcc_assignment(const SelftestOptions& opts);
CheckResult check_varimax_recovery(const SelftestOptions& opts);

std::vector<CheckResult> run_selftest(const SelftestOptions& opts);

/// Prints one line per check; returns 0 when all pass.
int cmd_selftest(const SelftestOptions& opts, std::ostream& out);

}  // namespace cdsd::cli
