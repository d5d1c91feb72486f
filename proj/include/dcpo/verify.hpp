#pragma once

// Named verification suites over the oracle machinery. Each check yields a
// pass/fail line so the CLI and the test harness share one implementation.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dcpo {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Finite-difference twins for every analytic gradient: log-prob, entropy and
/// each objective's scalar at theta = theta_old. `cases` randomized cases per
/// family, scaled relative error threshold 1e-6.
std::vector<CheckResult> verify_gradients(std::uint64_t seed, int cases);

/// Exact-gradient equalities between the importance-weighted and
/// direct-sampled regularizer forms, elementwise within 1e-10.
std::vector<CheckResult> verify_identities(std::uint64_t seed);

/// Entropy direction of one exact tempered REINFORCE step relative to the
/// T = 1 step over `trials` random policies.
std::vector<CheckResult> verify_direction(double t_high, double t_low,
                                         int trials, double lr,
                                         std::uint64_t seed);

/// Monte-Carlo gradient means vs exact estimator expectations on the builtin
/// tasks, z-scored per coordinate.
std::vector<CheckResult> verify_mc_consistency(int samples,
                                               std::uint64_t seed);

/// Prints "[PASS] name detail" lines; returns true iff everything passed.
bool report_checks(std::ostream& out, const std::vector<CheckResult>& checks);

}  // namespace dcpo
