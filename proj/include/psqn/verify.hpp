#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "psqn/metric.hpp"

namespace psqn {

enum class VerifyLevel { Fast, Full };

std::optional<VerifyLevel> verify_level_from_string(const std::string& name);

struct VerifyOptions {
  VerifyLevel level = VerifyLevel::Fast;
  std::uint64_t seed = 7;
  /// Applied to every metric the suites build (fault injection).
  std::function<void(Metric&)> metric_fault;
};

struct PropertyResult {
  std::string name;
  bool passed = true;
  /// Advisory properties are reported but never fail the run.
  bool advisory = false;
  std::size_t trials = 0;
  std::size_t violations = 0;
  /// Worst measured / allowed over all trials; <= 1 means within tolerance.
  double worst_ratio = 0.0;
  std::string detail;
  double seconds = 0.0;
};

/// Runs the property suites sequentially. Fast covers metric, prox, descent
/// and fixed-point properties; Full adds the exhaustive estimator
/// enumerations (n = 5, 6, 8) and the variance bound.
std::vector<PropertyResult> run_verify(const VerifyOptions& options);

/// Prints one line per property and returns kExitOk or kExitVerify.
int cmd_verify(const VerifyOptions& options, std::ostream& out);

/// Shifts u by delta along the first coordinate, keeping tau and alpha.
void perturb_secant(Metric& metric, double delta);

}  // namespace psqn
