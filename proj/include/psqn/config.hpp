#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "psqn/model.hpp"
#include "psqn/solver.hpp"
#include "psqn/synthetic.hpp"

namespace psqn {

/// Error in a config file; line() is 0 for whole-file problems.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& msg, std::size_t line = 0);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A configured solver run. The name is the CSV suffix.
struct NamedSolver {
  std::string name;
  SolverConfig config;
  /// eta = auto: the rate-optimal step for estimated metric bounds
  /// (ProxSQN/ProxSVRG only).
  bool eta_auto = false;

  friend bool operator==(const NamedSolver&, const NamedSolver&) = default;
};

struct ExperimentConfig {
  /// Exactly one of data_path and synthetic is set.
  std::optional<std::string> data_path;
  std::optional<SyntheticSpec> synthetic;
  Loss loss = Loss::SquaredError;
  double ridge = 0.0;
  double l1 = 0.0;
  bool reference = true;
  double reference_tol = 1e-12;
  std::string output_dir = ".";
  std::string output_prefix = "trace";
  std::vector<NamedSolver> solvers;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Throws ConfigError on the first violated constraint.
void validate(const ExperimentConfig& config);

/// Flat `key = value` lines; `#` starts a comment. Grammar in README.
ExperimentConfig parse_experiment_config(std::istream& in);
ExperimentConfig read_experiment_config(const std::string& path);

/// Canonical text form; parse_experiment_config(serialize(c)) == c.
std::string serialize(const ExperimentConfig& config);

/// Config for `gen`: `data.synthetic.*` keys and `model.loss` only.
SyntheticSpec parse_synthetic_config(std::istream& in);
SyntheticSpec read_synthetic_config(const std::string& path);

}  // namespace psqn
