#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "psqn/config.hpp"
#include "psqn/solver.hpp"

namespace psqn {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitDivergence = 2,
  kExitIo = 3,
  kExitVerify = 4,
};

/// Command-line overrides applied on top of a config file.
struct RunOverrides {
  std::optional<std::string> output_dir;
  /// Replaces every solver seed (and the synthetic data seed).
  std::optional<std::uint64_t> seed;
  /// Worker threads; 0 picks default_thread_count().
  std::size_t threads = 0;
};

/// PSQN_THREADS when set to a positive integer, else 1.
std::size_t default_thread_count();

struct Problem {
  SmoothObjective objective;
  Regularizer regularizer;
  std::optional<ReferenceSolution> reference;
};

/// Loads or generates the data, builds F and R and (if enabled) the
/// reference optimum.
Problem build_problem(const ExperimentConfig& config);

struct SolverOutcome {
  std::string name;
  SolverConfig config;
  std::string csv_path;
  std::vector<TraceRecord> trace;
  enum class Status { Ok, Diverged, IoFailed, Failed };
  Status status = Status::Ok;
  /// Empty on success.
  std::string error;
};

/// Runs every configured solver (in parallel when threads > 1) and writes
/// `<dir>/<prefix>_<name>.csv`. Files are written as `.partial` and renamed
/// on success; a diverged run leaves its partial trace under `.partial`.
std::vector<SolverOutcome> run_experiment(const ExperimentConfig& config, const Problem& problem,
                                          std::size_t threads, std::ostream& log);

/// `run <config>`: returns an ExitCode.
int cmd_run(const std::string& config_path, const RunOverrides& overrides, std::ostream& out,
            std::ostream& err);

/// `gen <spec-config> -o <path>`: writes a LIBSVM file.
int cmd_gen(const std::string& spec_path, const std::string& output_path,
            std::optional<std::uint64_t> seed, std::ostream& out, std::ostream& err);

}  // namespace psqn
