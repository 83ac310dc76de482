#include "psqn/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "psqn/libsvm.hpp"
#include "psqn/synthetic.hpp"
#include "psqn/trace_csv.hpp"

namespace psqn {

namespace fs = std::filesystem;

std::size_t default_thread_count() {
  const char* env = std::getenv("PSQN_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const unsigned long v = std::strtoul(env, &end, 10);
  if (*end != '\0' || v == 0) return 1;
  return static_cast<std::size_t>(v);
}

Problem build_problem(const ExperimentConfig& config) {
  Dataset data;
  if (config.synthetic) {
    data = generate_synthetic(*config.synthetic).data;
  } else {
    const LabelMode mode =
        config.loss == Loss::LogisticRidge ? LabelMode::Binary : LabelMode::Raw;
    data = read_libsvm_file(*config.data_path, mode);
  }
  Problem p{SmoothObjective(std::move(data), config.loss, config.ridge),
            config.l1 > 0.0 ? Regularizer::l1(config.l1) : Regularizer::zero(), std::nullopt};
  if (config.reference) {
    p.reference = reference_solution(p.objective, p.regularizer, config.reference_tol);
  }
  return p;
}

namespace {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_csv_file(const fs::path& path, const std::vector<TraceRecord>& trace) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_trace_csv(out, trace);
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

SolverOutcome run_one(const NamedSolver& named, const ExperimentConfig& config,
                      const Problem& problem, std::ostream& log, std::mutex& log_mutex) {
  SolverOutcome outcome;
  outcome.name = named.name;
  outcome.config = named.config;
  const fs::path final_path =
      fs::path(config.output_dir) / (config.output_prefix + "_" + named.name + ".csv");
  const fs::path partial_path = final_path.string() + ".partial";
  outcome.csv_path = final_path.string();

  RunOptions options;
  if (problem.reference) options.optimum = problem.reference->objective;
  try {
    if (named.eta_auto) {
      const StepPlan plan = plan_auto_step(problem.objective, problem.regularizer, named.config);
      outcome.config.eta = plan.eta;
      std::lock_guard<std::mutex> lock(log_mutex);
      log << named.name << ": eta = " << plan.eta << " (gamma " << plan.bounds.gamma_lo
          << ", Gamma " << plan.bounds.gamma_hi << ", rho " << plan.report.rho << ")\n";
    }
    RunResult result = run(problem.objective, problem.regularizer, outcome.config, options);
    outcome.trace = std::move(result.trace);
    write_csv_file(partial_path, outcome.trace);
    fs::rename(partial_path, final_path);
  } catch (const DivergenceError& ex) {
    outcome.status = SolverOutcome::Status::Diverged;
    outcome.error = ex.what();
    outcome.trace = ex.trace;
    std::error_code ec;
    fs::remove(final_path, ec);
    try {
      write_csv_file(partial_path, ex.trace);
    } catch (const IoError&) {
      fs::remove(partial_path, ec);
    }
  } catch (const IoError& ex) {
    outcome.status = SolverOutcome::Status::IoFailed;
    outcome.error = ex.what();
    std::error_code ec;
    fs::remove(partial_path, ec);
  } catch (const fs::filesystem_error& ex) {
    outcome.status = SolverOutcome::Status::IoFailed;
    outcome.error = ex.what();
    std::error_code ec;
    fs::remove(partial_path, ec);
  } catch (const std::exception& ex) {
    outcome.status = SolverOutcome::Status::Failed;
    outcome.error = ex.what();
    std::error_code ec;
    fs::remove(partial_path, ec);
  }
  return outcome;
}

}  // namespace

std::vector<SolverOutcome> run_experiment(const ExperimentConfig& config, const Problem& problem,
                                          std::size_t threads, std::ostream& log) {
  std::vector<SolverOutcome> outcomes(config.solvers.size());
  std::mutex log_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < config.solvers.size(); i = next++) {
      outcomes[i] = run_one(config.solvers[i], config, problem, log, log_mutex);
    }
  };
  const std::size_t count = std::max<std::size_t>(1, std::min(threads, config.solvers.size()));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return outcomes;
}

namespace {

void print_summary(std::ostream& out, const std::vector<SolverOutcome>& outcomes, bool has_ref) {
  out << std::left << std::setw(16) << "solver" << std::setw(13) << "kind" << std::right
      << std::setw(8) << "epochs" << std::setw(14) << "eta" << std::setw(24) << "objective"
      << std::setw(13) << (has_ref ? "subopt" : "-") << std::setw(14) << "grad_evals"
      << std::setw(10) << "rebuilds" << std::setw(11) << "time_ms" << "  status\n";
  for (const auto& o : outcomes) {
    out << std::left << std::setw(16) << o.name << std::setw(13) << to_string(o.config.kind)
        << std::right;
    if (o.trace.empty()) {
      out << std::setw(8) << 0 << std::setw(14) << "-" << std::setw(24) << "-" << std::setw(13)
          << "-" << std::setw(14) << "-" << std::setw(10) << "-" << std::setw(11) << "-";
    } else {
      const TraceRecord& r = o.trace.back();
      std::ostringstream eta;
      if (o.config.eta) eta << std::setprecision(6) << *o.config.eta;
      else eta << "default";
      std::ostringstream sub;
      if (has_ref) sub << std::scientific << std::setprecision(3) << r.suboptimality;
      else sub << "-";
      out << std::setw(8) << r.epoch << std::setw(14) << eta.str() << std::setw(24)
          << format_double(r.objective) << std::setw(13) << sub.str() << std::setw(14)
          << r.grad_evals << std::setw(10) << r.metric_rebuilds << std::setw(11)
          << r.elapsed_ns / 1'000'000;
    }
    const char* status = "ok";
    switch (o.status) {
      case SolverOutcome::Status::Ok: break;
      case SolverOutcome::Status::Diverged: status = "diverged"; break;
      case SolverOutcome::Status::IoFailed: status = "io-error"; break;
      case SolverOutcome::Status::Failed: status = "error"; break;
    }
    out << "  " << status << '\n';
  }
}

}  // namespace

int cmd_run(const std::string& config_path, const RunOverrides& overrides, std::ostream& out,
            std::ostream& err) {
  ExperimentConfig config;
  try {
    config = read_experiment_config(config_path);
    if (overrides.output_dir) config.output_dir = *overrides.output_dir;
    if (overrides.seed) {
      for (auto& s : config.solvers) s.config.seed = *overrides.seed;
      if (config.synthetic) config.synthetic->seed = *overrides.seed;
    }
    validate(config);
  } catch (const std::ios_base::failure& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitIo;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitConfig;
  }

  std::optional<Problem> built;
  try {
    built = build_problem(config);
  } catch (const ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitIo;
  } catch (const std::ios_base::failure& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitIo;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitConfig;
  }
  const Problem& problem = *built;
  for (const auto& s : config.solvers) {
    try {
      validate(s.config, problem.objective);
    } catch (const std::exception& ex) {
      err << "error: solver '" << s.name << "': " << ex.what() << '\n';
      return kExitConfig;
    }
  }

  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec || !fs::is_directory(config.output_dir)) {
    err << "error: cannot create output directory '" << config.output_dir << "'\n";
    return kExitIo;
  }

  out << "n = " << problem.objective.n() << ", d = " << problem.objective.d()
      << ", loss = " << to_string(config.loss) << ", L_Q = " << problem.objective.lipschitz_mean()
      << '\n';
  if (problem.reference) {
    out << "reference P* = " << format_double(problem.reference->objective) << " (residual "
        << problem.reference->residual << ", " << problem.reference->iterations
        << " iterations)\n";
  }
  const std::size_t threads = overrides.threads ? overrides.threads : default_thread_count();
  const auto outcomes = run_experiment(config, problem, threads, out);
  print_summary(out, outcomes, problem.reference.has_value());

  // Divergence outranks I/O, which outranks other failures.
  int code = kExitOk;
  for (const auto& o : outcomes) {
    if (o.status == SolverOutcome::Status::Ok) continue;
    err << "error: solver '" << o.name << "': " << o.error << '\n';
    int c = kExitConfig;
    if (o.status == SolverOutcome::Status::Diverged) c = kExitDivergence;
    if (o.status == SolverOutcome::Status::IoFailed) c = kExitIo;
    if (code == kExitOk || c == kExitDivergence || (c == kExitIo && code == kExitConfig)) code = c;
  }
  return code;
}

int cmd_gen(const std::string& spec_path, const std::string& output_path,
            std::optional<std::uint64_t> seed, std::ostream& out, std::ostream& err) {
  SyntheticSpec spec;
  try {
    spec = read_synthetic_config(spec_path);
    if (seed) spec.seed = *seed;
  } catch (const std::ios_base::failure& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitIo;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitConfig;
  }
  const SyntheticInstance inst = generate_synthetic(spec);
  const fs::path final_path(output_path);
  const fs::path partial = output_path + ".partial";
  {
    std::ofstream f(partial, std::ios::binary | std::ios::trunc);
    if (!f) {
      err << "error: cannot open '" << partial.string() << "' for writing\n";
      return kExitIo;
    }
    write_libsvm(f, inst.data);
    f.flush();
    if (!f) {
      std::error_code ec;
      fs::remove(partial, ec);
      err << "error: write to '" << partial.string() << "' failed\n";
      return kExitIo;
    }
  }
  std::error_code ec;
  fs::rename(partial, final_path, ec);
  if (ec) {
    err << "error: cannot rename to '" << output_path << "': " << ec.message() << '\n';
    return kExitIo;
  }
  out << "wrote " << inst.data.n() << " rows, d = " << inst.data.d() << ", nnz = "
      << inst.data.nnz() << " to " << output_path << '\n';
  return kExitOk;
}

}  // namespace psqn
