#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "psqn/experiment.hpp"
#include "psqn/verify.hpp"

int main(int argc, char** argv) {
  CLI::App app{"psqn: proximal stochastic quasi-Newton solvers and their checks"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  std::optional<std::string> output_dir;
  app.add_option("--seed", seed, "Override every solver seed (and the synthetic data seed)");
  app.add_option("--threads", threads,
                 "Worker threads for `run` (default: PSQN_THREADS, else 1)")
      ->check(CLI::PositiveNumber);
  app.add_option("--output", output_dir, "Output directory for `run` (overrides output.dir)");

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run the solvers of an experiment config");
  run->add_option("config", config_path, "Experiment config file")->required();

  std::string level = "fast";
  std::string fault;
  auto* verify = app.add_subcommand("verify", "Run the property suites");
  verify->add_option("--level", level, "fast or full")
      ->check(CLI::IsMember({"fast", "full"}));
  verify->add_option("--inject-fault", fault, "Deliberately break a component (secant)")
      ->check(CLI::IsMember({"secant"}));

  std::string spec_path;
  std::string out_path;
  auto* gen = app.add_subcommand("gen", "Write a synthetic dataset in LIBSVM format");
  gen->add_option("spec", spec_path, "Synthetic spec config")->required();
  gen->add_option("-o,--out", out_path, "Output LIBSVM file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? psqn::kExitOk : psqn::kExitConfig;
  }

  try {
    if (*run) {
      psqn::RunOverrides overrides;
      overrides.output_dir = output_dir;
      overrides.seed = seed;
      overrides.threads = threads;
      return psqn::cmd_run(config_path, overrides, std::cout, std::cerr);
    }
    if (*verify) {
      psqn::VerifyOptions options;
      options.level = *psqn::verify_level_from_string(level);
      if (seed) options.seed = *seed;
      if (fault == "secant") {
        options.metric_fault = [](psqn::Metric& m) { psqn::perturb_secant(m, 1e-3); };
        std::cout << "fault injected: secant u perturbed by 1e-3\n";
      }
      return psqn::cmd_verify(options, std::cout);
    }
    if (*gen) return psqn::cmd_gen(spec_path, out_path, seed, std::cout, std::cerr);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return psqn::kExitConfig;
  }
  return psqn::kExitConfig;
}
