// walklab <command> --config <file> [--seed S] [--out DIR] [--workers K]
// Exit status: 0 all checks passed, 1 a statistical check failed,
// 2 bad arguments, bad config or a violated precondition.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "walklab/config.hpp"
#include "walklab/errors.hpp"

using namespace walklab;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitStatistical = 1;
constexpr int kExitConfig = 2;

int default_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

void print_outcome(const ExperimentOutcome& out) {
  for (const auto& c : out.checks) {
    std::printf("%-8s %-32s statistic=%-12.6g", to_string(c.decision), c.name.c_str(), c.statistic);
    if (std::isnan(c.p_value)) std::printf(" level=%g\n", c.level);
    else std::printf(" p=%-12.6g level=%g\n", c.p_value, c.level);
  }
}

int run(Command command, const std::string& config_file, std::optional<std::uint64_t> seed,
        const std::string& out_dir, int workers) {
  RunPlan plan;
  if (config_file.empty()) {
    if (command != Command::selftest) throw ConfigError("--config is required for " + std::string(to_string(command)));
    plan = parse_config(command, nlohmann::json::object());
  } else {
    plan = load_config(command, config_file);
  }
  if (seed) plan.seed = seed;
  if (!plan.seed) throw ConfigError("a seed is required: pass --seed or set \"seed\" in the config");
  std::string dir = out_dir;
  if (dir.empty()) dir = plan.output.value_or(std::string("results/") + to_string(command));

  const RunContext ctx{*plan.seed, workers};
  const auto t0 = std::chrono::steady_clock::now();
  const auto outcome = run_experiment(plan, ctx);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_outputs(dir, outcome, RunRecord{&plan, ctx, secs});

  print_outcome(outcome);
  const auto* failure = outcome.first_failure();
  std::printf("%s: %s in %.1f s, results in %s\n", to_string(command),
              failure ? ("FAILED at " + failure->name).c_str() : "all checks passed", secs, dir.c_str());
  return failure ? kExitStatistical : kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random walks in Dirichlet environments: desk-scale experiments"};
  app.require_subcommand(1);

  std::string config_file, out_dir;
  std::uint64_t seed_value = 0;
  int workers = default_workers();
  std::optional<Command> chosen;
  std::optional<std::uint64_t> seed;

  for (const char* name : {"verify-identity", "matsumoto-yor", "torus-ratio", "cemetery", "accelerate",
                           "time-reversal", "selftest"}) {
    const auto cmd = *parse_command(name);
    auto* sub = app.add_subcommand(name);
    auto* cfg_opt = sub->add_option("--config", config_file, "JSON config file")->check(CLI::ExistingFile);
    if (cmd != Command::selftest) cfg_opt->required();
    sub->add_option("--seed", seed_value, "master seed (overrides the config)");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    sub->callback([&, cmd, sub] {
      chosen = cmd;
      if (sub->count("--seed") > 0) seed = seed_value;
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitConfig;
  }

  try {
    return run(*chosen, config_file, seed, out_dir, workers);
  } catch (const NumericalError& e) {
    std::cerr << "walklab: numerical error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "walklab: " << e.what() << "\n";
    return kExitConfig;
  }
}
