#ifndef WALKLAB_CONFIG_HPP
#define WALKLAB_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

#include "walklab/experiments.hpp"
#include "walklab/graph.hpp"

namespace walklab {

enum class Command { verify_identity, matsumoto_yor, torus_ratio, cemetery, accelerate, time_reversal, selftest };

const char* to_string(Command c);
std::optional<Command> parse_command(std::string_view name);

using CommandConfig = std::variant<IdentityConfig, MatsumotoYorConfig, TorusRatioConfig, CemeteryConfig,
                                   AccelerateConfig, TimeReversalConfig, SelftestConfig>;

struct RunPlan {
  Command command = Command::selftest;
  CommandConfig config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  nlohmann::json echo;  // the document as read
};

/// Parses a config document for `command`. Unknown keys, wrong types and
/// values outside their domain throw ConfigError. Relative graph file paths
/// are resolved against `base_dir`.
RunPlan parse_config(Command command, const nlohmann::json& doc,
                    const std::filesystem::path& base_dir = {});

/// Reads and parses a JSON config file.
RunPlan load_config(Command command, const std::filesystem::path& file);

/// Graph interchange document {vertices, edges: [[tail, head], ...], alpha,
/// labels: [[x, y], ...]} (labels optional).
WeightedGraph graph_from_json(const nlohmann::json& doc);
nlohmann::json graph_to_json(const WeightedGraph& wg);

ExperimentOutcome run_experiment(const RunPlan& plan, const RunContext& ctx);

struct RunRecord {
  const RunPlan* plan = nullptr;
  RunContext context;
  double wall_seconds = 0.0;
};

/// Writes checks.csv, details.csv, one CSV per table, summary.json and
/// manifest.json into `dir` (created if missing). For verify-identity the
/// target graph is also written as graph.json. Everything except the
/// manifest depends on (config, seed) only.
void write_outputs(const std::filesystem::path& dir, const ExperimentOutcome& outcome, const RunRecord& run);

}  // namespace walklab

#endif  // WALKLAB_CONFIG_HPP
