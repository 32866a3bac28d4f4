#include "walklab/config.hpp"

#include <Eigen/Core>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include "walklab/errors.hpp"

#ifndef WALKLAB_VERSION
#define WALKLAB_VERSION "unknown"
#endif

namespace walklab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::array<std::pair<Command, const char*>, 7> kCommands{{
    {Command::verify_identity, "verify-identity"},
    {Command::matsumoto_yor, "matsumoto-yor"},
    {Command::torus_ratio, "torus-ratio"},
    {Command::cemetery, "cemetery"},
    {Command::accelerate, "accelerate"},
    {Command::time_reversal, "time-reversal"},
    {Command::selftest, "selftest"},
}};

const char* type_name(const json& v) { return v.type_name(); }

// Object reader that remembers which keys were consumed; finish() rejects the rest.
class Fields {
 public:
  Fields(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ConfigError(where_ + ": expected an object, got " + type_name(obj_));
  }

  [[nodiscard]] bool has(const std::string& key) const { return obj_.contains(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return obj_.at(key);
  }

  template <typename T>
  void get(const std::string& key, T& dst) {
    if (!has(key)) return;
    dst = as<T>(raw(key), key);
  }

  template <typename T>
  T require(const std::string& key) {
    if (!has(key)) throw ConfigError(where_ + ": missing key \"" + key + "\"");
    return as<T>(raw(key), key);
  }

  void get_samples(const std::string& key, std::size_t& dst) {
    get(key, dst);
    if (dst < kMinStatisticalSamples) {
      throw ConfigError(path(key) + " must be at least " + std::to_string(kMinStatisticalSamples) + ", got " +
                        std::to_string(dst));
    }
  }

  void get_positive(const std::string& key, double& dst) {
    get(key, dst);
    if (!(dst > 0.0) || !std::isfinite(dst)) throw ConfigError(path(key) + " must be positive and finite");
  }

  void get_level(const std::string& key, double& dst) {
    get(key, dst);
    if (!(dst > 0.0 && dst < 1.0)) throw ConfigError(path(key) + " must lie in (0, 1)");
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!used_.count(key)) throw ConfigError(where_ + ": unknown key \"" + key + "\"");
    }
  }

  [[nodiscard]] std::string path(const std::string& key) const { return where_ + "." + key; }

 private:
  template <typename T>
  T as(const json& v, const std::string& key) const {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(path(key) + ": expected a number, got " + type_name(v));
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) throw ConfigError(path(key) + ": expected an integer, got " + type_name(v));
        if (std::is_unsigned_v<T> && !v.is_number_unsigned() && v.get<long long>() < 0) {
          throw ConfigError(path(key) + ": expected a non-negative integer");
        }
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }

  const json& obj_;
  std::string where_;
  std::set<std::string> used_;
};

std::array<double, 4> lattice_alpha(Fields& f, const std::string& key, std::array<double, 4> dflt) {
  if (!f.has(key)) return dflt;
  const auto v = f.require<std::vector<double>>(key);
  if (v.size() != 4) throw ConfigError(f.path(key) + " must list 4 weights (e1, e2, -e1, -e2)");
  std::array<double, 4> a{};
  for (int k = 0; k < 4; ++k) {
    if (!(v[k] > 0.0) || !std::isfinite(v[k])) throw ConfigError(f.path(key) + " entries must be positive");
    a[k] = v[k];
  }
  return a;
}

void read_binned(Fields& f, BinnedOptions& b, double& min_pass_rate) {
  f.get("bins", b.bins);
  if (b.bins < 1) throw ConfigError(f.path("bins") + " must be at least 1");
  f.get_level("level", b.level);
  f.get("trim", b.trim);
  if (!(b.trim >= 0.0 && b.trim < 0.5)) throw ConfigError(f.path("trim") + " must lie in [0, 0.5)");
  f.get("min_per_bin", b.min_per_bin);
  if (f.has("reference")) {
    const auto r = f.require<std::string>("reference");
    if (r == "median") {
      b.reference = BinReference::median;
    } else if (r == "per_sample") {
      b.reference = BinReference::per_sample;
    } else {
      throw ConfigError(f.path("reference") + ": expected \"median\" or \"per_sample\", got \"" + r + "\"");
    }
  }
  f.get("min_pass_rate", min_pass_rate);
  if (!(min_pass_rate >= 0.0 && min_pass_rate <= 1.0)) {
    throw ConfigError(f.path("min_pass_rate") + " must lie in [0, 1]");
  }
}

json read_json_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open " + file.string());
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

// A vertex reference: an id or an [x, y] label.
VertexId vertex_ref(const json& v, const DirectedGraph& g, const std::string& where) {
  if (v.is_number_integer()) {
    const auto id = v.get<long long>();
    if (id < 0 || id >= g.vertex_count()) {
      throw ConfigError(where + ": vertex " + std::to_string(id) + " is not in [0, " +
                        std::to_string(g.vertex_count()) + ")");
    }
    return static_cast<VertexId>(id);
  }
  if (v.is_array() && v.size() == 2 && v[0].is_number_integer() && v[1].is_number_integer()) {
    const Coord c{v[0].get<int>(), v[1].get<int>()};
    const auto id = g.find_label(c);
    if (!id) throw ConfigError(where + ": no vertex labelled [" + std::to_string(c[0]) + ", " +
                               std::to_string(c[1]) + "]");
    return *id;
  }
  throw ConfigError(where + ": expected a vertex id or an [x, y] label");
}

struct GraphChoice {
  WeightedGraph graph;
  std::string description;
  std::optional<VertexId> default_i0, default_j0;
  int torus_n = 0;  // nonzero for the torus builder
};

GraphChoice read_graph_choice(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("graph: expected an object");
  if (doc.contains("file")) {
    Fields f(doc, "graph");
    const fs::path file = base_dir / f.require<std::string>("file");
    f.finish();
    GraphChoice c{graph_from_json(read_json_file(file)), "file " + file.filename().string(), {}, {}, 0};
    c.default_i0 = 0;
    return c;
  }
  if (!doc.contains("builder")) {
    GraphChoice c{graph_from_json(doc), "inline graph", {}, {}, 0};
    c.default_i0 = 0;
    return c;
  }
  Fields f(doc, "graph");
  const auto builder = f.require<std::string>("builder");
  GraphChoice c;
  if (builder == "two_cycle") {
    std::vector<double> a{2.0, 1.0};
    f.get("alpha", a);
    if (a.size() != 2) throw ConfigError("graph.alpha must list 2 weights for two_cycle");
    c.graph = build_two_cycle(a[0], a[1]);
    c.description = "two-cycle";
    c.default_i0 = 0;
    c.default_j0 = 1;
  } else if (builder == "segment") {
    int n = 5;
    double fwd = 1.0, bwd = 1.0;
    f.get("n", n);
    f.get_positive("forward", fwd);
    f.get_positive("backward", bwd);
    if (n < 1) throw ConfigError("graph.n must be at least 1");
    c.graph = build_weighted_segment(n, fwd, bwd);
    c.description = "segment n=" + std::to_string(n);
    c.default_i0 = 0;
    c.default_j0 = n;
  } else if (builder == "torus") {
    int n = 2;
    f.get("n", n);
    if (n < 1) throw ConfigError("graph.n must be at least 1");
    c.graph = build_torus(n, lattice_alpha(f, "alpha", {1.0, 1.0, 1.0, 1.0}));
    c.description = "torus n=" + std::to_string(n);
    c.default_i0 = torus_vertex(n, 0, 0);
    c.torus_n = n;
  } else {
    throw ConfigError("graph.builder: expected two_cycle, segment or torus, got \"" + builder + "\"");
  }
  f.finish();
  return c;
}

IdentityConfig read_identity(Fields& f, const fs::path& base_dir) {
  IdentityConfig cfg;
  if (!f.has("graph")) throw ConfigError("config: missing key \"graph\"");
  auto choice = read_graph_choice(f.raw("graph"), base_dir);
  const auto& g = choice.graph.graph;
  VertexId i0 = choice.default_i0.value_or(0);
  if (f.has("i0")) i0 = vertex_ref(f.raw("i0"), g, "config.i0");
  std::optional<VertexId> j0 = choice.default_j0;
  if (f.has("j0") && f.has("distance")) throw ConfigError("config: give either j0 or distance, not both");
  if (f.has("j0")) j0 = vertex_ref(f.raw("j0"), g, "config.j0");
  if (f.has("distance")) {
    const int d = f.require<int>("distance");
    if (!g.has_labels()) throw ConfigError("config.distance needs a labelled graph");
    const Coord o = g.labels()[static_cast<std::size_t>(i0)];
    if (choice.torus_n > 0) {
      j0 = torus_vertex(choice.torus_n, o[0] + d, o[1]);
    } else {
      j0 = g.find_label({o[0] + d, o[1]});
      if (!j0) throw ConfigError("config.distance: no vertex at that distance from i0");
    }
  }
  if (!j0) throw ConfigError("config: missing key \"j0\" (or \"distance\")");
  if (*j0 == i0) throw ConfigError("config: i0 and j0 must differ");
  cfg.target = MarkedGraph{std::make_shared<const DirectedGraph>(g), choice.graph.weights, i0, *j0,
                           choice.description};
  try {
    cfg.target.alpha.validate(g);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("graph: ") + e.what());
  }
  f.get_samples("samples", cfg.samples);
  read_binned(f, cfg.binned, cfg.min_pass_rate);
  f.get("records", cfg.records);
  return cfg;
}

MatsumotoYorConfig read_matsumoto_yor(Fields& f) {
  MatsumotoYorConfig cfg;
  f.get_positive("alpha", cfg.alpha);
  f.get_positive("beta", cfg.beta);
  f.get("n", cfg.n);
  if (cfg.n < 2) throw ConfigError("config.n must be at least 2");
  f.get_samples("samples", cfg.samples);
  read_binned(f, cfg.binned, cfg.min_pass_rate);
  f.get("recursion_fields", cfg.recursion_fields);
  f.get("recursion_n", cfg.recursion_n);
  f.get_positive("recursion_tol", cfg.recursion_tol);
  f.get_positive("solve_tol", cfg.solve_tol);
  f.get("markov_bins", cfg.markov_bins);
  f.get("markov_strata", cfg.markov_strata);
  f.get("markov_categories", cfg.markov_categories);
  if (cfg.markov_bins < 1 || cfg.markov_strata < 2 || cfg.markov_categories < 2) {
    throw ConfigError("config: markov_bins >= 1, markov_strata >= 2 and markov_categories >= 2 required");
  }
  f.get_level("markov_level", cfg.markov_level);
  f.get("unit_table_n", cfg.unit_table_n);
  f.get("records", cfg.records);
  return cfg;
}

TorusRatioConfig read_torus_ratio(Fields& f) {
  TorusRatioConfig cfg;
  f.get("sizes", cfg.sizes);
  f.get("distances", cfg.distances);
  if (cfg.sizes.empty() || cfg.distances.empty()) throw ConfigError("config: sizes and distances must not be empty");
  cfg.alpha = lattice_alpha(f, "alpha", cfg.alpha);
  f.get_samples("environments", cfg.environments);
  f.get("route_checks", cfg.route_checks);
  f.get_positive("route_tol", cfg.route_tol);
  f.get_level("delta", cfg.delta);
  f.get_positive("tail_exponent", cfg.tail_exponent);
  f.get_level("spearman_level", cfg.spearman_level);
  return cfg;
}

CemeteryConfig read_cemetery(Fields& f) {
  CemeteryConfig cfg;
  f.get("n", cfg.n);
  if (cfg.n < 1) throw ConfigError("config.n must be at least 1");
  f.get_positive("eps", cfg.eps);
  cfg.alpha = lattice_alpha(f, "alpha", cfg.alpha);
  f.get_samples("walks", cfg.walks);
  f.get_samples("draws", cfg.draws);
  f.get_level("level", cfg.level);
  f.get("moment_orders", cfg.moment_orders);
  f.get("moment_sizes", cfg.moment_sizes);
  for (int n : cfg.moment_sizes) {
    if (n < 1) throw ConfigError("config.moment_sizes entries must be at least 1");
  }
  if (!cfg.moment_sizes.empty()) f.get_samples("moment_environments", cfg.moment_environments);
  else f.get("moment_environments", cfg.moment_environments);
  return cfg;
}

AccelerateConfig read_accelerate(Fields& f) {
  AccelerateConfig cfg;
  f.get("radii", cfg.radii);
  if (cfg.radii.empty()) throw ConfigError("config.radii must not be empty");
  cfg.alpha = lattice_alpha(f, "alpha", cfg.alpha);
  f.get_samples("environments", cfg.environments);
  return cfg;
}

TimeReversalConfig read_time_reversal(Fields& f) {
  TimeReversalConfig cfg;
  f.get("n", cfg.n);
  if (cfg.n < 1) throw ConfigError("config.n must be at least 1");
  cfg.alpha = lattice_alpha(f, "alpha", cfg.alpha);
  f.get_samples("draws", cfg.draws);
  f.get_level("level", cfg.level);
  return cfg;
}

SelftestConfig read_selftest(Fields& f) {
  SelftestConfig cfg;
  f.get("perturbation", cfg.perturbation);
  if (!std::isfinite(cfg.perturbation)) throw ConfigError("config.perturbation must be finite");
  f.get("calibration_repeats", cfg.calibration_repeats);
  f.get("calibration_draws", cfg.calibration_draws);
  if (cfg.calibration_repeats < 1 || cfg.calibration_draws < 1) {
    throw ConfigError("config: calibration_repeats and calibration_draws must be positive");
  }
  return cfg;
}

void write_file(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << text;
}

json report_json(const TestReport& r) {
  json j{{"name", r.name},   {"statistic", r.statistic}, {"p_value", r.p_value},
         {"level", r.level}, {"decision", to_string(r.decision)}};
  if (!r.meta.empty()) j["meta"] = r.meta;
  return j;
}

}  // namespace

const char* to_string(Command c) {
  for (const auto& [cmd, name] : kCommands) {
    if (cmd == c) return name;
  }
  return "?";
}

std::optional<Command> parse_command(std::string_view name) {
  for (const auto& [cmd, n] : kCommands) {
    if (name == n) return cmd;
  }
  return std::nullopt;
}

WeightedGraph graph_from_json(const json& doc) {
  Fields f(doc, "graph");
  const int n = f.require<int>("vertices");
  if (n < 1) throw ConfigError("graph.vertices must be at least 1");
  std::vector<Edge> edges;
  for (const auto& e : f.require<std::vector<std::array<int, 2>>>("edges")) edges.push_back({e[0], e[1]});
  const auto alpha = f.require<std::vector<double>>("alpha");
  std::vector<Coord> labels;
  if (f.has("labels")) {
    for (const auto& l : f.require<std::vector<std::array<int, 2>>>("labels")) labels.push_back({l[0], l[1]});
  }
  f.finish();
  if (!labels.empty() && labels.size() != static_cast<std::size_t>(n)) {
    throw ConfigError("graph.labels must have one entry per vertex");
  }
  try {
    WeightedGraph wg{DirectedGraph(n, std::move(edges), std::move(labels)), {}};
    wg.weights.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
    wg.weights.validate(wg.graph);
    return wg;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("graph: ") + e.what());
  }
}

json graph_to_json(const WeightedGraph& wg) {
  const auto& g = wg.graph;
  json edges = json::array();
  for (const auto& e : g.edges()) edges.push_back({e.tail, e.head});
  json doc{{"vertices", g.vertex_count()},
           {"edges", std::move(edges)},
           {"alpha", std::vector<double>(wg.weights.alpha.data(), wg.weights.alpha.data() + wg.weights.alpha.size())}};
  if (g.has_labels()) {
    json labels = json::array();
    for (const auto& l : g.labels()) labels.push_back({l[0], l[1]});
    doc["labels"] = std::move(labels);
  }
  return doc;
}

RunPlan parse_config(Command command, const json& doc, const fs::path& base_dir) {
  Fields f(doc, "config");
  RunPlan plan;
  plan.command = command;
  plan.echo = doc;
  if (f.has("experiment")) {
    const auto name = f.require<std::string>("experiment");
    if (name != to_string(command)) {
      throw ConfigError("config is for \"" + name + "\", not \"" + to_string(command) + "\"");
    }
  }
  if (f.has("seed")) plan.seed = f.require<std::uint64_t>("seed");
  if (f.has("output")) plan.output = f.require<std::string>("output");
  switch (command) {
    case Command::verify_identity: plan.config = read_identity(f, base_dir); break;
    case Command::matsumoto_yor: plan.config = read_matsumoto_yor(f); break;
    case Command::torus_ratio: plan.config = read_torus_ratio(f); break;
    case Command::cemetery: plan.config = read_cemetery(f); break;
    case Command::accelerate: plan.config = read_accelerate(f); break;
    case Command::time_reversal: plan.config = read_time_reversal(f); break;
    case Command::selftest: plan.config = read_selftest(f); break;
  }
  f.finish();
  return plan;
}

RunPlan load_config(Command command, const fs::path& file) {
  return parse_config(command, read_json_file(file), file.parent_path());
}

ExperimentOutcome run_experiment(const RunPlan& plan, const RunContext& ctx) {
  return std::visit(
      [&](const auto& cfg) -> ExperimentOutcome {
        using T = std::decay_t<decltype(cfg)>;
        if constexpr (std::is_same_v<T, IdentityConfig>) return run_verify_identity(cfg, ctx);
        else if constexpr (std::is_same_v<T, MatsumotoYorConfig>) return run_matsumoto_yor(cfg, ctx);
        else if constexpr (std::is_same_v<T, TorusRatioConfig>) return run_torus_ratio(cfg, ctx);
        else if constexpr (std::is_same_v<T, CemeteryConfig>) return run_cemetery(cfg, ctx);
        else if constexpr (std::is_same_v<T, AccelerateConfig>) return run_accelerate(cfg, ctx);
        else if constexpr (std::is_same_v<T, TimeReversalConfig>) return run_time_reversal(cfg, ctx);
        else return run_selftest(cfg, ctx);
      },
      plan.config);
}

void write_outputs(const fs::path& dir, const ExperimentOutcome& outcome, const RunRecord& run) {
  fs::create_directories(dir);
  std::vector<std::string> files;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_file(dir / name, text);
    files.push_back(name);
  };
  {
    std::ostringstream s;
    write_reports_csv(s, outcome.checks);
    emit("checks.csv", s.str());
  }
  {
    std::ostringstream s;
    write_reports_csv(s, outcome.details);
    emit("details.csv", s.str());
  }
  for (const auto& [stem, table] : outcome.tables) {
    std::ostringstream s;
    table.write_csv(s);
    emit(stem + ".csv", s.str());
  }
  if (run.plan) {
    if (const auto* id = std::get_if<IdentityConfig>(&run.plan->config)) {
      emit("graph.json", graph_to_json({*id->target.graph, id->target.alpha}).dump(2) + "\n");
    }
  }

  json checks = json::array();
  for (const auto& c : outcome.checks) checks.push_back(report_json(c));
  const auto* failure = outcome.first_failure();
  json summary{{"command", outcome.command},
               {"passed", outcome.passed()},
               {"first_failure", failure ? json(failure->name) : json(nullptr)},
               {"checks", std::move(checks)},
               {"summary", outcome.summary}};
  emit("summary.json", summary.dump(2) + "\n");

  json manifest{{"command", outcome.command},
                {"seed", run.context.seed},
                {"workers", run.context.workers},
                {"config", run.plan ? run.plan->echo : json(nullptr)},
                {"files", files},
                {"wall_seconds", run.wall_seconds},
                {"versions",
                 {{"walklab", WALKLAB_VERSION},
                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)},
                  {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                  {"compiler", __VERSION__}}}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace walklab
