#ifndef WALKLAB_EXPERIMENTS_HPP
#define WALKLAB_EXPERIMENTS_HPP

#include <array>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "walklab/graph.hpp"
#include "walklab/markov.hpp"
#include "walklab/stats.hpp"

namespace walklab {

// Desk-scale experiments. Each run_* function is deterministic in
// (config, seed) and independent of the worker count.

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void write_csv(std::ostream& out) const;
};

struct ExperimentOutcome {
  std::string command;
  std::vector<TestReport> checks;  // gating: the run passes iff every check passes
  std::vector<TestReport> details; // per-bin and per-edge reports
  std::map<std::string, double> summary;
  std::vector<std::pair<std::string, Table>> tables;  // file stem, table

  [[nodiscard]] bool passed() const;
  /// First failing check, or nullptr.
  [[nodiscard]] const TestReport* first_failure() const;
};

struct RunContext {
  std::uint64_t seed = 0;
  int workers = 1;
};

inline constexpr std::size_t kMinStatisticalSamples = 1000;

/// Seed of an independent stream inside one run.
std::uint64_t stream_seed(std::uint64_t master, std::uint64_t stream);

/// Gating check from a binned report: passes when the conclusive pass rate
/// reaches `min_rate`.
TestReport pass_rate_check(const std::string& name, const BinnedReport& report, double min_rate);

// ---------------------------------------------------------------------------

struct MarkedGraph {
  GraphPtr graph;
  EdgeWeights alpha;
  VertexId i0 = 0;
  VertexId j0 = 1;
  std::string description;
};

struct IdentityConfig {
  MarkedGraph target;
  std::size_t samples = 100000;
  BinnedOptions binned;
  double min_pass_rate = 0.95;
  bool records = true;
};

/// (Gamma, S) batches, binned conditional test of S given Gamma against the
/// S-law of order gamma, and for gamma = 0 the two symmetry tests (S against
/// -S, H+ against H-, each on disjoint halves of the sample).
ExperimentOutcome run_verify_identity(const IdentityConfig& cfg, const RunContext& ctx);

struct MatsumotoYorConfig {
  double alpha = 2.0;  // weight of (i, i+1)
  double beta = 1.0;   // weight of (i+1, i)
  int n = 10;
  std::size_t samples = 1000000;
  BinnedOptions binned{.reference = BinReference::per_sample};
  double min_pass_rate = 0.95;
  std::size_t recursion_fields = 1000;
  int recursion_n = 50;
  double recursion_tol = 1e-10;
  double solve_tol = 1e-12;
  int markov_bins = 10;       // Gamma_n bins
  int markov_strata = 4;      // Gamma_{n-1} strata inside each bin
  int markov_categories = 5;  // PIT categories
  double markov_level = 0.01;
  int unit_table_n = 20;
  bool records = false;
};

/// Recursion against closed form, the escape identity through an
/// extended-precision absorbing solve, the unit-weight table, the conditional
/// law of S_n given Gamma_n and the Markov check: the PIT of S_n under its
/// conditional law, tabulated against (Gamma_n bin, Gamma_{n-1} stratum),
/// must be homogeneous.
ExperimentOutcome run_matsumoto_yor(const MatsumotoYorConfig& cfg, const RunContext& ctx);

struct TorusRatioConfig {
  std::vector<int> sizes{16};
  std::vector<int> distances{1, 2, 4, 8};
  std::array<double, 4> alpha{1.0, 1.0, 1.0, 1.0};
  std::size_t environments = 1000;
  std::size_t route_checks = 20;  // environments also checked against pi and with i0, j0 swapped
  double route_tol = 1e-10;
  double delta = 0.05;        // threshold for P(Gamma < delta)
  double tail_exponent = 0.5; // a in P(e^{2S} >= delta^{-a/2} | Gamma < delta)
  double spearman_level = 0.05;
};

ExperimentOutcome run_torus_ratio(const TorusRatioConfig& cfg, const RunContext& ctx);

struct CemeteryConfig {
  int n = 3;
  double eps = 0.5;
  std::array<double, 4> alpha{1.0, 1.0, 1.0, 1.0};
  std::size_t walks = 20000;
  std::size_t draws = 100000;
  double level = 0.01;
  std::vector<double> moment_orders{0.25, 0.5, 1.0};
  std::vector<int> moment_sizes{2, 3, 4};
  std::size_t moment_environments = 2000;
};

/// Geometric law of the visits to 0 before the cemetery for one fixed
/// environment, the mean of beta_d omega(d, 0) against eps, and moments of
/// pi(0) beta_d / pi(d) across sizes.
ExperimentOutcome run_cemetery(const CemeteryConfig& cfg, const RunContext& ctx);

struct AccelerateConfig {
  std::vector<int> radii{0, 1};
  std::array<double, 4> alpha{1.0, 1.0, 1.0, 1.0};
  std::size_t environments = 1000;
};

/// gamma(omega) = 1 / sum over the exit paths of each box, and kappa of the
/// box against the global value.
ExperimentOutcome run_accelerate(const AccelerateConfig& cfg, const RunContext& ctx);

struct TimeReversalConfig {
  int n = 2;
  std::array<double, 4> alpha{1.0, 2.0, 1.0, 2.0};
  std::size_t draws = 100000;
  double level = 0.01;
};

/// Reversed environments against fresh draws with the reversed weights on
/// the out-edges of the origin (gating) and on every edge (reported).
ExperimentOutcome run_time_reversal(const TimeReversalConfig& cfg, const RunContext& ctx);

struct SelftestConfig {
  double perturbation = 0.0;  // added to every computed value under test
  std::size_t calibration_repeats = 100;
  std::size_t calibration_draws = 500;
};

/// Special-function golden values, GIG normalization and sampler
/// calibration, and the exact solvers against closed forms.
ExperimentOutcome run_selftest(const SelftestConfig& cfg, const RunContext& ctx);

// Library-level experiments without a command of their own.

struct MixingConfig {
  int n = 20;
  double forward = 2.0;
  double backward = 1.0;
  std::size_t replicates = 100000;
  double level = 0.001;
};

/// Segment with exact U: KS of every edge of W^U against Gamma(alpha(e)) and
/// of every beta_i against Gamma(alpha(i)), plus correlation screens.
ExperimentOutcome run_mixing(const MixingConfig& cfg, const RunContext& ctx);

struct InterpretationConfig {
  std::size_t graphs = 100;
  int max_vertices = 12;
  double tol = 1e-10;
};

/// Random strongly connected graphs with Gibbs U; both routes to the reduced
/// weights must agree.
ExperimentOutcome run_interpretation(const InterpretationConfig& cfg, const RunContext& ctx);

struct RearrangementConfig {
  std::vector<DiscreteLaw> laws;
  int max_subsets = 3;  // k
  int max_size = 3;     // N
  int universe = 5;
};

/// Every multiset of k subsets of size N: the inequality holds and equality
/// occurs exactly when all subsets coincide.
ExperimentOutcome run_rearrangement(const RearrangementConfig& cfg);

}  // namespace walklab

#endif  // WALKLAB_EXPERIMENTS_HPP
