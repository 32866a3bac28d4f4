#ifndef WALKLAB_STATS_HPP
#define WALKLAB_STATS_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace walklab {

class EmpiricalDistribution {
 public:
  /// Sorts the values. Throws std::invalid_argument on an empty sample or NaN.
  explicit EmpiricalDistribution(std::vector<double> values);

  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] const std::vector<double>& values() const { return values_; }
  /// Fraction of the sample <= x.
  [[nodiscard]] double cdf(double x) const;
  /// Order statistic at position p (nearest rank, p in [0, 1]).
  [[nodiscard]] double quantile(double p) const;
  [[nodiscard]] double median() const;

 private:
  std::vector<double> values_;
};

enum class Decision { pass, reject, inconclusive };

const char* to_string(Decision d);

struct TestReport {
  std::string name;
  double statistic = 0.0;
  double p_value = 1.0;
  double level = 0.01;
  Decision decision = Decision::inconclusive;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  std::map<std::string, double> meta;

  [[nodiscard]] bool passed() const { return decision == Decision::pass; }
};

/// Survival function of the Kolmogorov distribution, P(K > lambda).
double kolmogorov_sf(double lambda);

/// Smallest sample accepted by the KS tests.
inline constexpr std::size_t kKsMinSample = 20;

/// One-sample KS test. `sample` must be ascending and free of NaN; `cdf`
/// maps the sorted sample to its reference CDF values in one call.
/// Throws std::invalid_argument on unsorted or NaN input or n < 20.
TestReport ks_one_sample_batch(std::span<const double> sample,
                               const std::function<std::vector<double>(std::span<const double>)>& cdf,
                               double level = 0.01);

/// As above with a pointwise CDF.
TestReport ks_one_sample(std::span<const double> sample, const std::function<double(double)>& cdf,
                         double level = 0.01);

/// Two-sample KS test with the asymptotic p-value at the effective size
/// n m / (n + m). Inputs need not be sorted.
TestReport ks_two_sample(std::span<const double> a, std::span<const double> b, double level = 0.01);

// ---------------------------------------------------------------------------
// Conditional-law test: pairs (Gamma_k, S_k), S given Gamma ~ GigLaw(order, 2 Gamma).
// ---------------------------------------------------------------------------

enum class BinReference {
  median,      // every S in the bin against GigLaw(order, 2 * median Gamma of the bin)
  per_sample,  // u_k = F_{GigLaw(order, 2 Gamma_k)}(S_k) against Uniform(0, 1)
};

struct BinnedOptions {
  int bins = 50;
  double level = 0.01;
  double trim = 0.01;  // fraction dropped at each end of the Gamma range
  BinReference reference = BinReference::median;
  std::size_t min_per_bin = 200;
};

struct BinnedReport {
  std::vector<TestReport> bins;
  std::size_t used = 0;
  std::size_t dropped_low = 0;
  std::size_t dropped_high = 0;
  std::size_t inconclusive = 0;

  /// Passing bins among the conclusive ones.
  [[nodiscard]] double pass_rate() const;
};

/// Throws std::invalid_argument if the spans differ in length, a Gamma is
/// not positive, or an entry is NaN.
BinnedReport binned_conditional_test(std::span<const double> gamma, std::span<const double> s,
                                     double order, const BinnedOptions& options = {});

/// Probability integral transform u_k = F_{GigLaw(order, 2 Gamma_k)}(S_k).
std::vector<double> gig_pit(std::span<const double> gamma, std::span<const double> s, double order);

// ---------------------------------------------------------------------------
// Discrete tests
// ---------------------------------------------------------------------------

/// Chi-square goodness of fit of counts k >= 1 to P(N = k) = (1 - p)^(k-1) p.
/// Cells are k = 1, 2, ... with the upper tail pooled so every expected count
/// is at least 5. Inconclusive with fewer than two cells.
TestReport geometric_fit(std::span<const std::int64_t> counts, double p, double level = 0.01);

/// Pearson chi-square test of homogeneity on a contingency table (rows are
/// strata, columns categories). Empty rows and columns are dropped.
TestReport chi_square_homogeneity(const Eigen::MatrixXd& table, double level = 0.01);

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n = 0;
};

/// Mean with a normal-approximation confidence interval at `confidence`.
MeanEstimate mean_ci(std::span<const double> xs, double confidence = 0.95);

double sample_correlation(std::span<const double> x, std::span<const double> y);

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;  // two-sided, normal approximation z = rho sqrt(n - 1)
  std::size_t n = 0;
};

/// Rank correlation with average ranks for ties.
SpearmanResult spearman(std::span<const double> x, std::span<const double> y);

/// Ranks 1..n with ties averaged.
std::vector<double> average_ranks(std::span<const double> x);

// ---------------------------------------------------------------------------
// Rearrangement inequality for products over subsets
// ---------------------------------------------------------------------------

/// Finite law of one coordinate: values with probabilities summing to one.
struct DiscreteLaw {
  std::vector<double> values;
  std::vector<double> probs;

  /// Throws std::invalid_argument on negative values, bad probabilities or
  /// length mismatch.
  void validate() const;
  [[nodiscard]] double moment(int k) const;
};

struct RearrangementResult {
  double lhs = 0.0;  // E[prod_p prod_{i in I_p} Pi_i]
  double rhs = 0.0;  // E[Pi_1^k]^N
  bool holds = false;
  bool equal = false;
};

/// Coordinates Pi_0 .. Pi_{universe-1} are i.i.d. with `law`. lhs is computed
/// by enumerating the joint support. Throws std::invalid_argument unless all
/// subsets have size N, lie in the universe and have no repeated entry.
RearrangementResult rearrangement_check(const DiscreteLaw& law, int universe,
                                        const std::vector<std::vector<int>>& subsets);

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// CSV with header name,statistic,p_value,level,decision,n1,n2 followed by
/// one column per meta key (union over reports, sorted).
void write_reports_csv(std::ostream& out, std::span<const TestReport> reports);

}  // namespace walklab

#endif  // WALKLAB_STATS_HPP
