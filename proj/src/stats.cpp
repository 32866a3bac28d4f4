#include "walklab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

#include "walklab/special_functions.hpp"

namespace walklab {

namespace {

void require_no_nan(std::span<const double> xs, const char* what) {
  for (double x : xs) {
    if (std::isnan(x)) throw std::invalid_argument(std::string(what) + ": NaN in sample");
  }
}

Decision decide(double p, double level) { return p < level ? Decision::reject : Decision::pass; }

// Normal quantile by bisection on normal_cdf; only used for interval widths.
double normal_quantile(double p) {
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (normal_cdf(mid) < p) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double ks_p_value(double d, double effective_n) {
  const double root = std::sqrt(effective_n);
  return kolmogorov_sf((root + 0.12 + 0.11 / root) * d);
}

}  // namespace

// ---------------------------------------------------------------------------

EmpiricalDistribution::EmpiricalDistribution(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw std::invalid_argument("empirical distribution needs at least one value");
  require_no_nan(values_, "empirical distribution");
  std::sort(values_.begin(), values_.end());
}

double EmpiricalDistribution::cdf(double x) const {
  const auto it = std::upper_bound(values_.begin(), values_.end(), x);
  return static_cast<double>(it - values_.begin()) / static_cast<double>(values_.size());
}

double EmpiricalDistribution::quantile(double p) const {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile level must be in [0, 1]");
  const auto n = values_.size();
  auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
  if (k > 0) --k;
  return values_[std::min(k, n - 1)];
}

double EmpiricalDistribution::median() const {
  const auto n = values_.size();
  return n % 2 == 1 ? values_[n / 2] : 0.5 * (values_[n / 2 - 1] + values_[n / 2]);
}

const char* to_string(Decision d) {
  switch (d) {
    case Decision::pass: return "pass";
    case Decision::reject: return "reject";
    case Decision::inconclusive: return "inconclusive";
  }
  return "?";
}

// ---------------------------------------------------------------------------

double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;  // the series below is 1 to double precision
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < 1e-18 * std::abs(sum) || term < 1e-300) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

TestReport ks_one_sample_batch(std::span<const double> sample,
                               const std::function<std::vector<double>(std::span<const double>)>& cdf,
                               double level) {
  if (sample.size() < kKsMinSample) {
    throw std::invalid_argument("ks_one_sample: need at least " + std::to_string(kKsMinSample) +
                                " values, got " + std::to_string(sample.size()));
  }
  require_no_nan(sample, "ks_one_sample");
  if (!std::is_sorted(sample.begin(), sample.end())) {
    throw std::invalid_argument("ks_one_sample: sample must be sorted ascending");
  }
  const std::vector<double> f = cdf(sample);
  if (f.size() != sample.size()) throw std::invalid_argument("ks_one_sample: cdf size mismatch");
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    d = std::max({d, static_cast<double>(i + 1) / n - f[i], f[i] - static_cast<double>(i) / n});
  }
  TestReport r;
  r.name = "ks_one_sample";
  r.statistic = d;
  r.p_value = ks_p_value(d, n);
  r.level = level;
  r.decision = decide(r.p_value, level);
  r.n1 = sample.size();
  return r;
}

TestReport ks_one_sample(std::span<const double> sample, const std::function<double(double)>& cdf,
                         double level) {
  return ks_one_sample_batch(
      sample,
      [&cdf](std::span<const double> xs) {
        std::vector<double> out(xs.size());
        std::transform(xs.begin(), xs.end(), out.begin(), cdf);
        return out;
      },
      level);
}

TestReport ks_two_sample(std::span<const double> a, std::span<const double> b, double level) {
  if (a.size() < kKsMinSample || b.size() < kKsMinSample) {
    throw std::invalid_argument("ks_two_sample: each sample needs at least " +
                                std::to_string(kKsMinSample) + " values");
  }
  require_no_nan(a, "ks_two_sample");
  require_no_nan(b, "ks_two_sample");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size()), m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  TestReport r;
  r.name = "ks_two_sample";
  r.statistic = d;
  r.p_value = ks_p_value(d, n * m / (n + m));
  r.level = level;
  r.decision = decide(r.p_value, level);
  r.n1 = x.size();
  r.n2 = y.size();
  return r;
}

// ---------------------------------------------------------------------------

double BinnedReport::pass_rate() const {
  std::size_t conclusive = 0, passed = 0;
  for (const auto& b : bins) {
    if (b.decision == Decision::inconclusive) continue;
    ++conclusive;
    if (b.passed()) ++passed;
  }
  return conclusive == 0 ? 0.0 : static_cast<double>(passed) / static_cast<double>(conclusive);
}

std::vector<double> gig_pit(std::span<const double> gamma, std::span<const double> s, double order) {
  if (gamma.size() != s.size()) throw std::invalid_argument("gig_pit: length mismatch");
  std::vector<double> u(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (!(gamma[k] > 0.0)) throw std::invalid_argument("gig_pit: Gamma must be positive");
    u[k] = gig_cdf_s(GigLaw{order, 2.0 * gamma[k]}, s[k]);
  }
  return u;
}

BinnedReport binned_conditional_test(std::span<const double> gamma, std::span<const double> s,
                                     double order, const BinnedOptions& options) {
  if (gamma.size() != s.size()) throw std::invalid_argument("binned test: length mismatch");
  if (options.bins < 1) throw std::invalid_argument("binned test: need at least one bin");
  if (!(options.trim >= 0.0 && options.trim < 0.5)) throw std::invalid_argument("binned test: trim");
  require_no_nan(gamma, "binned test");
  require_no_nan(s, "binned test");
  for (double g : gamma) {
    if (!(g > 0.0)) throw std::invalid_argument("binned test: Gamma must be positive");
  }

  const std::size_t n = gamma.size();
  std::vector<std::size_t> order_idx(n);
  std::iota(order_idx.begin(), order_idx.end(), std::size_t{0});
  std::sort(order_idx.begin(), order_idx.end(),
            [&](std::size_t a, std::size_t b) { return gamma[a] < gamma[b]; });

  BinnedReport report;
  report.dropped_low = static_cast<std::size_t>(std::floor(options.trim * static_cast<double>(n)));
  report.dropped_high = report.dropped_low;
  const std::size_t lo = report.dropped_low;
  const std::size_t hi = n - report.dropped_high;
  report.used = hi > lo ? hi - lo : 0;

  const auto bins = static_cast<std::size_t>(options.bins);
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t first = lo + report.used * b / bins;
    const std::size_t last = lo + report.used * (b + 1) / bins;
    TestReport r;
    r.level = options.level;
    r.n1 = last - first;
    r.meta["bin"] = static_cast<double>(b);
    if (r.n1 > 0) {
      r.meta["gamma_lo"] = gamma[order_idx[first]];
      r.meta["gamma_hi"] = gamma[order_idx[last - 1]];
    }
    if (r.n1 < options.min_per_bin || r.n1 < kKsMinSample) {
      r.name = "binned_ks";
      r.decision = Decision::inconclusive;
      ++report.inconclusive;
      report.bins.push_back(std::move(r));
      continue;
    }
    std::vector<double> gs, ss;
    gs.reserve(r.n1);
    ss.reserve(r.n1);
    for (std::size_t k = first; k < last; ++k) {
      gs.push_back(gamma[order_idx[k]]);
      ss.push_back(s[order_idx[k]]);
    }
    const double median = EmpiricalDistribution(gs).median();
    TestReport t;
    if (options.reference == BinReference::median) {
      std::sort(ss.begin(), ss.end());
      const GigLaw law{order, 2.0 * median};
      t = ks_one_sample_batch(ss, [&law](std::span<const double> xs) { return gig_cdf_s_sorted(law, xs); },
                              options.level);
    } else {
      std::vector<double> u = gig_pit(gs, ss, order);
      std::sort(u.begin(), u.end());
      t = ks_one_sample(u, [](double x) { return std::clamp(x, 0.0, 1.0); }, options.level);
    }
    t.name = "binned_ks";
    t.meta = std::move(r.meta);
    t.meta["gamma_median"] = median;
    report.bins.push_back(std::move(t));
  }
  return report;
}

// ---------------------------------------------------------------------------

TestReport geometric_fit(std::span<const std::int64_t> counts, double p, double level) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("geometric_fit: p must be in (0, 1]");
  TestReport r;
  r.name = "geometric_fit";
  r.level = level;
  r.n1 = counts.size();
  r.meta["p"] = p;
  if (counts.empty()) {
    r.decision = Decision::inconclusive;
    return r;
  }
  std::int64_t max_count = 0;
  for (auto c : counts) {
    if (c < 1) throw std::invalid_argument("geometric_fit: counts must be at least 1");
    max_count = std::max(max_count, c);
  }
  const double n = static_cast<double>(counts.size());
  // Cells 1..K-1 individually, K pooled with the tail; K is the first index
  // whose tail expectation drops below 5.
  std::vector<double> expected;
  double tail_prob = 1.0;  // P(N >= k)
  std::int64_t k = 1;
  for (;; ++k) {
    const double cell = tail_prob * p;  // P(N = k)
    const double rest = tail_prob - cell;
    if (n * cell < 5.0 || n * rest < 5.0) {
      expected.push_back(n * tail_prob);
      break;
    }
    expected.push_back(n * cell);
    tail_prob = rest;
  }
  const std::int64_t pooled_from = k;
  std::vector<double> observed(expected.size(), 0.0);
  for (auto c : counts) {
    const auto cell = static_cast<std::size_t>(std::min(c, pooled_from) - 1);
    observed[cell] += 1.0;
  }
  if (expected.size() < 2) {
    r.decision = Decision::inconclusive;
    return r;
  }
  double chi2 = 0.0;
  for (std::size_t c = 0; c < expected.size(); ++c) {
    chi2 += (observed[c] - expected[c]) * (observed[c] - expected[c]) / expected[c];
  }
  const double dof = static_cast<double>(expected.size() - 1);
  r.statistic = chi2;
  r.p_value = chi_square_sf(chi2, dof);
  r.decision = decide(r.p_value, level);
  r.meta["cells"] = static_cast<double>(expected.size());
  r.meta["dof"] = dof;
  return r;
}

TestReport chi_square_homogeneity(const Eigen::MatrixXd& table, double level) {
  TestReport r;
  r.name = "chi_square_homogeneity";
  r.level = level;
  if ((table.array() < 0.0).any() || !table.allFinite()) {
    throw std::invalid_argument("chi_square_homogeneity: counts must be finite and non-negative");
  }
  std::vector<Eigen::Index> rows, cols;
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    if (table.row(i).sum() > 0.0) rows.push_back(i);
  }
  for (Eigen::Index j = 0; j < table.cols(); ++j) {
    if (table.col(j).sum() > 0.0) cols.push_back(j);
  }
  const double total = table.sum();
  r.n1 = static_cast<std::size_t>(total);
  if (rows.size() < 2 || cols.size() < 2) {
    r.decision = Decision::inconclusive;
    return r;
  }
  double chi2 = 0.0;
  double min_expected = std::numeric_limits<double>::infinity();
  for (auto i : rows) {
    const double row_sum = table.row(i).sum();
    for (auto j : cols) {
      const double e = row_sum * table.col(j).sum() / total;
      min_expected = std::min(min_expected, e);
      const double d = table(i, j) - e;
      chi2 += d * d / e;
    }
  }
  const double dof = static_cast<double>((rows.size() - 1) * (cols.size() - 1));
  r.statistic = chi2;
  r.p_value = chi_square_sf(chi2, dof);
  r.decision = decide(r.p_value, level);
  r.meta["dof"] = dof;
  r.meta["min_expected"] = min_expected;
  return r;
}

// ---------------------------------------------------------------------------

MeanEstimate mean_ci(std::span<const double> xs, double confidence) {
  if (xs.size() < 2) throw std::invalid_argument("mean_ci: need at least two values");
  if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("mean_ci: confidence");
  require_no_nan(xs, "mean_ci");
  MeanEstimate m;
  m.n = xs.size();
  const double n = static_cast<double>(xs.size());
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.std_error = std::sqrt(ss / (n - 1.0) / n);
  const double z = normal_quantile(0.5 + 0.5 * confidence);
  m.lo = m.mean - z * m.std_error;
  m.hi = m.mean + z * m.std_error;
  return m;
}

double sample_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("sample_correlation: need two equal-length samples of size >= 2");
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> average_ranks(std::span<const double> x) {
  require_no_nan(x, "average_ranks");
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

SpearmanResult spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) {
    throw std::invalid_argument("spearman: need two equal-length samples of size >= 3");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  SpearmanResult r;
  r.n = x.size();
  r.rho = sample_correlation(rx, ry);
  const double z = r.rho * std::sqrt(static_cast<double>(r.n) - 1.0);
  r.p_value = std::clamp(2.0 * normal_cdf(-std::abs(z)), 0.0, 1.0);
  return r;
}

// ---------------------------------------------------------------------------

void DiscreteLaw::validate() const {
  if (values.empty() || values.size() != probs.size()) {
    throw std::invalid_argument("discrete law: values and probabilities must match and be non-empty");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!(values[k] >= 0.0) || !std::isfinite(values[k])) {
      throw std::invalid_argument("discrete law: values must be non-negative");
    }
    if (!(probs[k] >= 0.0)) throw std::invalid_argument("discrete law: negative probability");
    total += probs[k];
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("discrete law: probabilities must sum to 1");
}

double DiscreteLaw::moment(int k) const {
  double m = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) m += probs[i] * std::pow(values[i], k);
  return m;
}

RearrangementResult rearrangement_check(const DiscreteLaw& law, int universe,
                                        const std::vector<std::vector<int>>& subsets) {
  law.validate();
  if (universe < 1 || universe > 16) throw std::invalid_argument("rearrangement: universe size 1..16");
  if (subsets.empty()) throw std::invalid_argument("rearrangement: need at least one subset");
  const std::size_t size = subsets.front().size();
  std::vector<int> multiplicity(static_cast<std::size_t>(universe), 0);
  for (const auto& s : subsets) {
    if (s.size() != size) throw std::invalid_argument("rearrangement: subsets must have equal size");
    std::set<int> seen;
    for (int i : s) {
      if (i < 0 || i >= universe) throw std::invalid_argument("rearrangement: index outside universe");
      if (!seen.insert(i).second) throw std::invalid_argument("rearrangement: repeated index");
      ++multiplicity[i];
    }
  }
  const int k = static_cast<int>(subsets.size());
  const int big_n = static_cast<int>(size);

  // Enumerate the joint support of (Pi_0, ..., Pi_{universe-1}).
  const std::size_t support = law.values.size();
  std::size_t configs = 1;
  for (int i = 0; i < universe; ++i) {
    configs *= support;
    if (configs > (std::size_t{1} << 24)) throw std::invalid_argument("rearrangement: support too large");
  }
  double lhs = 0.0;
  std::vector<std::size_t> digit(static_cast<std::size_t>(universe), 0);
  for (std::size_t c = 0; c < configs; ++c) {
    double prob = 1.0, value = 1.0;
    for (int i = 0; i < universe; ++i) {
      prob *= law.probs[digit[i]];
      value *= std::pow(law.values[digit[i]], multiplicity[i]);
    }
    lhs += prob * value;
    for (int i = 0; i < universe; ++i) {
      if (++digit[i] < support) break;
      digit[i] = 0;
    }
  }
  RearrangementResult r;
  r.lhs = lhs;
  r.rhs = std::pow(law.moment(k), big_n);
  r.holds = r.lhs <= r.rhs * (1.0 + 1e-12) + 1e-300;
  r.equal = std::abs(r.lhs - r.rhs) <= 1e-12 * std::max(r.lhs, r.rhs);
  return r;
}

// ---------------------------------------------------------------------------

void write_reports_csv(std::ostream& out, std::span<const TestReport> reports) {
  std::set<std::string> keys;
  for (const auto& r : reports) {
    for (const auto& [k, v] : r.meta) keys.insert(k);
  }
  out << "name,statistic,p_value,level,decision,n1,n2";
  for (const auto& k : keys) out << ',' << k;
  out << '\n';
  const auto old_precision = out.precision(17);
  for (const auto& r : reports) {
    out << r.name << ',' << r.statistic << ',' << r.p_value << ',' << r.level << ','
        << to_string(r.decision) << ',' << r.n1 << ',' << r.n2;
    for (const auto& k : keys) {
      out << ',';
      if (auto it = r.meta.find(k); it != r.meta.end()) out << it->second;
    }
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace walklab
