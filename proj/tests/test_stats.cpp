#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "walklab/random.hpp"
#include "walklab/special_functions.hpp"
#include "walklab/stats.hpp"

using namespace walklab;

namespace {

std::vector<double> sorted_draws(std::size_t n, Rng& rng, auto&& draw) {
  std::vector<double> xs(n);
  for (auto& x : xs) x = draw(rng);
  std::sort(xs.begin(), xs.end());
  return xs;
}

double exp_cdf(double x) { return x <= 0.0 ? 0.0 : 1.0 - std::exp(-x); }

}  // namespace

TEST_CASE("empirical distribution") {
  EmpiricalDistribution d({3.0, 1.0, 2.0, 2.0});
  CHECK(d.values() == std::vector<double>{1.0, 2.0, 2.0, 3.0});
  CHECK(d.cdf(2.0) == 0.75);
  CHECK(d.cdf(0.5) == 0.0);
  CHECK(d.median() == 2.0);
  CHECK(d.quantile(0.0) == 1.0);
  CHECK(d.quantile(1.0) == 3.0);
  CHECK_THROWS_AS(EmpiricalDistribution({}), std::invalid_argument);
  CHECK_THROWS_AS(EmpiricalDistribution({1.0, NAN}), std::invalid_argument);
}

TEST_CASE("kolmogorov survival function") {
  // Known quantiles of the Kolmogorov distribution.
  CHECK(kolmogorov_sf(1.3580986) == doctest::Approx(0.05).epsilon(1e-5));
  CHECK(kolmogorov_sf(1.6276236) == doctest::Approx(0.01).epsilon(1e-5));
  CHECK(kolmogorov_sf(0.0) == 1.0);
  CHECK(kolmogorov_sf(10.0) < 1e-80);
}

TEST_CASE("ks one-sample contract") {
  Rng rng(1);
  const auto xs = sorted_draws(20, rng, [](Rng& r) { return r.uniform(); });
  CHECK_NOTHROW(ks_one_sample(xs, [](double x) { return x; }));
  const std::vector<double> nineteen(xs.begin(), xs.begin() + 19);
  CHECK_THROWS_AS(ks_one_sample(nineteen, [](double x) { return x; }), std::invalid_argument);
  std::vector<double> unsorted = xs;
  std::swap(unsorted[0], unsorted[5]);
  CHECK_THROWS_AS(ks_one_sample(unsorted, [](double x) { return x; }), std::invalid_argument);
  std::vector<double> with_nan = xs;
  with_nan.back() = NAN;
  CHECK_THROWS_AS(ks_one_sample(with_nan, [](double x) { return x; }), std::invalid_argument);

  // Gross mismatch.
  const auto shifted = sorted_draws(1000, rng, [](Rng& r) { return r.uniform() + 5.0; });
  CHECK(ks_one_sample(shifted, [](double x) { return std::clamp(x, 0.0, 1.0); }).p_value < 1e-6);
}

TEST_CASE("ks one-sample calibration for three reference laws") {
  Rng rng(2);
  const int reps = 1000;
  auto rejection_rate = [&](auto&& draw, auto&& cdf) {
    int rejected = 0;
    for (int r = 0; r < reps; ++r) {
      const auto xs = sorted_draws(200, rng, draw);
      if (!ks_one_sample(xs, cdf).passed()) ++rejected;
    }
    return static_cast<double>(rejected) / reps;
  };
  const double u = rejection_rate([](Rng& r) { return r.uniform(); },
                                  [](double x) { return std::clamp(x, 0.0, 1.0); });
  const double e = rejection_rate([](Rng& r) { return -std::log(r.uniform()); }, exp_cdf);
  const double g = rejection_rate([](Rng& r) { return gamma_sample(GammaLaw{2.5}, r); },
                                  [](double x) { return gamma_cdf(2.5, x); });
  for (double rate : {u, e, g}) {
    CHECK(rate >= 0.005);
    CHECK(rate <= 0.02);
  }
}

TEST_CASE("ks two-sample calibration") {
  Rng rng(3);
  int passed = 0;
  const int reps = 1000;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> xs(400);
    for (auto& x : xs) x = rng.normal();
    const std::span<const double> all(xs);
    if (ks_two_sample(all.first(200), all.last(200)).passed()) ++passed;
  }
  CHECK(passed >= 975);
  CHECK(passed <= 998);

  std::vector<double> a(500), b(500);
  for (auto& x : a) x = rng.normal();
  for (auto& x : b) x = rng.normal() + 1.0;
  CHECK(ks_two_sample(a, b).p_value < 1e-10);
  CHECK_THROWS_AS(ks_two_sample(std::vector<double>(10, 1.0), b), std::invalid_argument);
}

TEST_CASE("geometric fit") {
  Rng rng(4);
  const double p = 0.3;
  std::vector<std::int64_t> counts(20000);
  for (auto& c : counts) {
    c = 1;
    while (rng.uniform() > p) ++c;
  }
  const auto good = geometric_fit(counts, p);
  CHECK(good.passed());
  CHECK(good.meta.at("cells") >= 5);
  CHECK_FALSE(geometric_fit(counts, 2.0 * p).passed());
  CHECK(geometric_fit({}, p).decision == Decision::inconclusive);
  const std::vector<std::int64_t> zero{0, 1};
  CHECK_THROWS_AS(geometric_fit(zero, p), std::invalid_argument);
}

TEST_CASE("chi-square homogeneity") {
  Rng rng(5);
  Eigen::MatrixXd same = Eigen::MatrixXd::Zero(4, 5);
  Eigen::MatrixXd differ = Eigen::MatrixXd::Zero(4, 5);
  for (int r = 0; r < 4; ++r) {
    for (int k = 0; k < 5000; ++k) {
      same(r, static_cast<int>(rng.uniform() * 5)) += 1.0;
      const double u = std::pow(rng.uniform(), 1.0 + 0.3 * r);
      differ(r, static_cast<int>(u * 5)) += 1.0;
    }
  }
  CHECK(chi_square_homogeneity(same).p_value > 0.001);
  CHECK(chi_square_homogeneity(differ).p_value < 1e-10);
  CHECK(chi_square_homogeneity(Eigen::MatrixXd::Ones(1, 3)).decision == Decision::inconclusive);
}

TEST_CASE("binned conditional test on an exact conditional law") {
  Rng rng(6);
  const std::size_t n = 100000;
  std::vector<double> gamma(n), s(n);
  for (std::size_t k = 0; k < n; ++k) {
    gamma[k] = gamma_sample(GammaLaw{2.0}, rng);
    s[k] = gig_sample(GigLaw{1.0, 2.0 * gamma[k]}, rng);
  }
  for (auto ref : {BinReference::median, BinReference::per_sample}) {
    BinnedOptions opt;
    opt.reference = ref;
    const auto report = binned_conditional_test(gamma, s, 1.0, opt);
    CHECK(report.bins.size() == 50);
    CHECK(report.dropped_low == 1000);
    CHECK(report.inconclusive == 0);
    CHECK(report.pass_rate() >= 0.9);
    // Wrong order is detected.
    const auto wrong = binned_conditional_test(gamma, s, -1.0, opt);
    CHECK(wrong.pass_rate() < 0.5);
  }
  // Stability under bin doubling.
  BinnedOptions fine;
  fine.bins = 100;
  const double coarse_rate = binned_conditional_test(gamma, s, 1.0).pass_rate();
  const double fine_rate = binned_conditional_test(gamma, s, 1.0, fine).pass_rate();
  CHECK(std::abs(coarse_rate - fine_rate) < 0.05);

  BinnedOptions tiny;
  tiny.bins = 1000;
  CHECK(binned_conditional_test(gamma, s, 1.0, tiny).inconclusive == 1000);
  gamma[0] = -1.0;
  CHECK_THROWS_AS(binned_conditional_test(gamma, s, 1.0), std::invalid_argument);
}

TEST_CASE("mean interval, correlation, spearman") {
  Rng rng(7);
  std::vector<double> xs(10000);
  for (auto& x : xs) x = 2.0 + rng.normal();
  const auto m = mean_ci(xs, 0.95);
  CHECK(m.lo < 2.0);
  CHECK(m.hi > 2.0);
  CHECK(m.std_error == doctest::Approx(0.01).epsilon(0.05));

  std::vector<double> a{1, 2, 3, 4, 5}, b{5, 6, 7, 8, 7};
  CHECK(average_ranks(b) == std::vector<double>{1, 2, 3.5, 5, 3.5});
  CHECK(spearman(a, a).rho == doctest::Approx(1.0));
  std::vector<double> x(2000), y(2000);
  for (std::size_t k = 0; k < x.size(); ++k) {
    x[k] = static_cast<double>(k % 4);
    y[k] = -x[k] + 2.0 * rng.normal();
  }
  const auto sp = spearman(x, y);
  CHECK(sp.rho < 0.0);
  CHECK(sp.p_value < 1e-6);
  CHECK(std::abs(sample_correlation(x, std::vector<double>(2000, 1.0))) == 0.0);
}

TEST_CASE("rearrangement inequality") {
  const DiscreteLaw bern{{0.1, 1.1}, {0.7, 0.3}};
  // k = 2, N = 1, disjoint singletons: E[Pi]^2 <= E[Pi^2].
  const auto r = rearrangement_check(bern, 2, {{0}, {1}});
  CHECK(r.lhs == doctest::Approx(bern.moment(1) * bern.moment(1)));
  CHECK(r.rhs == doctest::Approx(bern.moment(2)));
  CHECK(r.holds);
  CHECK_FALSE(r.equal);
  const auto same = rearrangement_check(bern, 5, {{0, 3}, {0, 3}, {3, 0}});
  CHECK(same.equal);
  CHECK_THROWS_AS(rearrangement_check(bern, 5, {{0, 1}, {2}}), std::invalid_argument);
  CHECK_THROWS_AS(rearrangement_check(bern, 5, {{0, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(rearrangement_check(DiscreteLaw{{-1.0}, {1.0}}, 2, {{0}}), std::invalid_argument);
}

TEST_CASE("report csv") {
  TestReport a;
  a.name = "x";
  a.decision = Decision::pass;
  a.meta["bin"] = 3;
  TestReport b;
  b.name = "y";
  const std::vector<TestReport> reports{a, b};
  std::ostringstream out;
  write_reports_csv(out, reports);
  const std::string text = out.str();
  CHECK(text.rfind("name,statistic,p_value,level,decision,n1,n2,bin\n", 0) == 0);
  CHECK(text.find("x,0,1,0.01,pass,0,0,3\n") != std::string::npos);
  CHECK(text.find("y,0,1,0.01,inconclusive,0,0,\n") != std::string::npos);
}
