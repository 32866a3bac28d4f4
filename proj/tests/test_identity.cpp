#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "walklab/errors.hpp"
#include "walklab/identity.hpp"
#include "walklab/stats.hpp"

using namespace walklab;

namespace {

GraphPtr share(DirectedGraph g) { return std::make_shared<const DirectedGraph>(std::move(g)); }

// Prefix {0..k} of a segment field as an environment.
Environment prefix_environment(const GammaField& w, int k) {
  return environment_from_weights<double>(share(build_segment(k)), w.w.head(2 * k));
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

}  // namespace

TEST_CASE("divergence gate") {
  const auto two = build_two_cycle(2.0, 1.0);
  CHECK(extract_gamma(two.graph, two.weights, 0, 1) == doctest::Approx(1.0));
  CHECK_THROWS_AS(extract_gamma(two.graph, two.weights, 1, 0), PreconditionError);
  CHECK_THROWS_AS(extract_gamma(two.graph, two.weights, 0, 0), ParameterError);

  // Unit weights on the torus have zero divergence everywhere.
  const auto torus = build_torus(2, {1.0, 1.0, 1.0, 1.0});
  CHECK(extract_gamma(torus.graph, torus.weights, 0, 5) == 0.0);

  // One edge bumped breaks the condition at its endpoints.
  EdgeWeights bad = torus.weights;
  bad.alpha[3] += 0.5;
  try {
    extract_gamma(torus.graph, bad, 0, 5);
    FAIL("expected PreconditionError");
  } catch (const PreconditionError& e) {
    const std::string what = e.what();
    const Edge ed = torus.graph.edge(3);
    CHECK(what.find("vertex " + std::to_string(ed.head)) != std::string::npos);
  }
}

TEST_CASE("random divergence weights") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const auto g = random_strongly_connected(3 + rep % 8, rep, rng);
    const double gamma = 0.25 * rep;
    const auto a = random_divergence_weights(g, 0, g.vertex_count() - 1, gamma, rng);
    CHECK((a.alpha.array() > 0.0).all());
    CHECK(extract_gamma(g, a, 0, g.vertex_count() - 1) == doctest::Approx(gamma).epsilon(1e-12));
  }
}

TEST_CASE("segment chain: closed form, recursion and hitting probabilities") {
  Rng rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 1 + rep % 12;
    const auto w = sample_segment_gamma_field(n, 0.5 + rng.uniform(), 0.5 + rng.uniform(), rng);
    const auto closed = my_chain(w);
    const auto rec = my_chain_recursive(w);
    REQUIRE(closed.size() == static_cast<std::size_t>(n));
    REQUIRE(rec.size() == closed.size());
    for (int k = 1; k <= n; ++k) {
      const auto& p = closed[k - 1];
      CHECK(rel(p.gamma, rec[k - 1].gamma) < 1e-12);
      CHECK(std::abs(p.s - rec[k - 1].s) < 1e-12 * std::max(1.0, std::abs(p.s)));
      // Gamma e^S and Gamma e^-S against the two escape events on {0..k}.
      const auto env = prefix_environment(w, k);
      const double w01 = w.w[0], wk = w.w[2 * (k - 1) + 1];
      CHECK(rel(p.gamma * std::exp(p.s), w01 * hitting_prob(env, 0, k)) < 1e-11);
      CHECK(rel(p.gamma * std::exp(-p.s), wk * hitting_prob(env, k, 0)) < 1e-11);
    }
  }
}

TEST_CASE("segment chain with unit weights") {
  const GammaField ones{Eigen::VectorXd::Ones(2 * 30)};
  const auto c = my_chain(ones);
  for (int k = 1; k <= 30; ++k) {
    CHECK(c[k - 1].gamma == doctest::Approx(1.0 / k).epsilon(1e-14));
    CHECK(std::abs(c[k - 1].s) < 1e-15);
  }
  CHECK_THROWS_AS(my_chain(GammaField{Eigen::VectorXd::Ones(3)}), StructuralError);
}

TEST_CASE("segment chain survives extreme weights") {
  Rng rng(13);
  const auto w = sample_segment_gamma_field(2000, 0.05, 0.05, rng);
  const auto c = my_chain(w);
  const auto r = my_chain_recursive(w);
  for (std::size_t k = 0; k < c.size(); ++k) {
    REQUIRE(std::isfinite(c[k].log_gamma));
    REQUIRE(std::isfinite(c[k].s));
    CHECK(c[k].gamma == std::exp(c[k].log_gamma));
  }
  // The recursion may underflow on long chains; compare where it is normal.
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (std::isnormal(r[k].gamma) && r[k].gamma > 1e-250) CHECK(rel(c[k].gamma, r[k].gamma) < 1e-9);
  }
}

TEST_CASE("gibbs conditional matches the joint density") {
  Rng rng(14);
  DirectedGraph g(3, {{0, 1}, {1, 0}, {1, 2}, {2, 1}, {2, 0}, {0, 2}, {1, 1}});
  const GammaField w{Eigen::VectorXd::Random(7).array().abs() + 0.2};
  const double gamma = 0.7;
  Eigen::VectorXd u(3);
  u << 0.0, 0.3, -0.4;
  for (VertexId i : {1, 2}) {
    const auto k = gibbs_coefficients(g, w, u, gamma, 0, 2, i);
    // log density minus the conditional must not depend on u_i.
    std::vector<double> diffs;
    for (double x = -2.0; x <= 2.0; x += 0.5) {
      Eigen::VectorXd v = u;
      v[i] = x;
      diffs.push_back(log_mixing_density(g, w, v, gamma, 0, 2) -
                      (k.c * x - k.a * std::exp(x) - k.b * std::exp(-x)));
    }
    for (double d : diffs) CHECK(d == doctest::Approx(diffs.front()).epsilon(1e-12));
  }
  CHECK(gibbs_coefficients(g, w, u, gamma, 0, 2, 2).c == gamma);
  CHECK(gibbs_coefficients(g, w, u, gamma, 0, 2, 1).c == 0.0);
}

TEST_CASE("gibbs burn-in floor and connectivity") {
  Rng rng(15);
  const auto seg = build_weighted_segment(3, 2.0, 1.0);
  const GammaField w{Eigen::VectorXd::Ones(6)};
  CHECK_THROWS_AS(sample_u_field_gibbs(seg.graph, w, 1.0, 0, 3, kGibbsBurnInFloor - 1, rng),
                  ParameterError);
  CHECK_NOTHROW(sample_u_field_gibbs(seg.graph, w, 1.0, 0, 3, kGibbsBurnInFloor, rng));
  DirectedGraph one_way(2, {{0, 1}});
  CHECK_THROWS_AS(
      sample_u_field_gibbs(one_way, GammaField{Eigen::VectorXd::Ones(1)}, 0.0, 0, 1, 200, rng),
      StructuralError);
}

TEST_CASE("gibbs against the exact segment sampler") {
  Rng rng(16);
  const int n = 3;
  const auto seg = build_weighted_segment(n, 2.0, 1.0);
  const auto w = sample_gamma_field(seg.graph, seg.weights, rng);
  const double gamma = 1.0;
  const int draws = 1000;
  std::vector<double> exact_last(draws), exact_mid(draws), gibbs_last(draws), gibbs_mid(draws);
  std::vector<double> swept_last(draws), swept_mid(draws);
  for (int k = 0; k < draws; ++k) {
    const auto e = sample_u_field_segment(w, gamma, rng);
    exact_last[k] = e.u[n];
    exact_mid[k] = e.u[1];
    // One sweep started from an exact draw stays in law.
    UField f = sample_u_field_segment(w, gamma, rng);
    gibbs_sweep(seg.graph, w, gamma, 0, n, f, rng);
    swept_last[k] = f.u[n];
    swept_mid[k] = f.u[1];
    const auto gb = sample_u_field_gibbs(seg.graph, w, gamma, 0, n, kGibbsBurnInFloor, rng);
    gibbs_last[k] = gb.u[n];
    gibbs_mid[k] = gb.u[1];
  }
  CHECK(ks_two_sample(exact_last, gibbs_last, 0.001).passed());
  CHECK(ks_two_sample(exact_mid, gibbs_mid, 0.001).passed());
  CHECK(ks_two_sample(exact_last, swept_last, 0.001).passed());
  CHECK(ks_two_sample(exact_mid, swept_mid, 0.001).passed());
}

TEST_CASE("exact segment increments follow their conditional law") {
  Rng rng(17);
  const GammaField w{(Eigen::VectorXd(2) << 1.7, 0.4).finished()};
  std::vector<double> s(4000);
  const double shift = segment_increment_shift(1.7, 0.4);
  for (auto& x : s) x = sample_u_field_segment(w, 0.5, rng).u[1] - shift;
  std::sort(s.begin(), s.end());
  const GigLaw law{0.5, 2.0 * std::sqrt(1.7 * 0.4)};
  CHECK(ks_one_sample_batch(s, [&](std::span<const double> xs) { return gig_cdf_s_sorted(law, xs); },
                            0.001)
            .passed());
}

TEST_CASE("mixed environment") {
  Rng rng(18);
  const auto g = share(random_strongly_connected(6, 5, rng));
  const auto a = random_divergence_weights(*g, 0, 5, 1.0, rng);
  const auto w = sample_gamma_field(*g, a, rng);
  UField u{Eigen::VectorXd::Random(6), 0};
  u.u[0] = 0.0;
  const auto mixed = mix_environment(g, w, u);
  for (VertexId v = 0; v < 6; ++v) {
    double s = 0.0;
    for (EdgeId e : g->out_edges(v)) s += mixed.omega.prob(e);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
  // U = 0 gives back the plain normalization.
  const auto plain = mix_environment(g, w, UField{Eigen::VectorXd::Zero(6), 0});
  CHECK((plain.w_u.w - w.w).norm() == 0.0);
}

TEST_CASE("interpretation routes agree") {
  Rng rng(19);
  for (int rep = 0; rep < 40; ++rep) {
    const int n = 2 + rep % 10;
    const auto g = share(random_strongly_connected(n, rep % 7, rng));
    const VertexId j0 = n - 1;
    const double gamma = 0.5 * (rep % 4);
    const auto a = random_divergence_weights(*g, 0, j0, gamma, rng);
    const auto w = sample_gamma_field(*g, a, rng);
    const UField u = rep % 2 == 0 ? sample_u_field_gibbs(*g, w, gamma, 0, j0, 100, rng)
                                  : UField{Eigen::VectorXd::Zero(n), 0};
    const auto r = check_interpretation(g, w, u, 0, j0);
    CHECK(r.ok);
    CHECK(r.m_matrix);
    CHECK(r.max_rel_discrepancy < 1e-10);
    CHECK(std::abs(r.s_from_matrix - r.s_direct) < 1e-10);
    // Row sums at the marked vertices.
    const auto mixed = mix_environment(g, w, u);
    const double uj = u.u[j0];
    CHECK(rel(mixed.beta[0], r.matrix.plus_plus + std::exp(uj) * r.matrix.plus) < 1e-10);
    CHECK(rel(mixed.beta[j0], r.matrix.minus_minus + std::exp(-uj) * r.matrix.minus) < 1e-10);
  }
  // Unrooted U is rejected.
  const auto g = share(build_two_cycle(1.0, 1.0).graph);
  CHECK_THROWS_AS(
      check_interpretation(g, GammaField{Eigen::VectorXd::Ones(2)},
                           UField{(Eigen::VectorXd(2) << 0.1, 0.0).finished(), 0}, 0, 1),
      ParameterError);
}

TEST_CASE("identity sampler on the two-cycle") {
  // H+ = beta_0 and H- = beta_1 since each escape is certain.
  Rng rng(20);
  const auto two = build_two_cycle(2.0, 1.0);
  const IdentitySampler sampler(share(two.graph), two.weights, 0, 1);
  CHECK(sampler.gamma() == doctest::Approx(1.0));
  std::vector<double> hp(2000), hm(2000);
  for (std::size_t k = 0; k < hp.size(); ++k) {
    const auto s = sampler(rng);
    hp[k] = s.h_plus;
    hm[k] = s.h_minus;
    CHECK(s.gamma_stat == doctest::Approx(std::sqrt(s.h_plus * s.h_minus)));
  }
  std::sort(hp.begin(), hp.end());
  std::sort(hm.begin(), hm.end());
  CHECK(ks_one_sample(hp, [](double x) { return gamma_cdf(2.0, x); }, 0.001).passed());
  CHECK(ks_one_sample(hm, [](double x) { return gamma_cdf(1.0, x); }, 0.001).passed());
}

TEST_CASE("identity sampler conditional law on a small graph") {
  Rng rng(21);
  const auto g = share(DirectedGraph(3, {{0, 1}, {1, 2}, {2, 0}, {1, 0}, {2, 1}, {0, 2}}));
  Eigen::VectorXd a(6);
  a << 1.5, 1.5, 1.0, 0.5, 0.5, 1.0;  // divergence (1, 0, -1)
  const IdentitySampler sampler(g, EdgeWeights{a}, 0, 2);
  CHECK(sampler.gamma() == doctest::Approx(1.0));
  const int n = 6000;
  std::vector<double> gam(n), s(n);
  for (int k = 0; k < n; ++k) {
    const auto x = sampler(rng);
    gam[k] = x.gamma_stat;
    s[k] = x.s_stat;
  }
  auto pit = gig_pit(gam, s, 1.0);
  std::sort(pit.begin(), pit.end());
  CHECK(ks_one_sample(pit, [](double x) { return std::clamp(x, 0.0, 1.0); }, 0.001).passed());
  // Wrong order is visible.
  auto wrong = gig_pit(gam, s, -1.0);
  std::sort(wrong.begin(), wrong.end());
  CHECK_FALSE(ks_one_sample(wrong, [](double x) { return std::clamp(x, 0.0, 1.0); }).passed());
}
