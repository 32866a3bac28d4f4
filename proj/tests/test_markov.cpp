#include <doctest.h>

#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "walklab/markov.hpp"

using namespace walklab;

namespace {

GraphPtr share(DirectedGraph g) { return std::make_shared<const DirectedGraph>(std::move(g)); }

Environment random_env(GraphPtr g, Rng& rng, double shape = 1.0) {
  return sample_dirichlet_environment(g, EdgeWeights{Eigen::VectorXd::Constant(g->edge_count(), shape)},
                                      rng);
}

// Walk one step from v.
VertexId step(const Environment& env, VertexId v, Rng& rng) {
  const auto out = env.graph().out_edges(v);
  double u = rng.uniform();
  for (EdgeId e : out) {
    u -= env.prob(e);
    if (u <= 0.0) return env.graph().edge(e).head;
  }
  return env.graph().edge(out.back()).head;
}

// Birth-death environment on the segment with forward probabilities p[i] at
// the interior vertices 1..n-1; the ends reflect.
Environment segment_env(const std::vector<double>& p) {
  const int n = static_cast<int>(p.size()) + 1;
  auto g = share(build_segment(n));
  Eigen::VectorXd prob(2 * n);
  prob[0] = 1.0;          // 0 -> 1
  prob[2 * n - 1] = 1.0;  // n -> n-1
  for (int i = 1; i < n; ++i) {
    prob[2 * i] = p[i - 1];              // i -> i+1
    prob[2 * (i - 1) + 1] = 1.0 - p[i - 1];  // i -> i-1
  }
  return Environment(g, prob);
}

}  // namespace

TEST_CASE("environment validation") {
  auto g = share(build_segment(2));
  CHECK_THROWS_AS(Environment(g, Eigen::VectorXd::Ones(3)), StructuralError);
  Eigen::VectorXd bad(4);
  bad << 1.0, 0.5, 0.6, 1.0;
  CHECK_THROWS_AS(Environment(g, bad), ParameterError);
  bad << 1.0, 0.0, 1.0, 1.0;
  CHECK_THROWS_AS(Environment(g, bad), ParameterError);
  Eigen::VectorXd ok(4);
  ok << 1.0, 0.3, 0.7, 1.0;
  CHECK_NOTHROW(Environment(g, ok));
  CHECK_THROWS_AS(environment_from_weights<double>(share(DirectedGraph(2, {{0, 1}})),
                                                   Eigen::VectorXd::Ones(1)),
                  StructuralError);
}

TEST_CASE("invariant measure: hand cases") {
  const auto two = build_two_cycle(1.0, 1.0);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(2);
  const auto pi2 = invariant_measure(Environment(share(two.graph), ones)).pi;
  CHECK(pi2[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(pi2[1] == doctest::Approx(0.5).epsilon(1e-15));

  // Constant per-direction probabilities on the torus are doubly stochastic.
  const auto torus = build_torus(3, {0.1, 0.2, 0.3, 0.4});
  const auto env = environment_from_weights<double>(share(torus.graph), torus.weights.alpha);
  const auto inv = invariant_measure(env);
  CHECK((inv.pi.array() - 1.0 / 36.0).abs().maxCoeff() < 1e-14);
  CHECK(inv.residual < tol::residual_abs);

  CHECK_THROWS_AS(invariant_measure(Environment(share(DirectedGraph(2, {{0, 1}, {1, 1}})),
                                                Eigen::Vector2d(1.0, 1.0))),
                  StructuralError);
}

TEST_CASE("invariant measure matches long-run occupation") {
  Rng rng(2024);
  const auto torus = build_torus(2, {1, 1, 1, 1});
  const auto env = random_env(share(torus.graph), rng);
  const auto pi = invariant_measure(env).pi;
  CHECK(pi.sum() == doctest::Approx(1.0).epsilon(1e-14));

  // Batch means over 10^7 steps give a standard error that accounts for
  // correlation along the walk.
  const int batches = 100;
  const int batch_len = 100000;
  const int n = env.vertex_count();
  Eigen::MatrixXd freq = Eigen::MatrixXd::Zero(batches, n);
  VertexId v = 0;
  for (int b = 0; b < batches; ++b) {
    for (int t = 0; t < batch_len; ++t) {
      v = step(env, v, rng);
      freq(b, v) += 1.0;
    }
  }
  freq /= batch_len;
  for (int x = 0; x < n; ++x) {
    const double mean = freq.col(x).mean();
    const double sd = std::sqrt((freq.col(x).array() - mean).square().sum() / (batches - 1));
    CHECK(std::abs(mean - pi[x]) < 3.0 * sd / std::sqrt(batches) + 1e-12);
  }
}

TEST_CASE("hitting probabilities: closed forms") {
  const auto two = build_two_cycle(2.0, 1.0);
  const Environment env2(share(two.graph), Eigen::Vector2d(1.0, 1.0));
  CHECK(hitting_prob(env2, 0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(hitting_prob(env2, 0, 0), ParameterError);
  CHECK_THROWS_AS(hitting_prob(env2, 0, 5), ParameterError);

  // Symmetric segment: P_0(H_n < H_0^+) = 1/n.
  for (int n : {1, 2, 5, 30}) {
    const auto env = segment_env(std::vector<double>(n - 1, 0.5));
    CHECK(hitting_prob(env, 0, n) == doctest::Approx(1.0 / n).epsilon(1e-13));
  }

  // Random birth-death: the linear solve matches the product formula.
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial;
    std::vector<double> p(n - 1);
    for (auto& q : p) q = 0.05 + 0.9 * rng.uniform();
    const auto env = segment_env(p);
    std::vector<double> rho(n - 1);
    for (int i = 1; i < n; ++i) rho[i - 1] = (1.0 - p[i - 1]) / p[i - 1];
    // From 0 the first step is forced to 1.
    const double expect = gambler_ruin<double>(rho, 0, 1, n);
    CHECK(std::abs(hitting_prob(env, 0, n) - expect) < 1e-12);
    for (int x = 1; x < n; ++x) {
      // P_x(H_n < H_0) with x interior, via hitting_prob on the chain where 0
      // and n are absorbing: compare the complement event as well.
      const double up = gambler_ruin<double>(rho, 0, x, n);
      std::vector<double> mirrored(n - 1);
      for (int i = 1; i < n; ++i) mirrored[i - 1] = 1.0 / rho[n - i - 1];
      const double down = gambler_ruin<double>(mirrored, 0, n - x, n);
      CHECK(up + down == doctest::Approx(1.0).epsilon(1e-13));
    }
  }
}

TEST_CASE("gambler ruin edge cases") {
  const std::vector<double> ones(9, 1.0);
  for (int x = 2; x <= 8; ++x) CHECK(gambler_ruin<double>(ones, 2, x, 8) == doctest::Approx((x - 2) / 6.0));
  CHECK(gambler_ruin<double>(ones, 0, 0, 5) == 0.0);
  CHECK(gambler_ruin<double>(ones, 0, 5, 5) == 1.0);
  CHECK_THROWS_AS(gambler_ruin<double>(ones, 3, 2, 5), ParameterError);
  CHECK_THROWS_AS(gambler_ruin<double>(ones, 0, 1, 12), ParameterError);
  // Extreme odds stay finite in log form.
  const std::vector<double> steep(200, 1e3);
  const double v = gambler_ruin<double>(steep, 0, 100, 200);
  CHECK(std::isfinite(v));
  CHECK(v < 1e-250);
}

TEST_CASE("ratio identity and escape probabilities on random graphs") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 11;
    auto g = share(random_strongly_connected(n, 2 * n, rng));
    const auto env = random_env(g, rng, 0.5 + trial * 0.1);
    const auto inv = invariant_measure(env);
    CHECK(inv.residual < tol::residual_abs);
    const VertexId i = 0;
    std::vector<VertexId> targets;
    for (VertexId j = 1; j < n; ++j) targets.push_back(j);
    const auto esc = escape_probabilities(env, i, targets);
    for (VertexId j = 1; j < n; ++j) {
      const double fwd = hitting_prob(env, i, j);
      const double bwd = hitting_prob(env, j, i);
      CHECK(fwd > 0.0);
      CHECK(fwd <= 1.0 + 1e-15);
      CHECK(std::abs(inv.pi[j] / inv.pi[i] - fwd / bwd) <= tol::identity_rel * (fwd / bwd));
      CHECK(std::abs(esc[j - 1].forward - fwd) <= 1e-12 * fwd);
      CHECK(std::abs(esc[j - 1].backward - bwd) <= 1e-12 * bwd);
    }
  }
}

TEST_CASE("long double agrees with double") {
  Rng rng(12);
  auto g = share(random_strongly_connected(9, 20, rng));
  const auto env = random_env(g, rng);
  const auto envl = env.cast<long double>();
  const auto pi = invariant_measure(env).pi;
  const auto pil = invariant_measure(envl).pi;
  CHECK((pi - pil.cast<double>()).cwiseAbs().maxCoeff() < 1e-14);
  const long double hl = hitting_prob(envl, 2, 7);
  CHECK(std::abs(hitting_prob(env, 2, 7) - static_cast<double>(hl)) < 1e-14);
}

TEST_CASE("green matrix") {
  // One vertex with a self-loop of probability p.
  const double p = 0.3;
  auto g = share(DirectedGraph(2, {{0, 0}, {0, 1}, {1, 0}}));
  const Environment env(g, Eigen::Vector3d(p, 1.0 - p, 1.0));
  const std::vector<VertexId> just0{0};
  CHECK(green_matrix(env, just0)(0, 0) == doctest::Approx(1.0 / (1.0 - p)).epsilon(1e-15));

  Rng rng(13);
  const auto torus = build_torus(2, {1, 1, 1, 1});
  const auto renv = random_env(share(torus.graph), rng);
  std::vector<VertexId> subset;
  for (VertexId v = 0; v < 16; v += 2) subset.push_back(v);
  subset.push_back(5);
  const Eigen::MatrixXd green = green_matrix(renv, subset);
  const Eigen::MatrixXd kernel = restricted_kernel(renv, subset);
  const auto m = static_cast<Eigen::Index>(subset.size());
  CHECK((green * (Eigen::MatrixXd::Identity(m, m) - kernel) - Eigen::MatrixXd::Identity(m, m))
            .cwiseAbs()
            .maxCoeff() < tol::green_inverse);
  CHECK(green.minCoeff() >= 0.0);
  CHECK(green.diagonal().minCoeff() >= 1.0);

  // Monte Carlo visit counts from subset[0].
  std::vector<bool> in(16, false);
  for (VertexId v : subset) in[v] = true;
  const int walks = 200000;
  Eigen::VectorXd visits = Eigen::VectorXd::Zero(16);
  Eigen::VectorXd visits_sq = Eigen::VectorXd::Zero(16);
  for (int w = 0; w < walks; ++w) {
    Eigen::VectorXd count = Eigen::VectorXd::Zero(16);
    VertexId v = subset[0];
    while (in[v]) {
      count[v] += 1.0;
      v = step(renv, v, rng);
    }
    visits += count;
    visits_sq += count.cwiseProduct(count);
  }
  for (Eigen::Index k = 0; k < m; ++k) {
    const VertexId j = subset[k];
    const double mean = visits[j] / walks;
    const double var = visits_sq[j] / walks - mean * mean;
    CHECK(std::abs(mean - green(0, k)) < 3.0 * std::sqrt(var / walks) + 1e-12);
  }

  // A closed class inside the subset has no Green function.
  auto trap = share(DirectedGraph(3, {{0, 1}, {1, 0}, {2, 0}, {0, 2}}));
  const Environment tenv(trap, Eigen::Vector4d(0.5, 1.0, 1.0, 0.5));
  const std::vector<VertexId> closed{0, 1, 2};
  CHECK_THROWS_AS(green_matrix(tenv, closed), StructuralError);
}

TEST_CASE("time reversal") {
  Rng rng(14);
  // Birth-death chains are reversible: the reversal is the same kernel on
  // the reversed edge list.
  std::vector<double> p{0.2, 0.7, 0.4, 0.9};
  const auto env = segment_env(p);
  const auto rev = reversed_environment(env);
  for (EdgeId e = 0; e < env.graph().edge_count(); ++e) {
    const EdgeId twin = e ^ 1;  // opposite edge of the segment
    CHECK(rev.prob(e) == doctest::Approx(env.prob(twin)).epsilon(1e-13));
  }

  for (int trial = 0; trial < 20; ++trial) {
    auto g = share(random_strongly_connected(3 + trial % 8, 12, rng));
    const auto renv = random_env(g, rng);
    const auto back = reversed_environment(reversed_environment(renv));
    CHECK((back.prob() - renv.prob()).cwiseAbs().maxCoeff() < tol::identity_rel);
    CHECK(back.graph().edges() == renv.graph().edges());
  }
  CHECK_THROWS_AS(reversed_environment(env, share(build_segment(4))), StructuralError);
}

TEST_CASE("path weight") {
  const auto env = segment_env({0.25, 0.5});
  const std::vector<EdgeId> path{0, 2, 4};
  CHECK(path_weight(env, std::span<const EdgeId>(path)) == doctest::Approx(0.125));
  const std::vector<EdgeId> bad{99};
  CHECK_THROWS_AS(path_weight(env, std::span<const EdgeId>(bad)), ParameterError);
}

TEST_CASE("passage split") {
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = share(random_strongly_connected(2 + trial % 9, 15, rng));
    const auto env = random_env(g, rng);
    const VertexId y = g->vertex_count() - 1;
    const auto split = passage_split(env, 0, y);
    CHECK(split.to_target == doctest::Approx(hitting_prob(env, 0, y)).epsilon(1e-13));
    CHECK(split.to_target + split.return_first == doctest::Approx(1.0).epsilon(1e-13));
  }
  // A self-loop at x counts as an immediate return.
  auto g = share(DirectedGraph(2, {{0, 0}, {0, 1}, {1, 0}}));
  const Environment env(g, Eigen::Vector3d(0.25, 0.75, 1.0));
  CHECK(passage_split(env, 0, 1).return_first == doctest::Approx(0.25));
}
