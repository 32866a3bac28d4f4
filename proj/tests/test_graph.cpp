#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <set>
#include <vector>

#include "walklab/errors.hpp"
#include "walklab/graph.hpp"

using namespace walklab;

namespace {

// Subset oracle: every vertex subset of the allowed region by bitmask,
// connectivity checked by BFS.
double brute_min_exit(const DirectedGraph& g, const Eigen::VectorXd& a, VertexId root,
                      const std::vector<bool>& allowed, const std::vector<bool>& target) {
  std::vector<VertexId> region;
  for (VertexId v = 0; v < g.vertex_count(); ++v) {
    if (allowed[v]) region.push_back(v);
  }
  REQUIRE(region.size() <= 22);
  double best = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 1; mask < (1u << region.size()); ++mask) {
    std::vector<bool> in(g.vertex_count(), false);
    int count = 0;
    bool hits = false;
    for (std::size_t k = 0; k < region.size(); ++k) {
      if (mask >> k & 1u) {
        in[region[k]] = true;
        ++count;
        hits = hits || target[region[k]];
      }
    }
    if (!in[root] || count < 2 || !hits) continue;
    std::vector<bool> seen(g.vertex_count(), false);
    std::queue<VertexId> q;
    q.push(root);
    seen[root] = true;
    int reached = 1;
    while (!q.empty()) {
      const VertexId v = q.front();
      q.pop();
      for (const auto& e : g.edges()) {
        VertexId w = -1;
        if (e.tail == v) w = e.head;
        else if (e.head == v) w = e.tail;
        if (w >= 0 && in[w] && !seen[w]) {
          seen[w] = true;
          ++reached;
          q.push(w);
        }
      }
    }
    if (reached != count) continue;
    double exit = 0.0;
    for (int e = 0; e < g.edge_count(); ++e) {
      if (in[g.edge(e).tail] && !in[g.edge(e).head]) exit += a[e];
    }
    best = std::min(best, exit);
  }
  return best;
}

}  // namespace

TEST_CASE("construction validates endpoints and labels") {
  CHECK_THROWS_AS(DirectedGraph(2, {{0, 2}}), StructuralError);
  CHECK_THROWS_AS(DirectedGraph(2, {{-1, 0}}), StructuralError);
  CHECK_THROWS_AS(DirectedGraph(2, {{0, 1}}, {{0, 0}}), StructuralError);
  const DirectedGraph g(3, {{0, 1}, {1, 2}, {2, 0}, {0, 1}});
  CHECK(g.out_edges(0).size() == 2);
  CHECK(g.in_edges(1).size() == 2);
  CHECK(g.strongly_connected());
  CHECK_FALSE(DirectedGraph(3, {{0, 1}, {1, 2}}).strongly_connected());
}

TEST_CASE("divergence sums to zero and matches hand values") {
  const auto seg = build_weighted_segment(4, 2.0, 1.0);
  const auto div = divergence(seg.graph, seg.weights.alpha);
  CHECK(div[0] == doctest::Approx(1.0));
  CHECK(div[4] == doctest::Approx(-1.0));
  for (int i = 1; i < 4; ++i) CHECK(div[i] == doctest::Approx(0.0));
  CHECK(div.sum() == doctest::Approx(0.0));
  CHECK_THROWS_AS(divergence(seg.graph, Eigen::VectorXd::Ones(3)), StructuralError);

  const auto torus = build_torus(3, {1.0, 2.0, 3.0, 0.5});
  CHECK(divergence(torus.graph, torus.weights.alpha).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(vertex_weights(torus.graph, torus.weights).minCoeff() == doctest::Approx(6.5));
}

TEST_CASE("torus layout") {
  const int n = 3;
  const auto t = build_torus(n, {1.0, 1.0, 1.0, 1.0});
  CHECK(t.graph.vertex_count() == 36);
  CHECK(t.graph.edge_count() == 144);
  CHECK(t.graph.strongly_connected());
  for (VertexId v = 0; v < t.graph.vertex_count(); ++v) {
    const auto c = t.graph.labels()[v];
    CHECK(c[0] >= -n);
    CHECK(c[0] < n);
    for (int d = 0; d < 4; ++d) {
      const auto& e = t.graph.edge(4 * v + d);
      CHECK(e.tail == v);
      CHECK(e.head == torus_vertex(n, c[0] + kLatticeSteps[d][0], c[1] + kLatticeSteps[d][1]));
    }
  }
  CHECK(torus_vertex(n, n, 0) == torus_vertex(n, -n, 0));
  CHECK(*t.graph.find_label({0, 0}) == torus_vertex(n, 0, 0));
  CHECK_THROWS_AS(build_torus(0, {1, 1, 1, 1}), ParameterError);
  CHECK_THROWS_AS(build_torus(2, {1, 0, 1, 1}), ParameterError);
}

TEST_CASE("torus with cemetery") {
  const int n = 2;
  const auto t = build_torus_star(n, {1.0, 1.0, 1.0, 1.0}, 0.25);
  const int m = 4 * n * n;
  CHECK(t.graph.vertex_count() == m + 1);
  for (VertexId x = 0; x < m; ++x) {
    CHECK(t.graph.edge(4 * m + x) == Edge{x, m});
    CHECK(t.graph.edge(5 * m + x) == Edge{m, x});
    CHECK(t.weights.alpha[4 * m + x] == 0.25);
  }
  CHECK(divergence(t.graph, t.weights.alpha).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(build_torus_star(2, {1, 1, 1, 1}, 0.0), ParameterError);
}

TEST_CASE("reverse is an involution") {
  const auto t = build_torus(2, {1.0, 2.0, 3.0, 4.0});
  const auto r = reverse(t);
  const auto rr = reverse(r);
  CHECK(rr.graph.edges() == t.graph.edges());
  CHECK(r.graph.edge(5).tail == t.graph.edge(5).head);
  CHECK(divergence(r.graph, r.weights.alpha).isApprox(-divergence(t.graph, t.weights.alpha)));
}

TEST_CASE("paths out of a box match a breadth-first oracle") {
  const auto t = build_torus(5, {1, 1, 1, 1});
  for (int radius : {0, 1}) {
    const auto box = lattice_box(radius);
    const auto paths = enumerate_paths_pi_lambda(t.graph, box);
    auto inside = [&](VertexId v) {
      const auto c = t.graph.labels()[v];
      return std::max(std::abs(c[0]), std::abs(c[1])) <= radius;
    };
    // Oracle: breadth-first over partial paths.
    std::set<Path> expect;
    std::queue<Path> q;
    q.push({});
    const VertexId origin = *t.graph.find_label({0, 0});
    while (!q.empty()) {
      Path p = q.front();
      q.pop();
      std::vector<VertexId> visited{origin};
      for (EdgeId e : p) visited.push_back(t.graph.edge(e).head);
      const VertexId last = visited.back();
      for (EdgeId e = 0; e < t.graph.edge_count(); ++e) {
        if (t.graph.edge(e).tail != last) continue;
        const VertexId w = t.graph.edge(e).head;
        if (std::find(visited.begin(), visited.end(), w) != visited.end()) continue;
        Path next = p;
        next.push_back(e);
        if (inside(w)) q.push(next);
        else expect.insert(next);
      }
    }
    CHECK(paths.size() == expect.size());
    CHECK(std::set<Path>(paths.begin(), paths.end()) == expect);
    CHECK(std::is_sorted(paths.begin(), paths.end(), [](const Path& a, const Path& b) {
      return a.size() != b.size() ? a.size() < b.size() : a < b;
    }));
  }
  CHECK(enumerate_paths_pi_lambda(t.graph, lattice_box(0)).size() == 4);
  const std::vector<Coord> no_origin{{1, 0}};
  CHECK_THROWS_AS(enumerate_paths_pi_lambda(t.graph, no_origin), ParameterError);
  CHECK_THROWS_AS(enumerate_paths_pi_lambda(t.graph, lattice_box(4)), ParameterError);
}

TEST_CASE("kappa values") {
  const std::array<double, 4> ones{1, 1, 1, 1};
  CHECK(kappa_global(ones) == doctest::Approx(6.0));
  const std::array<double, 4> skew{1, 2, 3, 4};
  CHECK(kappa_global(skew) == doctest::Approx(2 * 10 - 6));
  CHECK(kappa_of_lambda(lattice_box(0), ones) == doctest::Approx(6.0));
  CHECK(kappa_of_lambda(lattice_box(1), ones) == doctest::Approx(8.0));
  CHECK_THROWS_AS(kappa_of_lambda(lattice_box(2), ones, 1000), CapacityError);
}

TEST_CASE("connected-subset minimum matches the bitmask oracle") {
  const auto t = build_torus(3, {1.0, 2.0, 0.5, 1.5});
  // Region: a plus shape around the origin plus a few extra cells.
  const std::vector<Coord> region{{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1},
                                  {2, 0}, {-1, -1}, {0, 2}, {-2, 0}, {1, -1}, {2, 1}};
  std::vector<bool> allowed(t.graph.vertex_count(), false), target(t.graph.vertex_count(), false);
  for (const auto& c : region) allowed[torus_vertex(3, c[0], c[1])] = true;
  for (const auto& c : {Coord{2, 0}, Coord{0, 2}, Coord{-2, 0}, Coord{2, 1}}) {
    target[torus_vertex(3, c[0], c[1])] = true;
  }
  const VertexId origin = torus_vertex(3, 0, 0);
  const double fast = min_exit_weight(t.graph, t.weights.alpha, origin, allowed, target);
  CHECK(fast == doctest::Approx(brute_min_exit(t.graph, t.weights.alpha, origin, allowed, target)));
}
