#include "walklab/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "walklab/errors.hpp"

namespace walklab {

namespace {

void build_csr(int n, const std::vector<Edge>& edges, bool by_tail, std::vector<int>& index,
               std::vector<int>& list) {
  index.assign(static_cast<std::size_t>(n) + 1, 0);
  for (const auto& e : edges) ++index[static_cast<std::size_t>(by_tail ? e.tail : e.head) + 1];
  for (int v = 0; v < n; ++v) index[v + 1] += index[v];
  list.assign(edges.size(), 0);
  std::vector<int> fill(index.begin(), index.end() - 1);
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    const int v = by_tail ? edges[e].tail : edges[e].head;
    list[fill[v]++] = e;
  }
}

std::vector<bool> reachable(const DirectedGraph& g, VertexId from, bool forward) {
  std::vector<bool> seen(static_cast<std::size_t>(g.vertex_count()), false);
  std::vector<VertexId> stack{from};
  seen[from] = true;
  while (!stack.empty()) {
    const VertexId v = stack.back();
    stack.pop_back();
    for (EdgeId e : forward ? g.out_edges(v) : g.in_edges(v)) {
      const VertexId w = forward ? g.edge(e).head : g.edge(e).tail;
      if (!seen[w]) {
        seen[w] = true;
        stack.push_back(w);
      }
    }
  }
  return seen;
}

int wrap(int x, int n) {
  const int period = 2 * n;
  int r = (x + n) % period;
  if (r < 0) r += period;
  return r - n;
}

}  // namespace

DirectedGraph::DirectedGraph(int vertex_count, std::vector<Edge> edges, std::vector<Coord> labels)
    : vertex_count_(vertex_count), edges_(std::move(edges)), labels_(std::move(labels)) {
  if (vertex_count_ < 0) throw StructuralError("negative vertex count");
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto& ed = edges_[e];
    if (ed.tail < 0 || ed.tail >= vertex_count_ || ed.head < 0 || ed.head >= vertex_count_) {
      throw StructuralError("edge " + std::to_string(e) + " has an endpoint outside [0, " +
                            std::to_string(vertex_count_) + ")");
    }
  }
  if (!labels_.empty() && static_cast<int>(labels_.size()) != vertex_count_) {
    throw StructuralError("labels must be empty or one per vertex");
  }
  build_csr(vertex_count_, edges_, true, out_index_, out_list_);
  build_csr(vertex_count_, edges_, false, in_index_, in_list_);
}

std::span<const EdgeId> DirectedGraph::out_edges(VertexId v) const {
  return {out_list_.data() + out_index_[v], out_list_.data() + out_index_[v + 1]};
}

std::span<const EdgeId> DirectedGraph::in_edges(VertexId v) const {
  return {in_list_.data() + in_index_[v], in_list_.data() + in_index_[v + 1]};
}

std::optional<VertexId> DirectedGraph::find_label(const Coord& c) const {
  for (int v = 0; v < static_cast<int>(labels_.size()); ++v) {
    if (labels_[v] == c) return v;
  }
  return std::nullopt;
}

bool DirectedGraph::strongly_connected() const {
  if (vertex_count_ == 0) return true;
  const auto fwd = reachable(*this, 0, true);
  const auto bwd = reachable(*this, 0, false);
  return std::all_of(fwd.begin(), fwd.end(), [](bool b) { return b; }) &&
         std::all_of(bwd.begin(), bwd.end(), [](bool b) { return b; });
}

void EdgeWeights::validate(const DirectedGraph& g) const {
  if (alpha.size() != g.edge_count()) {
    throw StructuralError("weight vector has " + std::to_string(alpha.size()) + " entries for " +
                          std::to_string(g.edge_count()) + " edges");
  }
  for (Eigen::Index e = 0; e < alpha.size(); ++e) {
    if (!(alpha[e] > 0.0) || !std::isfinite(alpha[e])) {
      throw ParameterError("edge weight " + std::to_string(e) + " must be positive and finite");
    }
  }
}

Eigen::VectorXd vertex_weights(const DirectedGraph& g, const EdgeWeights& a) {
  if (a.alpha.size() != g.edge_count()) throw StructuralError("weight vector length mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(g.vertex_count());
  for (int e = 0; e < g.edge_count(); ++e) out[g.edge(e).tail] += a.alpha[e];
  return out;
}

DivergenceMap divergence(const DirectedGraph& g, const Eigen::VectorXd& a) {
  if (a.size() != g.edge_count()) {
    throw StructuralError("divergence: " + std::to_string(a.size()) + " weights for " +
                          std::to_string(g.edge_count()) + " edges");
  }
  DivergenceMap div = DivergenceMap::Zero(g.vertex_count());
  for (int e = 0; e < g.edge_count(); ++e) {
    div[g.edge(e).tail] += a[e];
    div[g.edge(e).head] -= a[e];
  }
  return div;
}

VertexId torus_vertex(int n, int x, int y) {
  return (wrap(x, n) + n) * (2 * n) + (wrap(y, n) + n);
}

WeightedGraph build_torus(int n, const std::array<double, 4>& alpha) {
  if (n < 1) throw ParameterError("torus half-width must be at least 1");
  const int side = 2 * n;
  const int count = side * side;
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(4 * count));
  std::vector<Coord> labels(static_cast<std::size_t>(count));
  Eigen::VectorXd w(4 * count);
  for (int x = -n; x < n; ++x) {
    for (int y = -n; y < n; ++y) {
      const VertexId v = torus_vertex(n, x, y);
      labels[v] = {x, y};
    }
  }
  for (VertexId v = 0; v < count; ++v) {
    const auto [x, y] = labels[v];
    for (int d = 0; d < 4; ++d) {
      edges.push_back({v, torus_vertex(n, x + kLatticeSteps[d][0], y + kLatticeSteps[d][1])});
      w[4 * v + d] = alpha[d];
    }
  }
  WeightedGraph out{DirectedGraph(count, std::move(edges), std::move(labels)), EdgeWeights{w}};
  out.weights.validate(out.graph);
  return out;
}

WeightedGraph build_torus_star(int n, const std::array<double, 4>& alpha, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw ParameterError("cemetery weight must be positive");
  const WeightedGraph torus = build_torus(n, alpha);
  const int count = torus.graph.vertex_count();
  const VertexId cemetery = count;
  std::vector<Edge> edges = torus.graph.edges();
  for (VertexId x = 0; x < count; ++x) edges.push_back({x, cemetery});
  for (VertexId x = 0; x < count; ++x) edges.push_back({cemetery, x});
  std::vector<Coord> labels = torus.graph.labels();
  // The cemetery carries a label outside the torus range.
  labels.push_back({std::numeric_limits<int>::min(), std::numeric_limits<int>::min()});
  Eigen::VectorXd w(static_cast<Eigen::Index>(edges.size()));
  w.head(torus.weights.alpha.size()) = torus.weights.alpha;
  w.tail(2 * count).setConstant(eps);
  return {DirectedGraph(count + 1, std::move(edges), std::move(labels)), EdgeWeights{w}};
}

DirectedGraph build_segment(int n) {
  if (n < 1) throw ParameterError("segment length must be at least 1");
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(2 * n));
  for (int i = 0; i < n; ++i) {
    edges.push_back({i, i + 1});
    edges.push_back({i + 1, i});
  }
  return DirectedGraph(n + 1, std::move(edges));
}

WeightedGraph build_weighted_segment(int n, double forward, double backward) {
  DirectedGraph g = build_segment(n);
  Eigen::VectorXd w(2 * n);
  for (int i = 0; i < n; ++i) {
    w[2 * i] = forward;
    w[2 * i + 1] = backward;
  }
  WeightedGraph out{std::move(g), EdgeWeights{w}};
  out.weights.validate(out.graph);
  return out;
}

WeightedGraph build_two_cycle(double a1, double a2) {
  WeightedGraph out{DirectedGraph(2, {{0, 1}, {1, 0}}), EdgeWeights{Eigen::Vector2d(a1, a2)}};
  out.weights.validate(out.graph);
  return out;
}

DirectedGraph random_strongly_connected(int vertex_count, int extra_edges, Rng& rng) {
  if (vertex_count < 2) throw ParameterError("random graph needs at least two vertices");
  if (extra_edges < 0) throw ParameterError("extra edge count must be non-negative");
  auto below = [&rng](int n) { return static_cast<int>(rng.uniform() * n); };
  std::vector<VertexId> order(static_cast<std::size_t>(vertex_count));
  for (int v = 0; v < vertex_count; ++v) order[v] = v;
  for (int k = vertex_count - 1; k > 0; --k) std::swap(order[k], order[below(k + 1)]);
  std::vector<Edge> edges;
  for (int k = 0; k < vertex_count; ++k) edges.push_back({order[k], order[(k + 1) % vertex_count]});
  for (int k = 0; k < extra_edges; ++k) {
    const VertexId t = below(vertex_count);
    VertexId h = below(vertex_count - 1);
    if (h >= t) ++h;
    edges.push_back({t, h});
  }
  return DirectedGraph(vertex_count, std::move(edges));
}

DirectedGraph reverse(const DirectedGraph& g) {
  std::vector<Edge> edges;
  edges.reserve(g.edges().size());
  for (const auto& e : g.edges()) edges.push_back({e.head, e.tail});
  return DirectedGraph(g.vertex_count(), std::move(edges), g.labels());
}

WeightedGraph reverse(const WeightedGraph& wg) { return {reverse(wg.graph), wg.weights}; }

// ---------------------------------------------------------------------------

std::vector<Coord> lattice_box(int radius) {
  if (radius < 0) throw ParameterError("box radius must be non-negative");
  std::vector<Coord> out;
  for (int x = -radius; x <= radius; ++x) {
    for (int y = -radius; y <= radius; ++y) out.push_back({x, y});
  }
  return out;
}

namespace {

// Membership mask of lambda on a labelled torus, after checking that lambda
// and its lattice neighbourhood of depth `margin` fit without wrapping.
std::vector<bool> lattice_mask(const DirectedGraph& g, std::span<const Coord> lambda, int margin) {
  if (!g.has_labels()) throw ParameterError("lattice operations need a labelled torus");
  const bool has_origin =
      std::find(lambda.begin(), lambda.end(), Coord{0, 0}) != lambda.end();
  if (!has_origin) throw ParameterError("lambda must contain the origin");
  int half_width = 0;
  for (const auto& lab : g.labels()) {
    if (lab[0] != std::numeric_limits<int>::min()) half_width = std::max(half_width, -lab[0]);
  }
  std::vector<bool> mask(static_cast<std::size_t>(g.vertex_count()), false);
  for (const auto& c : lambda) {
    if (std::max(std::abs(c[0]), std::abs(c[1])) + margin > half_width - 1) {
      throw ParameterError("lambda is too wide for the torus (wraps around)");
    }
    mask[torus_vertex(half_width, c[0], c[1])] = true;
  }
  return mask;
}

}  // namespace

std::vector<Path> enumerate_paths_pi_lambda(const DirectedGraph& g, std::span<const Coord> lambda) {
  const std::vector<bool> inside = lattice_mask(g, lambda, 1);
  const VertexId origin = *g.find_label({0, 0});

  std::vector<Path> paths;
  Path current;
  std::vector<bool> on_path(static_cast<std::size_t>(g.vertex_count()), false);

  auto dfs = [&](auto&& self, VertexId v) -> void {
    on_path[v] = true;
    for (EdgeId e : g.out_edges(v)) {
      const VertexId w = g.edge(e).head;
      if (on_path[w]) continue;
      current.push_back(e);
      if (inside[w]) self(self, w);
      else paths.push_back(current);
      current.pop_back();
    }
    on_path[v] = false;
  };
  dfs(dfs, origin);

  std::sort(paths.begin(), paths.end(), [](const Path& a, const Path& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  return paths;
}

double kappa_global(std::span<const double> alpha, int d) {
  if (d < 1 || static_cast<int>(alpha.size()) != 2 * d) {
    throw ParameterError("kappa_global needs 2d weights");
  }
  double total = 0.0;
  for (double a : alpha) {
    if (!(a > 0.0)) throw ParameterError("weights must be positive");
    total += a;
  }
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < d; ++j) best = std::min(best, 2.0 * total - (alpha[j] + alpha[j + d]));
  return best;
}

double min_exit_weight(const DirectedGraph& g, const Eigen::VectorXd& a, VertexId root,
                       const std::vector<bool>& allowed, const std::vector<bool>& target,
                       std::size_t cap) {
  const auto n = static_cast<std::size_t>(g.vertex_count());
  if (a.size() != g.edge_count()) throw StructuralError("weight vector length mismatch");
  if (allowed.size() != n || target.size() != n) throw StructuralError("mask length mismatch");
  if (root < 0 || root >= g.vertex_count() || !allowed[root]) {
    throw ParameterError("root must be an allowed vertex");
  }

  // Undirected neighbourhoods restricted to the allowed region.
  std::vector<std::vector<VertexId>> nbr(n);
  for (const auto& e : g.edges()) {
    if (e.tail == e.head || !allowed[e.tail] || !allowed[e.head]) continue;
    nbr[e.tail].push_back(e.head);
    nbr[e.head].push_back(e.tail);
  }
  for (auto& list : nbr) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }

  std::vector<bool> in_set(n, false);
  std::vector<bool> blocked(n, false);  // in set, excluded, or already a candidate
  std::size_t visited = 0;
  std::size_t set_size = 0;
  int target_hits = 0;
  double best = std::numeric_limits<double>::infinity();

  auto exit_weight = [&]() {
    double total = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      if (!in_set[v]) continue;
      for (EdgeId e : g.out_edges(static_cast<VertexId>(v))) {
        if (!in_set[g.edge(e).head]) total += a[e];
      }
    }
    return total;
  };

  // Each connected set containing the root is produced exactly once: a
  // candidate that has been tried and dropped stays blocked in the sibling
  // branches that follow it.
  auto grow = [&](auto&& self, std::vector<VertexId> candidates) -> void {
    if (++visited > cap) {
      throw CapacityError("connected-subset enumeration exceeds cap of " + std::to_string(cap));
    }
    if (set_size >= 2 && target_hits > 0) best = std::min(best, exit_weight());
    while (!candidates.empty()) {
      const VertexId v = candidates.back();
      candidates.pop_back();
      std::vector<VertexId> next = candidates;
      std::vector<VertexId> added;
      for (VertexId w : nbr[v]) {
        if (!blocked[w]) {
          blocked[w] = true;
          added.push_back(w);
          next.push_back(w);
        }
      }
      in_set[v] = true;
      ++set_size;
      if (target[v]) ++target_hits;
      self(self, std::move(next));
      in_set[v] = false;
      --set_size;
      if (target[v]) --target_hits;
      for (VertexId w : added) blocked[w] = false;
      // v stays blocked for the remaining siblings
    }
  };

  blocked[root] = true;
  in_set[root] = true;
  set_size = 1;
  if (target[root]) ++target_hits;
  std::vector<VertexId> start;
  for (VertexId w : nbr[root]) {
    if (!blocked[w]) {
      blocked[w] = true;
      start.push_back(w);
    }
  }
  grow(grow, start);
  if (!std::isfinite(best)) throw ParameterError("no admissible connected set");
  return best;
}

double kappa_of_lambda(std::span<const Coord> lambda, const std::array<double, 4>& alpha,
                       std::size_t cap) {
  int radius = 0;
  for (const auto& c : lambda) radius = std::max({radius, std::abs(c[0]), std::abs(c[1])});
  // Room for lambda, its outer boundary, and the heads of edges leaving it.
  const WeightedGraph torus = build_torus(radius + 3, alpha);
  const std::vector<bool> inside = lattice_mask(torus.graph, lambda, 2);

  const auto n = static_cast<std::size_t>(torus.graph.vertex_count());
  std::vector<bool> ring(n, false);
  for (std::size_t v = 0; v < n; ++v) {
    if (!inside[v]) continue;
    for (EdgeId e : torus.graph.out_edges(static_cast<VertexId>(v))) {
      const VertexId w = torus.graph.edge(e).head;
      if (!inside[w]) ring[w] = true;
    }
  }
  std::vector<bool> allowed(n);
  for (std::size_t v = 0; v < n; ++v) allowed[v] = inside[v] || ring[v];
  return min_exit_weight(torus.graph, torus.weights.alpha, *torus.graph.find_label({0, 0}),
                         allowed, ring, cap);
}

}  // namespace walklab
