#ifndef WALKLAB_GRAPH_HPP
#define WALKLAB_GRAPH_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "walklab/random.hpp"

namespace walklab {

using VertexId = int;
using EdgeId = int;

struct Edge {
  VertexId tail;
  VertexId head;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Lattice coordinate tag carried by torus vertices.
using Coord = std::array<int, 2>;

/// Directed multigraph. Parallel edges and self-loops are allowed; edge ids
/// are positions in the edge list. Immutable once built.
class DirectedGraph {
 public:
  DirectedGraph() = default;
  /// Throws StructuralError if an endpoint is not in [0, vertex_count).
  DirectedGraph(int vertex_count, std::vector<Edge> edges, std::vector<Coord> labels = {});

  [[nodiscard]] int vertex_count() const { return vertex_count_; }
  [[nodiscard]] int edge_count() const { return static_cast<int>(edges_.size()); }
  [[nodiscard]] const Edge& edge(EdgeId e) const { return edges_[static_cast<std::size_t>(e)]; }
  [[nodiscard]] const std::vector<Edge>& edges() const { return edges_; }
  [[nodiscard]] std::span<const EdgeId> out_edges(VertexId v) const;
  [[nodiscard]] std::span<const EdgeId> in_edges(VertexId v) const;

  [[nodiscard]] bool has_labels() const { return !labels_.empty(); }
  [[nodiscard]] const std::vector<Coord>& labels() const { return labels_; }
  [[nodiscard]] std::optional<VertexId> find_label(const Coord& c) const;

  /// Every vertex reaches every other along directed edges.
  [[nodiscard]] bool strongly_connected() const;

 private:
  int vertex_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<Coord> labels_;
  // CSR adjacency: out_index_[v]..out_index_[v+1] into out_list_.
  std::vector<int> out_index_, out_list_, in_index_, in_list_;
};

/// Dirichlet parameters, one positive weight per edge.
struct EdgeWeights {
  Eigen::VectorXd alpha;

  /// Throws StructuralError on length mismatch, ParameterError on a
  /// non-positive or non-finite entry.
  void validate(const DirectedGraph& g) const;
};

struct WeightedGraph {
  DirectedGraph graph;
  EdgeWeights weights;
};

/// Per-vertex value; divergence results sum to zero.
using DivergenceMap = Eigen::VectorXd;

/// Sum of alpha over the out-edges of each vertex.
Eigen::VectorXd vertex_weights(const DirectedGraph& g, const EdgeWeights& a);

/// Div(a)(x) = sum of a over out-edges of x minus sum over in-edges of x.
/// Throws StructuralError if `a` does not have one entry per edge.
DivergenceMap divergence(const DirectedGraph& g, const Eigen::VectorXd& a);

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

/// Lattice step directions in edge order: e1, e2, -e1, -e2.
inline constexpr std::array<Coord, 4> kLatticeSteps{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};

/// Vertex id of coordinate (x, y) on the torus of half-width n, with
/// periodic wrapping into [-n, n-1]^2.
VertexId torus_vertex(int n, int x, int y);

/// Torus (Z/2nZ)^2 with labels in [-n, n-1]^2. Vertex v has out-edges
/// 4v .. 4v+3 toward e1, e2, -e1, -e2 with weights alpha[0..3]. For n = 1
/// opposite neighbours coincide and the resulting parallel edges are kept.
WeightedGraph build_torus(int n, const std::array<double, 4>& alpha);

/// Torus plus a cemetery vertex (id 4n^2) joined to every torus vertex in
/// both directions by edges of weight `eps`. Edge 16n^2 + x is x -> cemetery
/// and edge 20n^2 + x is cemetery -> x.
WeightedGraph build_torus_star(int n, const std::array<double, 4>& alpha, double eps);

/// Segment {0..n}; edge 2i is (i, i+1) and edge 2i+1 is (i+1, i).
DirectedGraph build_segment(int n);

/// Segment with weight `forward` on every (i, i+1) edge and `backward` on
/// every (i+1, i) edge. The divergence is (forward - backward)(d_0 - d_n).
WeightedGraph build_weighted_segment(int n, double forward, double backward);

/// Two vertices joined by edge 0 = (0, 1) with weight a1 and edge 1 = (1, 0)
/// with weight a2.
WeightedGraph build_two_cycle(double a1, double a2);

/// Random strongly connected graph: a Hamiltonian cycle through a random
/// permutation of the vertices plus `extra_edges` uniformly chosen edges
/// between distinct vertices (parallel edges allowed).
DirectedGraph random_strongly_connected(int vertex_count, int extra_edges, Rng& rng);

/// Reverses every edge, keeping edge ids and weights. An involution.
WeightedGraph reverse(const WeightedGraph& wg);
DirectedGraph reverse(const DirectedGraph& g);

// ---------------------------------------------------------------------------
// Lattice paths and trap strength
// ---------------------------------------------------------------------------

using Path = std::vector<EdgeId>;

/// Square box [-radius, radius]^2.
std::vector<Coord> lattice_box(int radius);

/// All self-avoiding directed paths from the origin whose vertices lie in
/// `lambda` except the last one, which lies outside. `g` must be a labelled
/// torus wide enough that lambda and its neighbours do not wrap. Ordered by
/// length, then lexicographically by edge ids.
/// Throws ParameterError if lambda does not contain the origin or wraps.
std::vector<Path> enumerate_paths_pi_lambda(const DirectedGraph& g, std::span<const Coord> lambda);

/// min over j of 2 * sum(alpha) - (alpha_j + alpha_{j+d}), alpha of length 2d.
double kappa_global(std::span<const double> alpha, int d = 2);

inline constexpr std::size_t kDefaultSubsetCap = std::size_t{1} << 20;

/// Minimum of sum_{e in d+S} a(e) over connected sets S with root in S,
/// |S| >= 2, S contained in `allowed` and meeting `target`. d+S is the set of
/// edges leaving S. Connectivity ignores edge direction. Throws CapacityError
/// once more than `cap` sets have been visited, ParameterError if no
/// admissible set exists.
double min_exit_weight(const DirectedGraph& g, const Eigen::VectorXd& a, VertexId root,
                       const std::vector<bool>& allowed, const std::vector<bool>& target,
                       std::size_t cap = kDefaultSubsetCap);

/// Trap strength of a lattice set lambda containing the origin: sets S range
/// over connected subsets of lambda plus its outer vertex boundary that
/// contain the origin and reach the outer boundary.
double kappa_of_lambda(std::span<const Coord> lambda, const std::array<double, 4>& alpha,
                       std::size_t cap = kDefaultSubsetCap);

}  // namespace walklab

#endif  // WALKLAB_GRAPH_HPP
