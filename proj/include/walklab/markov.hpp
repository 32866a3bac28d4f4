#ifndef WALKLAB_MARKOV_HPP
#define WALKLAB_MARKOV_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "walklab/errors.hpp"
#include "walklab/graph.hpp"
#include "walklab/log.hpp"
#include "walklab/random.hpp"
#include "walklab/special_functions.hpp"
#include "walklab/tolerances.hpp"

namespace walklab {

// Quenched computations on a fixed environment. Everything here is dense
// linear algebra templated on the scalar type, so results can be checked
// against an extended-precision run of the same code.

using GraphPtr = std::shared_ptr<const DirectedGraph>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Transition probabilities, one per edge of a shared graph.
template <typename Scalar>
class BasicEnvironment {
 public:
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;

  /// Throws StructuralError on a null graph or length mismatch, ParameterError
  /// if a probability is outside (0, 1] or a vertex's out-probabilities do not
  /// sum to one within tol::stochastic_row.
  BasicEnvironment(GraphPtr graph, Vector prob) : graph_(std::move(graph)), prob_(std::move(prob)) {
    if (!graph_) throw StructuralError("environment needs a graph");
    if (prob_.size() != graph_->edge_count()) {
      throw StructuralError("environment has " + std::to_string(prob_.size()) +
                            " probabilities for " + std::to_string(graph_->edge_count()) + " edges");
    }
    for (Eigen::Index e = 0; e < prob_.size(); ++e) {
      if (!(prob_[e] > Scalar(0)) || prob_[e] > Scalar(1) + Scalar(tol::stochastic_row)) {
        throw ParameterError("transition probability of edge " + std::to_string(e) +
                             " is outside (0, 1]");
      }
    }
    for (VertexId v = 0; v < graph_->vertex_count(); ++v) {
      Scalar total(0);
      for (EdgeId e : graph_->out_edges(v)) total += prob_[e];
      if (!(std::abs(static_cast<double>(total - Scalar(1))) <= tol::stochastic_row)) {
        throw ParameterError("out-probabilities of vertex " + std::to_string(v) + " sum to " +
                             std::to_string(static_cast<double>(total)));
      }
    }
  }

  [[nodiscard]] const DirectedGraph& graph() const { return *graph_; }
  [[nodiscard]] const GraphPtr& graph_ptr() const { return graph_; }
  [[nodiscard]] const Vector& prob() const { return prob_; }
  [[nodiscard]] Scalar prob(EdgeId e) const { return prob_[e]; }
  [[nodiscard]] int vertex_count() const { return graph_->vertex_count(); }

  /// Dense kernel P(x, y); parallel edges are summed.
  [[nodiscard]] Matrix transition_matrix() const {
    const int n = graph_->vertex_count();
    Matrix p = Matrix::Zero(n, n);
    for (EdgeId e = 0; e < graph_->edge_count(); ++e) {
      p(graph_->edge(e).tail, graph_->edge(e).head) += prob_[e];
    }
    return p;
  }

  template <typename To>
  [[nodiscard]] BasicEnvironment<To> cast() const {
    return BasicEnvironment<To>(graph_, prob_.template cast<To>());
  }

 private:
  GraphPtr graph_;
  Vector prob_;
};

using Environment = BasicEnvironment<double>;

/// omega(e) = w(e) / sum of w over the out-edges of tail(e).
template <typename Scalar>
BasicEnvironment<Scalar> environment_from_weights(GraphPtr graph, const VectorX<Scalar>& w) {
  if (!graph) throw StructuralError("environment needs a graph");
  if (w.size() != graph->edge_count()) throw StructuralError("weight vector length mismatch");
  VectorX<Scalar> prob(w.size());
  for (VertexId v = 0; v < graph->vertex_count(); ++v) {
    Scalar total(0);
    for (EdgeId e : graph->out_edges(v)) {
      if (!(w[e] > Scalar(0))) throw ParameterError("edge weights must be positive");
      total += w[e];
    }
    if (graph->out_edges(v).empty()) {
      throw StructuralError("vertex " + std::to_string(v) + " has no out-edges");
    }
    for (EdgeId e : graph->out_edges(v)) prob[e] = w[e] / total;
  }
  return BasicEnvironment<Scalar>(std::move(graph), std::move(prob));
}

/// Independent Dirichlet(alpha restricted to out-edges) at each vertex, drawn
/// as normalized independent gamma variables.
inline Environment sample_dirichlet_environment(GraphPtr graph, const EdgeWeights& alpha, Rng& rng) {
  if (!graph) throw StructuralError("environment needs a graph");
  alpha.validate(*graph);
  Eigen::VectorXd w(graph->edge_count());
  for (EdgeId e = 0; e < graph->edge_count(); ++e) w[e] = gamma_sample(GammaLaw{alpha.alpha[e]}, rng);
  return environment_from_weights<double>(std::move(graph), w);
}

// ---------------------------------------------------------------------------

namespace detail {

inline void require_strongly_connected(const DirectedGraph& g, const char* op) {
  if (!g.strongly_connected()) {
    throw StructuralError(std::string(op) + ": graph is not strongly connected");
  }
}

inline void require_vertex(const DirectedGraph& g, VertexId v, const char* op) {
  if (v < 0 || v >= g.vertex_count()) {
    throw ParameterError(std::string(op) + ": vertex " + std::to_string(v) + " out of range");
  }
}

template <typename Scalar>
Eigen::PartialPivLU<MatrixX<Scalar>> factorize(const MatrixX<Scalar>& a, const char* op) {
  Eigen::PartialPivLU<MatrixX<Scalar>> lu(a);
  const double rcond = static_cast<double>(lu.rcond());
  const double condition = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  if (!std::isfinite(condition)) {
    throw NumericalError(std::string(op) + ": singular system", condition);
  }
  if (condition > tol::condition_warn) {
    warn(std::string(op) + ": condition number estimate " + std::to_string(condition));
  }
  return lu;
}

template <typename Scalar>
double condition_of(const Eigen::PartialPivLU<MatrixX<Scalar>>& lu) {
  const double rcond = static_cast<double>(lu.rcond());
  return rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
}

}  // namespace detail

template <typename Scalar>
struct BasicInvariantMeasure {
  VectorX<Scalar> pi;   // mass one
  double residual = 0;  // ||pi P - pi||_inf
  double condition = 0;
};

using InvariantMeasure = BasicInvariantMeasure<double>;

/// Unique invariant probability of the chain. Solves (P^T - I) pi = 0 with the
/// last row replaced by sum(pi) = 1. Throws StructuralError if the graph is
/// not strongly connected and NumericalError if the residual exceeds
/// tol::residual_abs.
template <typename Scalar>
BasicInvariantMeasure<Scalar> invariant_measure(const BasicEnvironment<Scalar>& env) {
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;
  detail::require_strongly_connected(env.graph(), "invariant_measure");
  const int n = env.vertex_count();
  const Matrix p = env.transition_matrix();
  Matrix a = p.transpose() - Matrix::Identity(n, n);
  a.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs[n - 1] = Scalar(1);
  const auto lu = detail::factorize<Scalar>(a, "invariant_measure");
  BasicInvariantMeasure<Scalar> out;
  out.pi = lu.solve(rhs);
  out.condition = detail::condition_of(lu);
  out.residual = static_cast<double>((p.transpose() * out.pi - out.pi).cwiseAbs().maxCoeff());
  if (!(out.residual < tol::residual_abs) || !(out.pi.minCoeff() > Scalar(0))) {
    throw NumericalError("invariant_measure: residual " + std::to_string(out.residual) +
                             " or a non-positive entry",
                         out.condition);
  }
  return out;
}

/// P_x(H_y < H_x^+), by one solve of the chain absorbed at {x, y}.
/// Throws ParameterError if x == y or a vertex is out of range.
template <typename Scalar>
Scalar hitting_prob(const BasicEnvironment<Scalar>& env, VertexId x, VertexId y) {
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;
  const auto& g = env.graph();
  detail::require_vertex(g, x, "hitting_prob");
  detail::require_vertex(g, y, "hitting_prob");
  if (x == y) throw ParameterError("hitting_prob: x and y must differ");
  detail::require_strongly_connected(g, "hitting_prob");

  const int n = g.vertex_count();
  // Unknowns h(v) = P_v(H_y < H_x) on the remaining vertices.
  std::vector<int> index(static_cast<std::size_t>(n), -1);
  int m = 0;
  for (VertexId v = 0; v < n; ++v) {
    if (v != x && v != y) index[v] = m++;
  }
  Vector h_full = Vector::Zero(n);
  h_full[y] = Scalar(1);
  if (m > 0) {
    Matrix a = Matrix::Identity(m, m);
    Vector rhs = Vector::Zero(m);
    for (EdgeId e = 0; e < g.edge_count(); ++e) {
      const int r = index[g.edge(e).tail];
      if (r < 0) continue;
      const VertexId w = g.edge(e).head;
      if (w == y) rhs[r] += env.prob(e);
      else if (w != x) a(r, index[w]) -= env.prob(e);
    }
    const Vector h = detail::factorize<Scalar>(a, "hitting_prob").solve(rhs);
    for (VertexId v = 0; v < n; ++v) {
      if (index[v] >= 0) h_full[v] = h[index[v]];
    }
  }
  Scalar p(0);
  for (EdgeId e : g.out_edges(x)) p += env.prob(e) * h_full[g.edge(e).head];
  return p;
}

template <typename Scalar>
struct BasicPassageSplit {
  Scalar to_target;     // P_x(H_y < H_x^+)
  Scalar return_first;  // P_x(H_x^+ < H_y)
};

/// Both first-passage events out of x, each from its own right-hand side of
/// one solve on the chain absorbed at {x, y}. The two sum to one.
template <typename Scalar>
BasicPassageSplit<Scalar> passage_split(const BasicEnvironment<Scalar>& env, VertexId x, VertexId y) {
  using Matrix = MatrixX<Scalar>;
  const auto& g = env.graph();
  detail::require_vertex(g, x, "passage_split");
  detail::require_vertex(g, y, "passage_split");
  if (x == y) throw ParameterError("passage_split: x and y must differ");
  detail::require_strongly_connected(g, "passage_split");

  const int n = g.vertex_count();
  std::vector<int> index(static_cast<std::size_t>(n), -1);
  int m = 0;
  for (VertexId v = 0; v < n; ++v) {
    if (v != x && v != y) index[v] = m++;
  }
  // Columns: absorbed at y, absorbed at x.
  Matrix h_full = Matrix::Zero(n, 2);
  h_full(y, 0) = Scalar(1);
  h_full(x, 1) = Scalar(1);
  if (m > 0) {
    Matrix a = Matrix::Identity(m, m);
    Matrix rhs = Matrix::Zero(m, 2);
    for (EdgeId e = 0; e < g.edge_count(); ++e) {
      const int r = index[g.edge(e).tail];
      if (r < 0) continue;
      const VertexId w = g.edge(e).head;
      if (w == y) rhs(r, 0) += env.prob(e);
      else if (w == x) rhs(r, 1) += env.prob(e);
      else a(r, index[w]) -= env.prob(e);
    }
    const Matrix h = detail::factorize<Scalar>(a, "passage_split").solve(rhs);
    for (VertexId v = 0; v < n; ++v) {
      if (index[v] >= 0) h_full.row(v) = h.row(index[v]);
    }
  }
  BasicPassageSplit<Scalar> out{Scalar(0), Scalar(0)};
  for (EdgeId e : g.out_edges(x)) {
    const VertexId w = g.edge(e).head;
    if (w == x) {
      out.return_first += env.prob(e);
    } else {
      out.to_target += env.prob(e) * h_full(w, 0);
      out.return_first += env.prob(e) * h_full(w, 1);
    }
  }
  return out;
}

template <typename Scalar>
struct BasicEscapePair {
  Scalar forward;   // P_x(H_y < H_x^+)
  Scalar backward;  // P_y(H_x < H_y^+)
};

using EscapePair = BasicEscapePair<double>;

/// Escape probabilities between x and each target, from one factorization of
/// the chain killed at x. With G the Green function killed at x,
/// P_y(H_x < H_y^+) = 1 / G(y, y) and P_x(H_y < H_x^+) = sum_z P(x, z) G(z, y) / G(y, y).
template <typename Scalar>
std::vector<BasicEscapePair<Scalar>> escape_probabilities(const BasicEnvironment<Scalar>& env,
                                                          VertexId x,
                                                          std::span<const VertexId> targets) {
  using Matrix = MatrixX<Scalar>;
  const auto& g = env.graph();
  detail::require_vertex(g, x, "escape_probabilities");
  for (VertexId y : targets) {
    detail::require_vertex(g, y, "escape_probabilities");
    if (y == x) throw ParameterError("escape_probabilities: target equals the base vertex");
  }
  detail::require_strongly_connected(g, "escape_probabilities");

  const int n = g.vertex_count();
  auto idx = [x](VertexId v) { return v < x ? v : v - 1; };
  Matrix a = Matrix::Identity(n - 1, n - 1);
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    const VertexId t = g.edge(e).tail, h = g.edge(e).head;
    if (t != x && h != x) a(idx(t), idx(h)) -= env.prob(e);
  }
  Matrix rhs = Matrix::Zero(n - 1, static_cast<Eigen::Index>(targets.size()));
  for (std::size_t k = 0; k < targets.size(); ++k) rhs(idx(targets[k]), k) = Scalar(1);
  const Matrix cols = detail::factorize<Scalar>(a, "escape_probabilities").solve(rhs);

  std::vector<BasicEscapePair<Scalar>> out;
  out.reserve(targets.size());
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const Scalar gyy = cols(idx(targets[k]), k);
    Scalar visits(0);
    for (EdgeId e : g.out_edges(x)) {
      const VertexId h = g.edge(e).head;
      if (h != x) visits += env.prob(e) * cols(idx(h), k);
    }
    out.push_back({visits / gyy, Scalar(1) / gyy});
  }
  return out;
}

/// (I - P restricted to subset)^{-1}, rows and columns in subset order: the
/// expected number of visits to j from i before leaving the subset. Throws
/// StructuralError if some vertex of the subset cannot leave it.
template <typename Scalar>
MatrixX<Scalar> green_matrix(const BasicEnvironment<Scalar>& env, std::span<const VertexId> subset) {
  using Matrix = MatrixX<Scalar>;
  const auto& g = env.graph();
  const int n = g.vertex_count();
  std::vector<int> index(static_cast<std::size_t>(n), -1);
  for (std::size_t k = 0; k < subset.size(); ++k) {
    detail::require_vertex(g, subset[k], "green_matrix");
    if (index[subset[k]] >= 0) throw ParameterError("green_matrix: repeated vertex in subset");
    index[subset[k]] = static_cast<int>(k);
  }
  const auto m = static_cast<Eigen::Index>(subset.size());
  if (m == 0) return Matrix(0, 0);

  // Every subset vertex must reach the complement, otherwise the killed
  // kernel has spectral radius one.
  std::vector<bool> escapes(static_cast<std::size_t>(n), false);
  std::vector<VertexId> frontier;
  for (VertexId v = 0; v < n; ++v) {
    if (index[v] < 0) {
      escapes[v] = true;
      frontier.push_back(v);
    }
  }
  while (!frontier.empty()) {
    const VertexId v = frontier.back();
    frontier.pop_back();
    for (EdgeId e : g.in_edges(v)) {
      const VertexId u = g.edge(e).tail;
      if (!escapes[u]) {
        escapes[u] = true;
        frontier.push_back(u);
      }
    }
  }
  for (VertexId v : subset) {
    if (!escapes[v]) {
      throw StructuralError("green_matrix: vertex " + std::to_string(v) +
                            " cannot leave the subset");
    }
  }

  Matrix a = Matrix::Identity(m, m);
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    const int r = index[g.edge(e).tail], c = index[g.edge(e).head];
    if (r >= 0 && c >= 0) a(r, c) -= env.prob(e);
  }
  return detail::factorize<Scalar>(a, "green_matrix").solve(Matrix::Identity(m, m));
}

/// P restricted to subset, in subset order.
template <typename Scalar>
MatrixX<Scalar> restricted_kernel(const BasicEnvironment<Scalar>& env,
                                  std::span<const VertexId> subset) {
  const auto& g = env.graph();
  std::vector<int> index(static_cast<std::size_t>(g.vertex_count()), -1);
  for (std::size_t k = 0; k < subset.size(); ++k) index[subset[k]] = static_cast<int>(k);
  const auto m = static_cast<Eigen::Index>(subset.size());
  MatrixX<Scalar> p = MatrixX<Scalar>::Zero(m, m);
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    const int r = index[g.edge(e).tail], c = index[g.edge(e).head];
    if (r >= 0 && c >= 0) p(r, c) += env.prob(e);
  }
  return p;
}

/// Time reversal on the reversed graph: edge e = (x, y) becomes (y, x) with
/// probability pi(x) omega(x, y) / pi(y). `reversed_graph` must be
/// reverse(env.graph()); pass it to avoid rebuilding the graph on each call.
template <typename Scalar>
BasicEnvironment<Scalar> reversed_environment(const BasicEnvironment<Scalar>& env,
                                              GraphPtr reversed_graph) {
  const auto& g = env.graph();
  if (!reversed_graph || reversed_graph->vertex_count() != g.vertex_count() ||
      reversed_graph->edge_count() != g.edge_count()) {
    throw StructuralError("reversed_environment: graph is not the reverse of the environment's");
  }
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    if (reversed_graph->edge(e).tail != g.edge(e).head ||
        reversed_graph->edge(e).head != g.edge(e).tail) {
      throw StructuralError("reversed_environment: edge " + std::to_string(e) + " is not reversed");
    }
  }
  const auto pi = invariant_measure(env).pi;
  VectorX<Scalar> prob(g.edge_count());
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    prob[e] = pi[g.edge(e).tail] * env.prob(e) / pi[g.edge(e).head];
  }
  // Renormalize away rounding so the row-sum invariant holds exactly.
  for (VertexId v = 0; v < g.vertex_count(); ++v) {
    Scalar total(0);
    for (EdgeId e : reversed_graph->out_edges(v)) total += prob[e];
    for (EdgeId e : reversed_graph->out_edges(v)) prob[e] /= total;
  }
  return BasicEnvironment<Scalar>(std::move(reversed_graph), std::move(prob));
}

template <typename Scalar>
BasicEnvironment<Scalar> reversed_environment(const BasicEnvironment<Scalar>& env) {
  return reversed_environment(env, std::make_shared<const DirectedGraph>(reverse(env.graph())));
}

/// Birth-death chain on {a, ..., b} with odds rho(i) = omega(i, i-1) / omega(i, i+1),
/// rho[i - 1] holding rho(i). Returns P_x(H_b < H_a):
///   sum_{k=a}^{x-1} prod_{i=a+1}^{k} rho(i)  /  sum_{k=a}^{b-1} prod_{i=a+1}^{k} rho(i).
/// Throws ParameterError unless 0 <= a <= x <= b, a < b and rho covers 1..b-1.
template <typename Scalar>
Scalar gambler_ruin(std::span<const Scalar> rho, int a, int x, int b) {
  if (a < 0 || a >= b || x < a || x > b) {
    throw ParameterError("gambler_ruin: need 0 <= a <= x <= b and a < b");
  }
  if (static_cast<int>(rho.size()) < b - 1) {
    throw ParameterError("gambler_ruin: rho must cover indices 1.." + std::to_string(b - 1));
  }
  for (int i = a + 1; i < b; ++i) {
    if (!(rho[i - 1] > Scalar(0))) throw ParameterError("gambler_ruin: rho must be positive");
  }
  // log partial products, summed with a common shift
  std::vector<Scalar> logs(static_cast<std::size_t>(b - a));
  Scalar acc(0);
  for (int k = a; k < b; ++k) {
    if (k > a) acc += std::log(rho[k - 1]);
    logs[k - a] = acc;
  }
  const Scalar shift = *std::max_element(logs.begin(), logs.end());
  Scalar num(0), den(0);
  for (int k = a; k < b; ++k) {
    const Scalar term = std::exp(logs[k - a] - shift);
    den += term;
    if (k < x) num += term;
  }
  return num / den;
}

/// Product of transition probabilities along a path of edge ids.
template <typename Scalar>
Scalar path_weight(const BasicEnvironment<Scalar>& env, std::span<const EdgeId> path) {
  Scalar w(1);
  for (EdgeId e : path) {
    if (e < 0 || e >= env.graph().edge_count()) throw ParameterError("path_weight: bad edge id");
    w *= env.prob(e);
  }
  return w;
}

/// Single steps of the quenched walk. Keeps the cumulative out-probabilities
/// of each vertex; a step is one uniform and a scan of the out-edges.
class WalkStepper {
 public:
  explicit WalkStepper(const Environment& env) : graph_(env.graph_ptr()) {
    const auto& g = *graph_;
    cumulative_.resize(static_cast<std::size_t>(g.edge_count()));
    for (VertexId v = 0; v < g.vertex_count(); ++v) {
      double acc = 0.0;
      for (EdgeId e : g.out_edges(v)) {
        acc += env.prob(e);
        cumulative_[e] = acc;
      }
    }
  }

  /// Edge taken from v.
  EdgeId step_edge(VertexId v, Rng& rng) const {
    const auto out = graph_->out_edges(v);
    const double u = rng.uniform() * cumulative_[out.back()];
    for (EdgeId e : out) {
      if (u < cumulative_[e]) return e;
    }
    return out.back();
  }

  VertexId step(VertexId v, Rng& rng) const { return graph_->edge(step_edge(v, rng)).head; }

 private:
  GraphPtr graph_;
  std::vector<double> cumulative_;
};

}  // namespace walklab

#endif  // WALKLAB_MARKOV_HPP
