#include "walklab/identity.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>

#include "walklab/errors.hpp"
#include "walklab/tolerances.hpp"

namespace walklab {

void GammaField::validate(const DirectedGraph& g) const {
  if (w.size() != g.edge_count()) {
    throw StructuralError("gamma field has " + std::to_string(w.size()) + " entries for " +
                          std::to_string(g.edge_count()) + " edges");
  }
  for (Eigen::Index e = 0; e < w.size(); ++e) {
    if (!(w[e] > 0.0) || !std::isfinite(w[e])) {
      throw ParameterError("gamma field entry " + std::to_string(e) + " must be positive");
    }
  }
}

IdentitySample IdentitySample::from_hitting(double h_plus, double h_minus) {
  IdentitySample s;
  s.h_plus = h_plus;
  s.h_minus = h_minus;
  s.gamma_stat = std::sqrt(h_plus) * std::sqrt(h_minus);
  s.s_stat = 0.5 * (std::log(h_plus) - std::log(h_minus));
  return s;
}

GammaField sample_gamma_field(const DirectedGraph& g, const EdgeWeights& alpha, Rng& rng) {
  alpha.validate(g);
  GammaField f{Eigen::VectorXd(g.edge_count())};
  for (EdgeId e = 0; e < g.edge_count(); ++e) f.w[e] = gamma_sample(GammaLaw{alpha.alpha[e]}, rng);
  return f;
}

double extract_gamma(const DirectedGraph& g, const EdgeWeights& alpha, VertexId i0, VertexId j0) {
  alpha.validate(g);
  if (i0 < 0 || i0 >= g.vertex_count() || j0 < 0 || j0 >= g.vertex_count()) {
    throw ParameterError("marked vertices out of range");
  }
  if (i0 == j0) throw ParameterError("marked vertices must differ");
  const DivergenceMap div = divergence(g, alpha.alpha);
  const double gamma = div[i0];
  std::ostringstream bad;
  bad.precision(12);
  bool failed = false;
  for (VertexId v = 0; v < g.vertex_count(); ++v) {
    const double expect = v == i0 ? gamma : (v == j0 ? -gamma : 0.0);
    if (std::abs(div[v] - expect) > tol::divergence) {
      bad << (failed ? ", " : "") << "vertex " << v << " (divergence " << div[v] << ", expected "
          << expect << ")";
      failed = true;
    }
  }
  if (failed) {
    throw PreconditionError("divergence condition violated with gamma = " + std::to_string(gamma) +
                            " read at vertex " + std::to_string(i0) + ": " + bad.str());
  }
  if (gamma < -tol::divergence) {
    throw PreconditionError("divergence at vertex " + std::to_string(i0) + " is negative (" +
                            std::to_string(gamma) + "); swap the marked vertices");
  }
  return std::max(gamma, 0.0);
}

IdentitySampler::IdentitySampler(GraphPtr graph, EdgeWeights alpha, VertexId i0, VertexId j0)
    : graph_(std::move(graph)), alpha_(std::move(alpha)), i0_(i0), j0_(j0) {
  if (!graph_) throw StructuralError("identity sampler needs a graph");
  gamma_ = extract_gamma(*graph_, alpha_, i0_, j0_);
  if (!graph_->strongly_connected()) throw StructuralError("graph is not strongly connected");
  const Eigen::VectorXd vw = vertex_weights(*graph_, alpha_);
  weight_i0_ = vw[i0_];
  weight_j0_ = vw[j0_];
}

IdentitySample IdentitySampler::operator()(Rng& rng) const {
  const Environment env = sample_dirichlet_environment(graph_, alpha_, rng);
  const double beta_i0 = gamma_sample(GammaLaw{weight_i0_}, rng);
  const double beta_j0 = gamma_sample(GammaLaw{weight_j0_}, rng);
  const VertexId target[1] = {j0_};
  const auto esc = escape_probabilities(env, i0_, target).front();
  return IdentitySample::from_hitting(beta_i0 * esc.forward, beta_j0 * esc.backward);
}

IdentitySample sample_identity(GraphPtr graph, const EdgeWeights& alpha, VertexId i0, VertexId j0,
                               Rng& rng) {
  return IdentitySampler(std::move(graph), alpha, i0, j0)(rng);
}

// ---------------------------------------------------------------------------

namespace {

int segment_length(const GammaField& w) {
  if (w.w.size() < 2 || w.w.size() % 2 != 0) {
    throw StructuralError("segment gamma field needs 2n entries");
  }
  for (Eigen::Index e = 0; e < w.w.size(); ++e) {
    if (!(w.w[e] > 0.0)) throw ParameterError("gamma field entries must be positive");
  }
  return static_cast<int>(w.w.size() / 2);
}

}  // namespace

UField sample_u_field_segment(const GammaField& w, double gamma, Rng& rng) {
  const int n = segment_length(w);
  UField f{Eigen::VectorXd::Zero(n + 1), 0};
  for (int i = 0; i < n; ++i) {
    const double fwd = w.w[2 * i], bwd = w.w[2 * i + 1];
    const double s = gig_sample(GigLaw{gamma, 2.0 * std::sqrt(fwd * bwd)}, rng);
    f.u[i + 1] = f.u[i] + s + segment_increment_shift(fwd, bwd);
  }
  return f;
}

double log_mixing_density(const DirectedGraph& g, const GammaField& w, const Eigen::VectorXd& u,
                          double gamma, VertexId i0, VertexId j0) {
  double total = gamma * (u[j0] - u[i0]);
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    total -= w.w[e] * std::exp(u[g.edge(e).head] - u[g.edge(e).tail]);
  }
  return total;
}

GibbsCoefficients gibbs_coefficients(const DirectedGraph& g, const GammaField& w,
                                     const Eigen::VectorXd& u, double gamma, VertexId i0,
                                     VertexId j0, VertexId i) {
  GibbsCoefficients k;
  for (EdgeId e : g.in_edges(i)) {
    const VertexId t = g.edge(e).tail;
    if (t != i) k.a += w.w[e] * std::exp(-u[t]);
  }
  for (EdgeId e : g.out_edges(i)) {
    const VertexId h = g.edge(e).head;
    if (h != i) k.b += w.w[e] * std::exp(u[h]);
  }
  k.c = gamma * ((i == j0 ? 1.0 : 0.0) - (i == i0 ? 1.0 : 0.0));
  return k;
}

void gibbs_sweep(const DirectedGraph& g, const GammaField& w, double gamma, VertexId i0, VertexId j0,
                 UField& field, Rng& rng) {
  for (VertexId i = 0; i < g.vertex_count(); ++i) {
    if (i == i0) continue;
    const auto k = gibbs_coefficients(g, w, field.u, gamma, i0, j0, i);
    // u = s + log(B / A) / 2 turns the conditional into the S-law with
    // order c and coefficient 2 sqrt(A B).
    const double s = gig_sample(GigLaw{k.c, 2.0 * std::sqrt(k.a * k.b)}, rng);
    field.u[i] = s + 0.5 * (std::log(k.b) - std::log(k.a));
  }
}

UField sample_u_field_gibbs(const DirectedGraph& g, const GammaField& w, double gamma, VertexId i0,
                            VertexId j0, int sweeps, Rng& rng) {
  if (sweeps < kGibbsBurnInFloor) {
    throw ParameterError("Gibbs sampler needs at least " + std::to_string(kGibbsBurnInFloor) +
                         " sweeps, got " + std::to_string(sweeps));
  }
  w.validate(g);
  if (!g.strongly_connected()) throw StructuralError("graph is not strongly connected");
  UField field{Eigen::VectorXd::Zero(g.vertex_count()), i0};
  for (int k = 0; k < sweeps; ++k) gibbs_sweep(g, w, gamma, i0, j0, field, rng);
  return field;
}

MixedEnvironment mix_environment(GraphPtr graph, const GammaField& w, const UField& u) {
  if (!graph) throw StructuralError("mix_environment needs a graph");
  const auto& g = *graph;
  w.validate(g);
  if (u.u.size() != g.vertex_count()) throw StructuralError("U field length mismatch");
  GammaField wu{Eigen::VectorXd(g.edge_count())};
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(g.vertex_count());
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    wu.w[e] = w.w[e] * std::exp(u.u[g.edge(e).head] - u.u[g.edge(e).tail]);
    beta[g.edge(e).tail] += wu.w[e];
  }
  Environment omega = environment_from_weights<double>(std::move(graph), wu.w);
  return {std::move(wu), std::move(beta), std::move(omega)};
}

// ---------------------------------------------------------------------------

namespace {

double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace

InterpretationReport check_interpretation(GraphPtr graph, const GammaField& w, const UField& u,
                                          VertexId i0, VertexId j0) {
  if (!graph) throw StructuralError("check_interpretation needs a graph");
  const auto& g = *graph;
  w.validate(g);
  const int n = g.vertex_count();
  if (i0 < 0 || i0 >= n || j0 < 0 || j0 >= n || i0 == j0) {
    throw ParameterError("marked vertices must be distinct and in range");
  }
  if (u.u.size() != n) throw StructuralError("U field length mismatch");
  if (u.root != i0 || u.u[i0] != 0.0) throw ParameterError("U field must vanish at i0");
  if (!g.strongly_connected()) throw StructuralError("graph is not strongly connected");

  InterpretationReport rep;

  // Matrix route on V minus {i0, j0}.
  std::vector<int> index(static_cast<std::size_t>(n), -1);
  int m = 0;
  for (VertexId v = 0; v < n; ++v) {
    if (v != i0 && v != j0) index[v] = m++;
  }
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    b[g.edge(e).tail] += w.w[e] * std::exp(u.u[g.edge(e).head] - u.u[g.edge(e).tail]);
  }
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd from_i0 = Eigen::VectorXd::Zero(m), from_j0 = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd to_i0 = Eigen::VectorXd::Zero(m), to_j0 = Eigen::VectorXd::Zero(m);
  double direct_i0_j0 = 0.0, direct_j0_i0 = 0.0, loop_i0 = 0.0, loop_j0 = 0.0;
  for (VertexId v = 0; v < n; ++v) {
    if (index[v] >= 0) h(index[v], index[v]) += b[v];
  }
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    const VertexId t = g.edge(e).tail, hd = g.edge(e).head;
    const double we = w.w[e];
    const int rt = index[t], rh = index[hd];
    if (rt >= 0 && rh >= 0) h(rt, rh) -= we;
    else if (rt >= 0) (hd == i0 ? to_i0 : to_j0)[rt] += we;
    else if (rh >= 0) (t == i0 ? from_i0 : from_j0)[rh] += we;
    else if (t == i0 && hd == j0) direct_i0_j0 += we;
    else if (t == j0 && hd == i0) direct_j0_i0 += we;
    else if (t == i0) loop_i0 += we;
    else loop_j0 += we;
  }
  if (m > 0) {
    Eigen::EigenSolver<Eigen::MatrixXd> eig(h, false);
    const auto ev = eig.eigenvalues();
    rep.min_eigen_real = ev.real().minCoeff();
    if (!(rep.min_eigen_real > 0.0)) {
      rep.m_matrix = false;
      rep.spectrum.assign(ev.data(), ev.data() + ev.size());
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(h);
    const Eigen::VectorXd g_to_j0 = lu.solve(to_j0);
    const Eigen::VectorXd g_to_i0 = lu.solve(to_i0);
    if ((g_to_j0.array() < -1e-12 * g_to_j0.cwiseAbs().maxCoeff()).any()) rep.m_matrix = false;
    rep.matrix.plus = from_i0.dot(g_to_j0) + direct_i0_j0;
    rep.matrix.minus = from_j0.dot(g_to_i0) + direct_j0_i0;
    rep.matrix.plus_plus = from_i0.dot(g_to_i0) + loop_i0;
    rep.matrix.minus_minus = from_j0.dot(g_to_j0) + loop_j0;
  } else {
    rep.matrix = {direct_i0_j0, direct_j0_i0, loop_i0, loop_j0};
  }

  // Probability route through the mixed environment.
  const auto mixed = mix_environment(graph, w, u);
  const double beta_i0 = mixed.beta[i0], beta_j0 = mixed.beta[j0];
  const auto out_i0 = passage_split(mixed.omega, i0, j0);
  const auto out_j0 = passage_split(mixed.omega, j0, i0);
  const double uj = u.u[j0];
  rep.h_plus = beta_i0 * out_i0.to_target;
  rep.h_minus = beta_j0 * out_j0.to_target;
  rep.probability.plus = std::exp(-uj) * rep.h_plus;
  rep.probability.minus = std::exp(uj) * rep.h_minus;
  rep.probability.plus_plus = beta_i0 * out_i0.return_first;
  rep.probability.minus_minus = beta_j0 * out_j0.return_first;

  rep.max_rel_discrepancy = std::max({rel_diff(rep.matrix.plus, rep.probability.plus),
                                      rel_diff(rep.matrix.minus, rep.probability.minus),
                                      rel_diff(rep.matrix.plus_plus, rep.probability.plus_plus),
                                      rel_diff(rep.matrix.minus_minus, rep.probability.minus_minus)});

  rep.s_from_matrix = uj - 0.5 * std::log(rep.matrix.minus / rep.matrix.plus);
  rep.s_direct = 0.5 * std::log(rep.h_plus / rep.h_minus);

  const auto pi = invariant_measure(mixed.omega).pi;
  rep.pi_ratio_discrepancy =
      rel_diff(rep.h_plus / rep.h_minus, beta_i0 * pi[j0] / (beta_j0 * pi[i0]));

  rep.ok = rep.m_matrix && rep.max_rel_discrepancy <= tol::identity_rel &&
           std::abs(rep.s_from_matrix - rep.s_direct) <=
               tol::identity_rel * std::max(1.0, std::abs(rep.s_direct)) &&
           rep.pi_ratio_discrepancy <= tol::identity_rel;
  return rep;
}

// ---------------------------------------------------------------------------

GammaField sample_segment_gamma_field(int n, double forward, double backward, Rng& rng) {
  if (n < 1) throw ParameterError("segment length must be at least 1");
  if (!(forward > 0.0) || !(backward > 0.0)) throw ParameterError("segment weights must be positive");
  GammaField f{Eigen::VectorXd(2 * n)};
  for (int i = 0; i < n; ++i) {
    f.w[2 * i] = gamma_sample(GammaLaw{forward}, rng);
    f.w[2 * i + 1] = gamma_sample(GammaLaw{backward}, rng);
  }
  return f;
}

std::vector<ChainPoint> my_chain(const GammaField& w) {
  const int n = segment_length(w);
  auto fwd = [&](int i) { return w.w[2 * i]; };      // W(i, i+1)
  auto bwd = [&](int i) { return w.w[2 * i + 1]; };  // W(i+1, i)
  const double log_w01 = std::log(fwd(0));
  std::vector<ChainPoint> out;
  out.reserve(static_cast<std::size_t>(n));
  double log_prod = 0.0;  // sum_{i<k} log rho(i)
  double lse = 0.0;       // log sum_{m<k} prod_{i<=m} rho(i); m = 0 term is 1
  for (int k = 1; k <= n; ++k) {
    if (k > 1) {
      // rho(k-1) = W(k-1, k-2) / W(k-1, k)
      log_prod += std::log(bwd(k - 2)) - std::log(fwd(k - 1));
      const double hi = std::max(lse, log_prod);
      lse = hi + std::log(std::exp(lse - hi) + std::exp(log_prod - hi));
    }
    const double log_wk = std::log(bwd(k - 1));  // W(k, k-1)
    ChainPoint p;
    p.log_gamma = 0.5 * (log_w01 + log_wk + log_prod) - lse;
    p.gamma = std::exp(p.log_gamma);
    p.s = 0.5 * (log_w01 - log_wk - log_prod);
    out.push_back(p);
  }
  return out;
}

std::vector<ChainPoint> my_chain_recursive(const GammaField& w) {
  const int n = segment_length(w);
  auto fwd = [&](int i) { return w.w[2 * i]; };
  auto bwd = [&](int i) { return w.w[2 * i + 1]; };
  std::vector<ChainPoint> out;
  out.reserve(static_cast<std::size_t>(n));
  double gamma = std::sqrt(fwd(0) * bwd(0));
  double x = bwd(0);
  out.push_back({gamma, std::log(gamma / x), std::log(gamma)});
  for (int k = 1; k < n; ++k) {
    const double denom = fwd(k) + x;
    gamma = gamma * std::sqrt(fwd(k) * bwd(k)) / denom;
    x = bwd(k) * x / denom;
    out.push_back({gamma, std::log(gamma / x), std::log(gamma)});
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Edge ids of a shortest directed path from `from` to `to`.
std::vector<EdgeId> shortest_path(const DirectedGraph& g, VertexId from, VertexId to) {
  std::vector<EdgeId> via(static_cast<std::size_t>(g.vertex_count()), -1);
  std::vector<bool> seen(static_cast<std::size_t>(g.vertex_count()), false);
  std::queue<VertexId> q;
  q.push(from);
  seen[from] = true;
  while (!q.empty() && !seen[to]) {
    const VertexId v = q.front();
    q.pop();
    for (EdgeId e : g.out_edges(v)) {
      const VertexId h = g.edge(e).head;
      if (!seen[h]) {
        seen[h] = true;
        via[h] = e;
        q.push(h);
      }
    }
  }
  if (!seen[to]) throw StructuralError("graph is not strongly connected");
  std::vector<EdgeId> path;
  for (VertexId v = to; v != from; v = g.edge(via[v]).tail) path.push_back(via[v]);
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace

EdgeWeights random_divergence_weights(const DirectedGraph& g, VertexId i0, VertexId j0, double gamma,
                                      Rng& rng) {
  if (i0 == j0) throw ParameterError("marked vertices must differ");
  if (!(gamma >= 0.0)) throw ParameterError("gamma must be non-negative");
  Eigen::VectorXd a = Eigen::VectorXd::Zero(g.edge_count());
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    const double flow = 0.5 + rng.uniform();
    a[e] += flow;
    if (g.edge(e).head == g.edge(e).tail) continue;
    for (EdgeId f : shortest_path(g, g.edge(e).head, g.edge(e).tail)) a[f] += flow;
  }
  if (gamma > 0.0) {
    for (EdgeId f : shortest_path(g, i0, j0)) a[f] += gamma;
  }
  return EdgeWeights{a};
}

}  // namespace walklab
