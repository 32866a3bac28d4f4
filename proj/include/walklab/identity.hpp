#ifndef WALKLAB_IDENTITY_HPP
#define WALKLAB_IDENTITY_HPP

#include <complex>
#include <vector>

#include <Eigen/Core>

#include "walklab/graph.hpp"
#include "walklab/markov.hpp"
#include "walklab/random.hpp"
#include "walklab/special_functions.hpp"

namespace walklab {

/// Independent edge variables W(e) ~ Gamma(alpha(e), 1).
struct GammaField {
  Eigen::VectorXd w;

  /// Throws StructuralError on length mismatch, ParameterError on a
  /// non-positive entry.
  void validate(const DirectedGraph& g) const;
};

/// Vertex field with u(root) = 0.
struct UField {
  Eigen::VectorXd u;
  VertexId root = 0;
};

struct IdentitySample {
  double h_plus = 0.0;
  double h_minus = 0.0;
  double gamma_stat = 0.0;  // sqrt(h_plus h_minus)
  double s_stat = 0.0;      // log sqrt(h_plus / h_minus)

  static IdentitySample from_hitting(double h_plus, double h_minus);
};

GammaField sample_gamma_field(const DirectedGraph& g, const EdgeWeights& alpha, Rng& rng);

/// gamma with Div(alpha) = gamma (delta_{i0} - delta_{j0}). Read at i0 and
/// cross-checked at j0 and every other vertex within tol::divergence. Throws
/// PreconditionError naming the offending vertices, or if gamma < 0.
double extract_gamma(const DirectedGraph& g, const EdgeWeights& alpha, VertexId i0, VertexId j0);

/// Draws omega ~ Dirichlet(alpha), beta_{i0} ~ Gamma(alpha(i0)), beta_{j0} ~
/// Gamma(alpha(j0)) independently, and returns H+ = beta_{i0} P_{i0}(H_{j0} < H_{i0}^+),
/// H- = beta_{j0} P_{j0}(H_{i0} < H_{j0}^+). The divergence gate and the
/// connectivity check run once at construction.
class IdentitySampler {
 public:
  IdentitySampler(GraphPtr graph, EdgeWeights alpha, VertexId i0, VertexId j0);

  IdentitySample operator()(Rng& rng) const;

  [[nodiscard]] double gamma() const { return gamma_; }
  [[nodiscard]] VertexId i0() const { return i0_; }
  [[nodiscard]] VertexId j0() const { return j0_; }
  [[nodiscard]] const DirectedGraph& graph() const { return *graph_; }

 private:
  GraphPtr graph_;
  EdgeWeights alpha_;
  VertexId i0_, j0_;
  double gamma_ = 0.0;
  double weight_i0_ = 0.0, weight_j0_ = 0.0;
};

IdentitySample sample_identity(GraphPtr graph, const EdgeWeights& alpha, VertexId i0, VertexId j0,
                               Rng& rng);

// ---------------------------------------------------------------------------
// Mixing field
// ---------------------------------------------------------------------------

/// Exact draw of U on the segment {0..n} (edge 2i = (i, i+1), 2i+1 = (i+1, i)),
/// root 0. The increments V_i = U_{i+1} - U_i are independent with density
/// proportional to exp(gamma v - W(i,i+1) e^v - W(i+1,i) e^-v).
UField sample_u_field_segment(const GammaField& w, double gamma, Rng& rng);

/// Shift c with V_i = s + c and s ~ GigLaw(gamma, 2 sqrt(W(i,i+1) W(i+1,i))).
inline double segment_increment_shift(double forward, double backward) {
  return 0.5 * std::log(backward / forward);
}

/// Unnormalized log density of the mixing law at u:
/// gamma (u_{j0} - u_{i0}) - sum_e W(e) exp(u_head - u_tail).
double log_mixing_density(const DirectedGraph& g, const GammaField& w, const Eigen::VectorXd& u,
                          double gamma, VertexId i0, VertexId j0);

/// Full conditional of u_i: density proportional to exp(c u - A e^u - B e^-u).
struct GibbsCoefficients {
  double a = 0.0;  // sum over in-edges (k, i), k != i, of W(k, i) e^{-u_k}
  double b = 0.0;  // sum over out-edges (i, l), l != i, of W(i, l) e^{u_l}
  double c = 0.0;  // gamma (1{i = j0} - 1{i = i0})
};

GibbsCoefficients gibbs_coefficients(const DirectedGraph& g, const GammaField& w,
                                     const Eigen::VectorXd& u, double gamma, VertexId i0,
                                     VertexId j0, VertexId i);

/// One systematic scan over every vertex except the root i0.
void gibbs_sweep(const DirectedGraph& g, const GammaField& w, double gamma, VertexId i0, VertexId j0,
                 UField& field, Rng& rng);

inline constexpr int kGibbsBurnInFloor = 100;
inline constexpr int kGibbsDefaultBurnIn = 1000;
inline constexpr int kGibbsDefaultThinning = 10;

/// Runs `sweeps` scans from u = 0 and returns the final state. Throws
/// ParameterError if sweeps < kGibbsBurnInFloor, StructuralError if the graph
/// is not strongly connected.
UField sample_u_field_gibbs(const DirectedGraph& g, const GammaField& w, double gamma, VertexId i0,
                            VertexId j0, int sweeps, Rng& rng);

struct MixedEnvironment {
  GammaField w_u;        // W(i, j) e^{U_j - U_i}
  Eigen::VectorXd beta;  // out-sums of w_u
  Environment omega;     // w_u / beta
};

MixedEnvironment mix_environment(GraphPtr graph, const GammaField& w, const UField& u);

// ---------------------------------------------------------------------------
// Two routes to the reduced weights
// ---------------------------------------------------------------------------

struct ReducedWeights {
  double plus = 0.0;         // W-check_+
  double minus = 0.0;        // W-check_-
  double plus_plus = 0.0;    // W-check_{++}
  double minus_minus = 0.0;  // W-check_{--}
};

struct InterpretationReport {
  ReducedWeights matrix;       // through the Green function of H_b = B - W on V minus {i0, j0}
  ReducedWeights probability;  // through hitting probabilities of omega^U
  double max_rel_discrepancy = 0.0;
  double h_plus = 0.0;   // beta_{i0} P_{i0}(H_{j0} < H_{i0}^+) in omega^U
  double h_minus = 0.0;  // beta_{j0} P_{j0}(H_{i0} < H_{j0}^+) in omega^U
  double s_from_matrix = 0.0;  // U_{j0} - log(W-check_- / W-check_+) / 2
  double s_direct = 0.0;       // log(h_plus / h_minus) / 2
  double pi_ratio_discrepancy = 0.0;  // H+/H- against beta_{i0} pi(j0) / (beta_{j0} pi(i0))
  bool m_matrix = true;
  double min_eigen_real = 0.0;
  std::vector<std::complex<double>> spectrum;  // filled when m_matrix is false
  bool ok = false;
};

/// Throws ParameterError unless U is rooted at i0 with u(i0) = 0 and i0 != j0,
/// StructuralError if the graph is not strongly connected.
InterpretationReport check_interpretation(GraphPtr graph, const GammaField& w, const UField& u,
                                          VertexId i0, VertexId j0);

// ---------------------------------------------------------------------------
// Segment chain (Gamma_k, S_k) for the prefixes {0..k}
// ---------------------------------------------------------------------------

struct ChainPoint {
  double gamma = 0.0;
  double s = 0.0;
  double log_gamma = 0.0;  // finite where gamma underflows
};

/// W(i, i+1) ~ Gamma(forward), W(i+1, i) ~ Gamma(backward) on the segment of
/// length n, in segment edge order.
GammaField sample_segment_gamma_field(int n, double forward, double backward, Rng& rng);

/// Closed form for k = 1..n with rho(i) = W(i, i-1) / W(i, i+1):
///   Gamma_k = sqrt(W(0,1) W(k,k-1) prod_{i<k} rho(i)) / sum_{m<k} prod_{i<=m} rho(i)
///   e^{S_k} = sqrt(W(0,1) / (W(k,k-1) prod_{i<k} rho(i)))
/// evaluated in log space.
std::vector<ChainPoint> my_chain(const GammaField& w);

/// Same values by the forward recursion on X_k = Gamma_k e^{-S_k}:
///   X_1 = W(1,0),  X_{k+1} = W(k+1,k) X_k / (W(k,k+1) + X_k),
///   Gamma_{k+1} = Gamma_k sqrt(W(k,k+1) W(k+1,k)) / (W(k,k+1) + X_k).
std::vector<ChainPoint> my_chain_recursive(const GammaField& w);

// ---------------------------------------------------------------------------

/// Edge weights on a strongly connected graph with
/// Div = gamma (delta_{i0} - delta_{j0}): one random circulation through
/// every edge plus gamma along a shortest path from i0 to j0.
EdgeWeights random_divergence_weights(const DirectedGraph& g, VertexId i0, VertexId j0, double gamma,
                                      Rng& rng);

}  // namespace walklab

#endif  // WALKLAB_IDENTITY_HPP
