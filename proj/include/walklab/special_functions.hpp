#ifndef WALKLAB_SPECIAL_FUNCTIONS_HPP
#define WALKLAB_SPECIAL_FUNCTIONS_HPP

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "walklab/random.hpp"

namespace walklab {

// ---------------------------------------------------------------------------
// Modified Bessel function of the second kind, real order.
//
// Evaluated from K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt with the
// integrand rescaled by its peak value, so the logarithm is available even
// where K itself overflows.
// ---------------------------------------------------------------------------

/// log K_order(x). Throws std::domain_error for x <= 0 or non-finite input.
double log_bessel_k(double order, double x);

/// K_order(x). Throws std::range_error when the value overflows a double.
double bessel_k(double order, double x);

// ---------------------------------------------------------------------------
// Law of S = log X where X is generalized inverse Gaussian with parameters
// (lambda, chi, psi) = (order, coef, coef), i.e. density of X proportional to
// x^(order-1) exp(-coef (x + 1/x) / 2). The density of S is
//
//     exp(order * s - coef * cosh(s)) / (2 K_order(coef)).
//
// With Gamma = sqrt(H+ H-) and S = log sqrt(H+/H-) the conditional law of S
// given Gamma is GigLaw{gamma, 2 Gamma}.
// ---------------------------------------------------------------------------
struct GigLaw {
  double order = 0.0;
  double coef = 1.0;

  /// Throws std::domain_error unless coef > 0 and both fields are finite.
  void validate() const;

  /// Conventional three-parameter form (lambda, chi, psi) of e^S.
  [[nodiscard]] double lambda() const { return order; }
  [[nodiscard]] double chi() const { return coef; }
  [[nodiscard]] double psi() const { return coef; }

  /// Mode of the S-density, solving order = coef * sinh(s).
  [[nodiscard]] double mode() const;
  /// log(2 K_order(coef)).
  [[nodiscard]] double log_normalizer() const;
};

double gig_logpdf_s(const GigLaw& law, double s);

/// P(S <= s) by quadrature of the density.
double gig_cdf_s(const GigLaw& law, double s);

/// CDF at each point of an ascending sequence, integrating once across the
/// whole range. Throws std::invalid_argument if `sorted` is not ascending.
std::vector<double> gig_cdf_s_sorted(const GigLaw& law, std::span<const double> sorted);

/// E[e^S] = K_{order+1}(coef) / K_order(coef).
double gig_mean_exp_s(const GigLaw& law);

/// Ratio-of-uniforms sampler for S, mode-shifted with the minimal bounding
/// rectangle. The S-density is log-concave so the acceptance probability is
/// bounded away from zero uniformly in the parameters.
class GigSampler {
 public:
  explicit GigSampler(const GigLaw& law);

  double operator()(Rng& rng);

  [[nodiscard]] const GigLaw& law() const { return law_; }
  /// Acceptance probability implied by the envelope, from the exact area.
  [[nodiscard]] double expected_acceptance() const;
  [[nodiscard]] std::size_t proposals() const { return proposals_; }
  [[nodiscard]] std::size_t accepted() const { return accepted_; }

 private:
  double log_shape(double t) const;

  GigLaw law_;
  double sign_ = 1.0;     // sampling is done for |order| and the result flipped
  double order_ = 0.0;    // |order|
  double mode_ = 0.0;
  double curvature_ = 0.0;  // sqrt(coef^2 + order^2)
  double u_minus_ = 0.0;
  double u_plus_ = 0.0;
  std::size_t proposals_ = 0;
  std::size_t accepted_ = 0;
};

/// One draw of S from `law`.
double gig_sample(const GigLaw& law, Rng& rng);

// ---------------------------------------------------------------------------
// Gamma and Dirichlet.
// ---------------------------------------------------------------------------
struct GammaLaw {
  double shape = 1.0;  // rate is fixed to one
};

/// Marsaglia-Tsang; shapes below one use the U^(1/a) boost.
/// Throws std::domain_error for non-positive shape.
double gamma_sample(const GammaLaw& law, Rng& rng);

/// Normalized independent gamma draws. Throws std::domain_error for a
/// non-positive shape or an empty shape list.
Eigen::VectorXd dirichlet_sample(std::span<const double> shapes, Rng& rng);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double gamma_q(double a, double x);

inline double gamma_cdf(double shape, double x) { return x <= 0.0 ? 0.0 : gamma_p(shape, x); }

/// Survival function of the chi-square distribution.
inline double chi_square_sf(double x, double dof) {
  return x <= 0.0 ? 1.0 : gamma_q(0.5 * dof, 0.5 * x);
}

double normal_cdf(double x);

}  // namespace walklab

#endif  // WALKLAB_SPECIAL_FUNCTIONS_HPP
