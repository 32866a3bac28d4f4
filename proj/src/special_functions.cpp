#include "walklab/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "quadrature.hpp"

namespace walklab {

namespace {

// Integrands are cut where they fall this many e-folds below their peak.
constexpr double kTailLogDrop = 60.0;

// Peak-relative log integrand of the shifted S-density (and of the Bessel
// integral): with sinh(mode) = order / coef and a = sqrt(coef^2 + order^2),
// order*(mode+t) - coef*cosh(mode+t) - [order*mode - coef*cosh(mode)]
//   = order*(t - sinh t) - a*(cosh t - 1)
//   = order*t + a - m e^-t / 2 - p e^t / 2,   p = a + order, m = a - order.
// The first form is used near zero, the second in the tails; p and m are
// formed without cancellation using p * m = coef^2.
struct Shape {
  double order, a, p, m;

  Shape(double order_, double coef) : order(order_), a(std::hypot(coef, order_)) {
    if (order >= 0.0) {
      p = a + order;
      m = coef * coef / p;
    } else {
      m = a - order;
      p = coef * coef / m;
    }
  }

  double operator()(double t) const {
    if (std::abs(t) >= 1.0) return order * t + a - 0.5 * (m * std::exp(-t) + p * std::exp(t));
    const double sh = std::sinh(0.5 * t);
    return order * t_minus_sinh(t) - 2.0 * a * sh * sh;
  }

  double slope(double t) const { return order + 0.5 * (m * std::exp(-t) - p * std::exp(t)); }
  double curvature(double t) const { return -0.5 * (m * std::exp(-t) + p * std::exp(t)); }

 private:
  // t - sinh(t) without cancellation.
  static double t_minus_sinh(double t) {
    const double t2 = t * t;
    double term = -t * t2 / 6.0;
    double sum = term;
    for (int k = 4; k < 40; k += 2) {
      term *= t2 / (k * (k + 1));
      sum += term;
      if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return sum;
  }
};

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::domain_error(std::string(what) + " must be finite");
}

// Integral of exp(shape) over [lo, hi], split at zero.
double shifted_integral(const Shape& shape, double lo, double hi, double abs_tol, int panels) {
  auto f = [&](double t) { return std::exp(shape(t)); };
  if (lo < 0.0 && hi > 0.0) {
    return detail::adaptive_simpson(f, lo, 0.0, 0.5 * abs_tol, panels) +
           detail::adaptive_simpson(f, 0.0, hi, 0.5 * abs_tol, panels);
  }
  return detail::adaptive_simpson(f, lo, hi, abs_tol, panels);
}

struct ShiftedRange {
  double lo;
  double hi;
};

ShiftedRange shifted_range(const Shape& shape) {
  const double scale = 1.0 / std::sqrt(shape.a);
  const double hi = detail::first_crossing(
      [&](double t) { return shape(t) < -kTailLogDrop; }, 0.0, scale);
  const double lo = -detail::first_crossing(
      [&](double t) { return shape(-t) < -kTailLogDrop; }, 0.0, scale);
  return {lo, hi};
}

}  // namespace

// ---------------------------------------------------------------------------
// Bessel K
// ---------------------------------------------------------------------------

double log_bessel_k(double order, double x) {
  require_finite(order, "Bessel order");
  require_finite(x, "Bessel argument");
  if (!(x > 0.0)) throw std::domain_error("bessel_k: argument must be positive");

  const double nu = std::abs(order);
  const Shape shape(nu, x);
  const double a = shape.a;
  const double peak_t = nu > 0.0 ? std::asinh(nu / x) : 0.0;
  const double peak_log = -a + nu * peak_t;

  // K = exp(peak_log) * int_0^inf exp(shape(t - peak_t)) (1 + exp(-2 nu t)) / 2 dt
  auto f = [&](double t) {
    const double fold = 0.5 * (1.0 + std::exp(-2.0 * nu * t));
    return std::exp(shape(t - peak_t)) * fold;
  };
  const double scale = 1.0 / std::sqrt(a);
  const double hi = peak_t + detail::first_crossing(
                                 [&](double t) { return shape(t) < -kTailLogDrop; },
                                 0.0, scale);

  auto integrate = [&](double tol) {
    double s = detail::adaptive_simpson(f, peak_t, hi, 0.5 * tol);
    if (peak_t > 0.0) s += detail::adaptive_simpson(f, 0.0, peak_t, 0.5 * tol);
    return s;
  };
  const double rough = integrate(1e-6 * scale);
  const double value = integrate(1e-15 * rough);
  return peak_log + std::log(value);
}

double bessel_k(double order, double x) {
  const double lk = log_bessel_k(order, x);
  if (lk > std::log(std::numeric_limits<double>::max())) {
    throw std::range_error("bessel_k: value overflows double (order " + std::to_string(order) +
                           ", x " + std::to_string(x) + "); use log_bessel_k");
  }
  return std::exp(lk);
}

// ---------------------------------------------------------------------------
// S-law of the generalized inverse Gaussian
// ---------------------------------------------------------------------------

void GigLaw::validate() const {
  require_finite(order, "GIG order");
  require_finite(coef, "GIG coefficient");
  if (!(coef > 0.0)) throw std::domain_error("GIG coefficient must be positive");
}

double GigLaw::mode() const { return std::asinh(order / coef); }

double GigLaw::log_normalizer() const { return std::log(2.0) + log_bessel_k(order, coef); }

double gig_logpdf_s(const GigLaw& law, double s) {
  law.validate();
  if (std::abs(s) > 700.0) return -std::numeric_limits<double>::infinity();
  return law.order * s - law.coef * std::cosh(s) - law.log_normalizer();
}

double gig_cdf_s(const GigLaw& law, double s) {
  law.validate();
  const double t = s - law.mode();
  const Shape shape(law.order, law.coef);
  const auto range = shifted_range(shape);
  if (t <= range.lo) return 0.0;
  if (t >= range.hi) return 1.0;
  // Fixed composite rule: each panel spans a few widths of the peak, where
  // 16 nodes are exact to rounding for this analytic integrand.
  constexpr int panels = 24;
  auto f = [&](double x) { return std::exp(shape(x)); };
  const double total = detail::composite_gauss_legendre(f, range.lo, range.hi, panels);
  // Integrate over the shorter side.
  if (t <= 0.0) return std::clamp(detail::composite_gauss_legendre(f, range.lo, t, panels) / total, 0.0, 1.0);
  return std::clamp(1.0 - detail::composite_gauss_legendre(f, t, range.hi, panels) / total, 0.0, 1.0);
}

std::vector<double> gig_cdf_s_sorted(const GigLaw& law, std::span<const double> sorted) {
  law.validate();
  if (!std::is_sorted(sorted.begin(), sorted.end())) {
    throw std::invalid_argument("gig_cdf_s_sorted: points must be ascending");
  }
  const double m = law.mode();
  const Shape shape(law.order, law.coef);
  const auto range = shifted_range(shape);
  const double total = shifted_integral(shape, range.lo, range.hi, 1e-15 / std::sqrt(shape.a), 16);

  std::vector<double> out;
  out.reserve(sorted.size());
  const double seg_tol = 1e-12 * total / static_cast<double>(sorted.size() + 1);
  double prev = range.lo;
  double acc = 0.0;
  for (double s : sorted) {
    const double t = std::clamp(s - m, range.lo, range.hi);
    if (t > prev) {
      acc += shifted_integral(shape, prev, t, seg_tol, 1);
      prev = t;
    }
    out.push_back(std::clamp(acc / total, 0.0, 1.0));
  }
  return out;
}

double gig_mean_exp_s(const GigLaw& law) {
  law.validate();
  return std::exp(log_bessel_k(law.order + 1.0, law.coef) - log_bessel_k(law.order, law.coef));
}

// ---------------------------------------------------------------------------
// Ratio-of-uniforms sampler
// ---------------------------------------------------------------------------

namespace {

// Root of psi(t) = 1/t + slope(t)/2 on one side of zero (side = +1 or -1).
// log|t| + shape(t)/2 is concave on each half-line, so psi is decreasing and
// the root is unique; Newton steps are kept inside a shrinking bracket.
double envelope_root(const Shape& shape, double side) {
  const double a = shape.a;
  auto psi = [&](double t) { return 1.0 / t + 0.5 * shape.slope(t); };
  auto dpsi = [&](double t) { return -1.0 / (t * t) + 0.5 * shape.curvature(t); };

  // Bracket [inner, outer] in |t|, psi(side*inner) has sign of side.
  double inner = 0.0;
  double outer = std::sqrt(2.0 / a);
  while (side * psi(side * outer) > 0.0) {
    inner = outer;
    outer *= 2.0;
  }
  double t = side * std::sqrt(2.0 / a);
  if (std::abs(t) <= inner || std::abs(t) >= outer) t = side * 0.5 * (inner + outer);
  for (int it = 0; it < 200; ++it) {
    const double value = psi(t);
    if (side * value > 0.0) inner = std::abs(t);
    else outer = std::abs(t);
    double next = t - value / dpsi(t);
    if (!(std::abs(next) > inner && std::abs(next) < outer) || side * next <= 0.0) {
      next = side * 0.5 * (inner + outer);
    }
    if (std::abs(next - t) <= 1e-14 * std::abs(t) || outer - inner <= 1e-14 * outer) return next;
    t = next;
  }
  return t;
}

}  // namespace

GigSampler::GigSampler(const GigLaw& law) : law_(law) {
  law_.validate();
  sign_ = law_.order < 0.0 ? -1.0 : 1.0;
  order_ = std::abs(law_.order);
  mode_ = std::asinh(order_ / law_.coef);
  curvature_ = std::hypot(law_.coef, order_);
  const Shape shape(order_, law_.coef);
  const double t_plus = envelope_root(shape, 1.0);
  const double t_minus = envelope_root(shape, -1.0);
  u_plus_ = t_plus * std::exp(0.5 * log_shape(t_plus));
  u_minus_ = t_minus * std::exp(0.5 * log_shape(t_minus));
}

double GigSampler::log_shape(double t) const { return Shape(order_, law_.coef)(t); }

double GigSampler::operator()(Rng& rng) {
  const double width = u_plus_ - u_minus_;
  for (;;) {
    ++proposals_;
    const double u = u_minus_ + width * rng.uniform();
    const double v = rng.uniform();
    const double t = u / v;
    if (2.0 * std::log(v) <= log_shape(t)) {
      ++accepted_;
      return sign_ * (mode_ + t);
    }
  }
}

double GigSampler::expected_acceptance() const {
  const Shape shape(order_, law_.coef);
  const auto range = shifted_range(shape);
  const double area = shifted_integral(shape, range.lo, range.hi, 1e-12, 16);
  return 0.5 * area / (u_plus_ - u_minus_);
}

double gig_sample(const GigLaw& law, Rng& rng) {
  GigSampler sampler(law);
  return sampler(rng);
}

// ---------------------------------------------------------------------------
// Gamma, Dirichlet
// ---------------------------------------------------------------------------

double gamma_sample(const GammaLaw& law, Rng& rng) {
  const double shape = law.shape;
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw std::domain_error("gamma_sample: shape must be positive and finite");
  }
  if (shape < 1.0) {
    const double g = gamma_sample(GammaLaw{shape + 1.0}, rng);
    return g * std::exp(std::log(rng.uniform()) / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

Eigen::VectorXd dirichlet_sample(std::span<const double> shapes, Rng& rng) {
  if (shapes.empty()) throw std::domain_error("dirichlet_sample: no components");
  Eigen::VectorXd out(static_cast<Eigen::Index>(shapes.size()));
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    out[static_cast<Eigen::Index>(k)] = gamma_sample(GammaLaw{shapes[k]}, rng);
  }
  out /= out.sum();
  return out;
}

// ---------------------------------------------------------------------------
// Incomplete gamma: series for x < a + 1, Lentz continued fraction otherwise.
// ---------------------------------------------------------------------------

namespace {

double gamma_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 100000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_continued_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 4e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

void check_incomplete_args(double a, double x) {
  if (!(a > 0.0) || std::isnan(x)) throw std::domain_error("incomplete gamma: need a > 0");
}

}  // namespace

double gamma_p(double a, double x) {
  check_incomplete_args(a, x);
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return x < a + 1.0 ? gamma_series(a, x) : 1.0 - gamma_continued_fraction(a, x);
}

double gamma_q(double a, double x) {
  check_incomplete_args(a, x);
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return x < a + 1.0 ? 1.0 - gamma_series(a, x) : gamma_continued_fraction(a, x);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace walklab
