#ifndef WALKLAB_SRC_QUADRATURE_HPP
#define WALKLAB_SRC_QUADRATURE_HPP

#include <array>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace walklab::detail {

/// Adaptive Simpson on [a, b] with absolute tolerance `abs_tol`. The interval
/// is first cut into `panels` pieces so narrow peaks are not skipped by the
/// initial five-point estimate.
template <typename F>
double adaptive_simpson(F&& f, double a, double b, double abs_tol, int panels = 16,
                        int max_depth = 48) {
  if (!(b > a)) return 0.0;

  struct Segment {
    double a, b, fa, fm, fb, whole;
    double tol;
    int depth;
  };

  auto simpson = [](double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  };

  std::vector<Segment> stack;
  stack.reserve(2 * max_depth + panels);
  const double h = (b - a) / panels;
  for (int k = panels - 1; k >= 0; --k) {
    const double lo = a + k * h;
    const double hi = (k == panels - 1) ? b : lo + h;
    const double m = 0.5 * (lo + hi);
    const double flo = f(lo), fm = f(m), fhi = f(hi);
    stack.push_back({lo, hi, flo, fm, fhi, simpson(lo, hi, flo, fm, fhi), abs_tol / panels, 0});
  }

  double total = 0.0;
  while (!stack.empty()) {
    const Segment s = stack.back();
    stack.pop_back();
    const double m = 0.5 * (s.a + s.b);
    const double lm = 0.5 * (s.a + m);
    const double rm = 0.5 * (m + s.b);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson(s.a, m, s.fa, flm, s.fm);
    const double right = simpson(m, s.b, s.fm, frm, s.fb);
    const double delta = left + right - s.whole;
    // Below the rounding floor further halving cannot help.
    const double floor = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(left + right);
    if (s.depth >= max_depth || std::abs(delta) <= std::max(15.0 * s.tol, floor)) {
      total += left + right + delta / 15.0;
    } else {
      stack.push_back({m, s.b, s.fm, frm, s.fb, right, 0.5 * s.tol, s.depth + 1});
      stack.push_back({s.a, m, s.fa, flm, s.fm, left, 0.5 * s.tol, s.depth + 1});
    }
  }
  return total;
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1], by Newton
/// iteration on the Legendre recurrence.
template <int N>
const std::array<std::pair<double, double>, N>& gauss_legendre_rule() {
  static const auto rule = [] {
    std::array<std::pair<double, double>, N> r{};
    for (int i = 0; i < N; ++i) {
      double x = std::cos(M_PI * (i + 0.75) / (N + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= N; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = N * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      r[i] = {x, 2.0 / ((1.0 - x * x) * dp * dp)};
    }
    return r;
  }();
  return rule;
}

/// Composite Gauss-Legendre with `panels` equal panels of 16 nodes.
template <typename F>
double composite_gauss_legendre(F&& f, double a, double b, int panels) {
  if (!(b > a)) return 0.0;
  const auto& rule = gauss_legendre_rule<16>();
  const double h = (b - a) / panels;
  double total = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double mid = a + (k + 0.5) * h;
    double sum = 0.0;
    for (const auto& [x, w] : rule) sum += w * f(mid + 0.5 * h * x);
    total += 0.5 * h * sum;
  }
  return total;
}

/// Smallest t >= start (stepping by doubling `step`) with pred(t) true, then
/// refined by bisection to `rel` relative width.
template <typename Pred>
double first_crossing(Pred&& pred, double start, double step, double rel = 1e-6) {
  double lo = start;
  double hi = start + step;
  while (!pred(hi)) {
    lo = hi;
    step *= 2.0;
    hi = start + step;
  }
  while (hi - lo > rel * (1.0 + std::abs(hi))) {
    const double mid = 0.5 * (lo + hi);
    if (pred(mid)) hi = mid;
    else lo = mid;
  }
  return hi;
}

}  // namespace walklab::detail

#endif  // WALKLAB_SRC_QUADRATURE_HPP
