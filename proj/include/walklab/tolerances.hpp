#ifndef WALKLAB_TOLERANCES_HPP
#define WALKLAB_TOLERANCES_HPP

namespace walklab::tol {

// Exact identity checks (ratio identities, two-route comparisons), relative.
inline constexpr double identity_rel = 1e-10;
// Linear residuals such as ||pi P - pi||_inf, absolute.
inline constexpr double residual_abs = 1e-12;
// Probability vectors summing to one.
inline constexpr double stochastic_row = 1e-12;
// Divergence condition on edge weights.
inline constexpr double divergence = 1e-9;
// Green matrix inverse residual.
inline constexpr double green_inverse = 1e-10;
// Condition number above which solves are reported as ill-conditioned.
inline constexpr double condition_warn = 1e12;

}  // namespace walklab::tol

#endif  // WALKLAB_TOLERANCES_HPP
