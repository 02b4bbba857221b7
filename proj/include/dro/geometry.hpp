#pragma once

#include "dro/dro_core.hpp"

namespace dro {

/// Euclidean projection onto the feasible set: radial scaling of w onto the
/// ball, clamping of the temperature. Idempotent and non-expansive.
Point project(Point x, const Domain& domain);

/// In-place variant, allocation free.
void project_in_place(Point& x, const Domain& domain);

/**
 * Closed-form distance from the origin to grad + N(x), where N(x) is the
 * normal cone of the feasible set at x. This is the stationarity measure:
 * zero iff x is first-order stationary for the smooth objective whose
 * gradient is passed in.
 *
 * At an active ball constraint the cone is {t*w : t >= 0} and the minimizer
 * is t* = max(0, -<grad_w, w>/|w|^2); at an active temperature bound the
 * one-sided component of grad_lambda is absorbed.
 */
double dist_to_subdifferential(const Point& x, const Vec& grad_w, double grad_lambda,
                               const Domain& domain);

/**
 * Norm of grad_next - z - (x_next - x)/eta, a member of the subgradient set
 * at x_next whenever x_next was produced by a projected step of size eta
 * along z from x. This is the convergence-theorem-faithful diagnostic; it
 * upper-bounds dist_to_subdifferential at x_next.
 */
double subgradient_residual_from_step(const Point& x, const Point& x_next, const Vec& z_w,
                                      double z_lambda, const Vec& grad_next_w,
                                      double grad_next_lambda, double eta);

}  // namespace dro
