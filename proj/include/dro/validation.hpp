#pragma once

#include "dro/optimizers.hpp"

#include <string>
#include <vector>

namespace dro {

/// Outcome of one brute-force check. passed holds iff worst_error is within
/// the check's tolerance; the witness serializes the worst-case input.
struct CheckReport {
    std::string name;
    bool passed = false;
    double worst_error = 0;
    double tolerance = 0;
    long trials = 0;
    std::string witness;  // JSON blob, round-trippable
};

/// One line per report: name, verdict, worst error, trials, witness digest.
std::string report_line(const CheckReport& report);

/**
 * Identity between the compositional objective and the weighted-loss form at
 * the closed-form inner maximizer, plus an iterative entropic-ascent inner
 * maximization that must land on the same value.
 */
CheckReport check_dual_equivalence(const DroProblem& problem, long trials, Rng& rng);

/// Golden-section minimization over a widened temperature range never leaves
/// the certified interval.
CheckReport check_lambda_bound(const DroProblem& problem, long trials, Rng& rng);

/// Central finite differences against the exact gradients of the plain and
/// ridge objectives.
CheckReport check_gradients(const DroProblem& problem, long trials, Rng& rng);

/// Quadratic growth of the ridge objective from its minimum, measured by the
/// squared stationarity distance. Convex losses only.
CheckReport check_kl_inequality(const DroProblem& problem, double mu, long trials, Rng& rng);

/// Sampled necessary condition for the certified smoothness constant.
CheckReport check_smoothness(const DroProblem& problem, long trials, Rng& rng);

std::vector<CheckReport> run_all_checks(const DroProblem& problem, std::uint64_t seed);

/**
 * Exact per-iteration tracking error of an ascdro run on a small problem
 * (full-batch targets each step). Refuses n above the cap.
 */
std::vector<double> storm_error_trace(const DroProblem& problem, const Point& x1,
                                      const Schedule& schedule, Rng& rng,
                                      long cap = 5000);

/// Deterministic full-batch projected gradient with backtracking, run until
/// the gradient-mapping norm (unit reference step) is below tol. Used as the
/// reference optimum for gap measurements.
Point reference_minimum(const DroProblem& problem, double mu, double tol = 1e-10,
                        long max_iters = 200000);

/**
 * Entropic mirror ascent over the simplex on p -> sum p_i losses_i
 * - lambda D(p, 1/n), run from uniform. Step gamma_t = gamma0/sqrt(t).
 * Independent iterative oracle for the inner maximization.
 */
Vec inner_max_mirror_ascent(const Vec& losses, double lambda, long iters,
                            double gamma0 = 0.1);

/// Value of the inner objective sum p_i losses_i - lambda D(p, 1/n).
double inner_objective(const Vec& p, const Vec& losses, double lambda);

/// Random point in the feasible set: direction-uniform w with radius skewed
/// toward the boundary, log-uniform temperature. lambda_floor (if positive)
/// lower-bounds the sampled temperature, for problems whose floor would trip
/// the overflow guard.
Point random_feasible_point(const DroProblem& problem, Rng& rng, double lambda_floor = 0);

}  // namespace dro
