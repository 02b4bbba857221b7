#pragma once

#include "dro/common.hpp"
#include "dro/dataset.hpp"
#include "dro/losses.hpp"

#include <utility>

namespace dro {

/// Joint decision variable: model weights plus the dual temperature.
struct Point {
    Vec w;
    double lambda = 0;

    Eigen::Index dim() const { return w.size() + 1; }
    double squared_norm() const { return w.squaredNorm() + lambda * lambda; }
};

/// Feasible set: Euclidean ball of the given radius for w, closed interval
/// [lambda_min, lambda_max] for the temperature.
struct Domain {
    double radius = 1.0;
    double lambda_min = 1e-3;  // temperature floor
    double lambda_max = 1.0;   // provable cap, lambda_min + C/rho

    bool contains(const Point& x, double tol = 1e-9) const {
        if (!x.w.allFinite() || !std::isfinite(x.lambda)) return false;
        if (x.w.norm() > radius * (1.0 + tol) + tol) return false;
        return x.lambda >= lambda_min - tol && x.lambda <= lambda_max + tol;
    }
};

/**
 * A robust training problem: dataset, per-sample loss, the constraint radius
 * rho, the temperature floor, and everything derived from them (certified
 * loss bounds and the feasible domain).
 */
struct DroProblem {
    Dataset data;
    LossModel loss;
    double rho = 0.5;
    double lambda_min = 1e-3;
    LossBounds bounds;
    Domain domain;
    double overflow_guard = 300.0;  // cap on loss/lambda exponents

    int n() const { return data.n(); }
    int model_dim() const { return loss.param_dim(data.d()); }
};

/// Upper bound on the optimal temperature: lambda_min + value_bound / rho.
double lambda_tilde(double value_bound, double rho, double lambda_min);

/// Builds a problem, deriving bounds and the domain. Throws ConfigError on
/// nonpositive rho/lambda_min/radius.
DroProblem make_problem(Dataset data, LossModel loss, double rho, double lambda_min,
                        double radius, double overflow_guard = 300.0);

/// Lipschitz/smoothness constants of the inner map and the full objective,
/// all derived in closed form from the loss bounds and the domain.
struct SmoothnessConstants {
    double inner_value_lip = 0;         // L_g
    double inner_grad_lip = 0;          // L_{grad g}
    double w_grad_w_lip = 0;            // L_A: w-gradient w.r.t. w
    double w_grad_lambda_lip = 0;       // L_B: w-gradient w.r.t. lambda
    double lambda_grad_w_lip = 0;       // L_C: lambda-gradient w.r.t. w
    double lambda_grad_lambda_lip = 0;  // L_D: lambda-gradient w.r.t. lambda
    double objective_smooth = 0;        // L_F
};

SmoothnessConstants smoothness_constants(const DroProblem& problem);

/// Inner map g_i(x) = exp(loss_i(w)/lambda); always >= 1 for nonnegative
/// losses. Throws OverflowGuardError when the exponent exceeds the guard.
double g_value(const DroProblem& problem, int i, const Point& x);

/// Value and gradient of g_i in one pass; grad_w is resized as needed.
/// Returns g_i(x).
double g_value_grad(const DroProblem& problem, int i, const Point& x, Vec& grad_w,
                    double& grad_lambda);

std::pair<Vec, double> g_grad(const DroProblem& problem, int i, const Point& x);

/// Outer map lambda*log(s) + lambda*rho. Inputs below 1 (possible transiently
/// for streaming trackers) are clamped to 1; the optional counter records how
/// often that happened.
double f_lambda(double s, double lambda, double rho, long* clamp_count = nullptr);

/// Gradient of the outer map w.r.t. s: lambda/s, in (0, lambda] for s >= 1.
double grad_f_lambda(double s, double lambda);

/// Exact full-batch objective via shifted log-sum-exp; never overflows.
/// Requires x feasible.
double F_exact(const DroProblem& problem, const Point& x);

/// Exact full-batch gradient, computed through the softmax weights so no
/// unshifted exponential is ever formed. Requires x feasible.
void grad_F_exact(const DroProblem& problem, const Point& x, Vec& grad_w,
                  double& grad_lambda);

std::pair<Vec, double> grad_F_exact(const DroProblem& problem, const Point& x);

/// Regularized objective F + mu*|x|^2/2 and its gradient.
double F_mu_exact(const DroProblem& problem, const Point& x, double mu);
void grad_F_mu_exact(const DroProblem& problem, const Point& x, double mu, Vec& grad_w,
                     double& grad_lambda);

/// Worst-case sample weights: softmax of loss_i(w)/lambda, with the log
/// weights and the log-mean-exp exposed so downstream code can stay in the
/// log domain.
struct StarWeights {
    Vec probs;
    Vec log_probs;
    double log_mean;  // log((1/n) sum exp(loss_i/lambda))
};

StarWeights p_star_full(const DroProblem& problem, const Point& x);
Vec p_star(const DroProblem& problem, const Point& x);

/// KL divergence to the uniform distribution: sum p_i log(p_i n), zero iff
/// uniform. Throws DataError if p is not a probability vector (tol 1e-9).
double kl_divergence(const Vec& p);

/// Objective at an arbitrary positive temperature given a precomputed loss
/// vector; no feasibility check. Used by the oracles (temperature searches,
/// finite differences) that probe outside the trust region.
double objective_from_losses(const Vec& losses, double lambda, double rho);

/// All per-sample losses at w (one O(n d) pass).
Vec loss_vector(const DroProblem& problem, const Vec& w);

/// Golden-section minimizer of the objective over the temperature at fixed
/// losses. The objective is convex in the temperature for any fixed loss
/// vector (perspective of a convex function), so the search is exact up to
/// the bracket tolerance.
double golden_section_lambda(const Vec& losses, double rho, double lo, double hi,
                             double tol = 1e-10);

}  // namespace dro
