#pragma once

#include "dro/dro_core.hpp"
#include "dro/geometry.hpp"

#include <limits>
#include <vector>

namespace dro {

/**
 * Streaming trackers shared by the compositional algorithms.
 * s tracks the inner mean g(x). For scdro, v and u track the assembled
 * gradient components (the update direction is (v, u) directly); for ascdro
 * they track the raw inner gradients and the direction is assembled from
 * them at step time.
 */
struct EstimatorState {
    double s = 1.0;
    Vec v;
    double u = 0.0;
};

/// One logged evaluation point.
struct MetricsRow {
    long iter = 0;
    long oracle_calls = 0;
    double objective = 0;      // F
    double objective_mu = 0;   // F + mu|x|^2/2; equals F when mu == 0
    double dist_sq = 0;        // squared closed-form stationarity measure
    double step_residual = 0;  // step-based subgradient residual; NaN on the initial row
    double train_acc = 0;
    int stage = 0;
    double wall_ms = 0;
};

struct RunDiagnostics {
    long clamp_count = 0;  // times a tracker dipped below 1 before a log
    double min_inner_value = std::numeric_limits<double>::infinity();
    double max_infeasibility = 0;  // worst constraint excess over all iterates
    std::vector<double> tracking_error_sq;  // exact per-iteration tracking error, when enabled
    Vec dual_weights;  // final sample weights (primal-dual baseline only)
};

struct RunResult {
    Point final_point;
    Point sampled_point;  // iterate after a uniformly drawn step
    long sampled_iter = 0;
    std::vector<MetricsRow> metrics;
    long oracle_calls = 0;
    // Constant separating the reported objective from the variant that
    // carries (lambda - lambda_min) * rho; purely informational.
    double objective_offset = 0;
    RunDiagnostics diag;
};

struct EvalOptions {
    long eval_every = 0;  // 0: log only the initial and final rows
    /// Record the exact tracking error of the estimator state against its
    /// full-batch targets after every iteration. Costs O(n d) per step;
    /// refused above tracking_cap samples.
    bool exact_tracking = false;
    long tracking_cap = 5000;
};

struct Schedule {
    enum class Mode {
        Constant,         // fixed (beta, eta)
        PolynomialDecay,  // eta_t = step_scale/(step_offset + t*sigma_sq)^(1/3), beta_t = curvature*eta_t^2
    };
    Mode mode = Mode::Constant;
    long iters = 1000;
    long init_batch = 1;

    double beta = 0.1;
    double eta = 0.01;

    double step_scale = 0;   // k
    double step_offset = 0;  // w
    double curvature = 0;    // c
    double sigma_sq = 0;

    void step_params(long t, double& beta_t, double& eta_t) const;
};

Schedule constant_schedule(double beta, double eta, long iters);

/// Horizon-matched constants: beta = 1/sqrt(T), eta = beta/(20 L^2).
Schedule sqrt_horizon_schedule(long iters, double smoothness);

/// Polynomially decaying steps from the noise level and smoothness, with
/// scale factor alpha > 1: k = alpha sigma^(2/3)/L, offset max(2 sigma^2,
/// (16 L^2 k)^3), curvature sigma^2/(14 L k^3) + 130 L^4.
Schedule decay_schedule(double sigma_sq, double smoothness, double alpha, long iters);

// --- scdro: moving-average compositional tracking ---

/// Initializes trackers from a fresh batch at x1 (batch >= 1). With mu > 0
/// the trackers include the mu*x ridge term.
EstimatorState scdro_init(const DroProblem& problem, const Point& x1, int batch, Rng& rng,
                          double mu = 0);

struct Step {
    Point x_next;
    EstimatorState state;
    Vec z_w;
    double z_lambda = 0;
};

/// One iteration: move along the current trackers, draw a sample at the new
/// point, refresh the trackers by moving average.
Step scdro_step(const DroProblem& problem, const EstimatorState& state, const Point& x,
                double beta, double eta, Rng& rng, double mu = 0);

RunResult scdro_run(const DroProblem& problem, const Point& x1, const Schedule& schedule,
                    Rng& rng, const EvalOptions& eval = {}, double mu = 0);

// --- ascdro: recursive variance-reduced tracking ---

EstimatorState ascdro_init(const DroProblem& problem, const Point& x1, int batch, Rng& rng);

/// One iteration: move along the assembled direction, then correct the
/// trackers with one fresh sample evaluated at both the new and old point.
Step ascdro_step(const DroProblem& problem, const EstimatorState& state, const Point& x,
                 double beta, double eta, Rng& rng, double mu = 0);

RunResult ascdro_run(const DroProblem& problem, const Point& x1, const Schedule& schedule,
                     Rng& rng, const EvalOptions& eval = {}, double mu = 0);

// --- restarted variants for convex losses ---

enum class InnerAlgo { Scdro, Ascdro };

struct StagewiseOptions {
    bool theory = false;   // stage constants straight from the convergence analysis
    double mu = 0;         // ridge weight; 0 derives target/(2(R^2+lambda_max^2))
    double target_gap = 1e-3;
    int stages = 0;        // 0 derives ceil(log2(epsilon1/target_gap))
    double epsilon1 = 0;   // initial gap bound; 0 uses F_mu(x1) (valid since F >= 0)
    double sigma_sq = 0;   // 0 estimates from 256 samples at x1
    long init_batch = 0;   // 0: 1 in practical mode, analysis value capped at n in theory mode
    // stage-1 constants for the practical mode; later stages halve beta/eta
    // and double the length
    double beta1 = 0.5;
    double eta1 = 0.01;
    long iters1 = 10000;
    double iter_budget = 2e9;  // total-iteration cap; theory mode usually exceeds it
};

/// Multi-stage restarted run on the ridge objective; estimator state carries
/// across stages. Throws BudgetExceededError when the stage table wants more
/// iterations than the budget.
RunResult restart_run(const DroProblem& problem, const Point& x1, InnerAlgo inner,
                      const StagewiseOptions& opts, Rng& rng, const EvalOptions& eval = {});

/// The stage table (beta_k, eta_k, T_k) that restart_run would use.
struct StageParams {
    double epsilon = 0;
    double beta = 0;
    double eta = 0;
    double iters = 0;  // double: theory values can overflow long
};
std::vector<StageParams> stage_table(const DroProblem& problem, InnerAlgo inner,
                                     const StagewiseOptions& opts, double epsilon1,
                                     double mu, double sigma_sq);

// --- baselines ---

/// Plug-in mini-batch projected gradient: each step estimates the full
/// gradient from a fresh batch via a batch log-sum-exp. batch == n uses every
/// sample (exact projected gradient descent).
RunResult plugin_minibatch_run(const DroProblem& problem, const Point& x1, int batch,
                               double eta, long iters, Rng& rng, const EvalOptions& eval = {});

/// Single-sample plug-in special case with its own direct update (the
/// one-sample temperature gradient collapses to rho).
RunResult projected_sgd_run(const DroProblem& problem, const Point& x1, double eta,
                            long iters, Rng& rng, const EvalOptions& eval = {});

/// Primal-dual baseline keeping the full n-dimensional weight vector:
/// stochastic w-step against the current weights, entropic ascent p-step with
/// a KL-cap projection by bisection on the softmax temperature.
RunResult primal_dual_run(const DroProblem& problem, const Point& x1, double eta_w,
                          double eta_p, long iters, Rng& rng, const EvalOptions& eval = {});

/// One-sample plug-in estimate of the temperature gradient at x (bias
/// demonstration helper; its mean over draws is rho, not the true partial).
double plugin_lambda_grad_sample(const DroProblem& problem, const Point& x, Rng& rng);

// --- empirical constants ---

/// max of the sample variances of g_i and grad g_i at x1.
double estimate_sigma_sq(const DroProblem& problem, const Point& x1, int count, Rng& rng);

}  // namespace dro
