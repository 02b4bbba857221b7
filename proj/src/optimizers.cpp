#include "dro/optimizers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace dro {

void Schedule::step_params(long t, double& beta_t, double& eta_t) const {
    if (mode == Mode::Constant) {
        beta_t = beta;
        eta_t = eta;
        return;
    }
    eta_t = step_scale / std::cbrt(step_offset + static_cast<double>(t) * sigma_sq);
    beta_t = std::min(1.0, curvature * eta_t * eta_t);
}

Schedule constant_schedule(double beta, double eta, long iters) {
    if (!(beta > 0 && beta <= 1)) throw ConfigError("beta must lie in (0, 1]");
    if (eta <= 0) throw ConfigError("eta must be positive");
    if (iters < 1) throw ConfigError("iteration count must be at least 1");
    Schedule s;
    s.mode = Schedule::Mode::Constant;
    s.beta = beta;
    s.eta = eta;
    s.iters = iters;
    return s;
}

Schedule sqrt_horizon_schedule(long iters, double smoothness) {
    if (smoothness <= 0) throw ConfigError("smoothness constant must be positive");
    const double beta = 1.0 / std::sqrt(static_cast<double>(iters));
    return constant_schedule(beta, beta / (20.0 * smoothness * smoothness), iters);
}

Schedule decay_schedule(double sigma_sq, double smoothness, double alpha, long iters) {
    if (sigma_sq <= 0) throw ConfigError("sigma_sq must be positive");
    if (smoothness <= 0) throw ConfigError("smoothness constant must be positive");
    if (alpha <= 1) throw ConfigError("alpha must exceed 1");
    if (iters < 1) throw ConfigError("iteration count must be at least 1");
    const double L = smoothness;
    Schedule s;
    s.mode = Schedule::Mode::PolynomialDecay;
    s.iters = iters;
    s.sigma_sq = sigma_sq;
    s.step_scale = alpha * std::cbrt(sigma_sq) / L;
    const double base = 16.0 * L * L * s.step_scale;
    s.step_offset = std::max(2.0 * sigma_sq, base * base * base);
    s.curvature = sigma_sq / (14.0 * L * s.step_scale * s.step_scale * s.step_scale) +
                  130.0 * L * L * L * L;
    return s;
}

namespace {

using Clock = std::chrono::steady_clock;

void require_feasible(const DroProblem& problem, const Point& x, const char* what) {
    if (!problem.domain.contains(x))
        throw ConfigError(std::string(what) + ": initial point is infeasible");
}

void track_feasibility(RunDiagnostics& diag, const Domain& dom, const Point& x) {
    const double v = std::max({x.w.norm() - dom.radius, dom.lambda_min - x.lambda,
                               x.lambda - dom.lambda_max, 0.0});
    if (v > diag.max_infeasibility) diag.max_infeasibility = v;
}

double guarded_g(const DroProblem& problem, int i, double loss, double lambda,
                 RunDiagnostics& diag) {
    const double e = loss / lambda;
    if (e > problem.overflow_guard) throw OverflowGuardError(i, e);
    const double g = std::exp(e);
    if (g < diag.min_inner_value) diag.min_inner_value = g;
    return g;
}

struct Logger {
    const DroProblem& problem;
    double mu;
    Clock::time_point start = Clock::now();
    std::vector<MetricsRow> rows;
    Vec grad_w;

    Logger(const DroProblem& p, double mu_) : problem(p), mu(mu_) {}

    void log(long iter, int stage, long oracle, const Point& x, const Point* x_prev,
             const Vec* z_w, double z_lambda, double eta) {
        MetricsRow row;
        row.iter = iter;
        row.oracle_calls = oracle;
        row.stage = stage;
        row.objective = F_exact(problem, x);
        row.objective_mu = row.objective + 0.5 * mu * x.squared_norm();

        double grad_lambda;
        grad_F_exact(problem, x, grad_w, grad_lambda);
        if (mu != 0) {
            grad_w += mu * x.w;
            grad_lambda += mu * x.lambda;
        }
        const double dist = dist_to_subdifferential(x, grad_w, grad_lambda, problem.domain);
        row.dist_sq = dist * dist;
        row.step_residual =
            (x_prev && z_w)
                ? subgradient_residual_from_step(*x_prev, x, *z_w, z_lambda, grad_w,
                                                 grad_lambda, eta)
                : std::numeric_limits<double>::quiet_NaN();
        row.train_acc = train_accuracy(problem.loss, problem.data, x.w);
        row.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
        rows.push_back(row);
    }
};

// Shared mutable context for the run loops.
struct LoopCtx {
    const DroProblem& problem;
    Rng& rng;
    double mu = 0;
    EvalOptions eval;
    Logger logger;
    RunDiagnostics diag;
    EstimatorState state;
    Point x;
    Point x_prev;
    Vec z_w;
    double z_lambda = 0;
    Vec grad_buf, grad_buf2;
    long oracle = 0;
    long iter = 0;
    long tau = 0;
    Point sampled;
    long sampled_iter = 0;

    LoopCtx(const DroProblem& p, Rng& r, double mu_, const EvalOptions& ev)
        : problem(p), rng(r), mu(mu_), eval(ev), logger{p, mu_} {}

    bool want_log(long next_iter, long stage_end) const {
        if (next_iter == stage_end) return true;
        return eval.eval_every > 0 && next_iter % eval.eval_every == 0;
    }
};

void scdro_step_inplace(LoopCtx& c, double beta, double eta) {
    const DroProblem& p = c.problem;
    c.z_w = c.state.v;
    c.z_lambda = c.state.u;
    c.x.w.noalias() -= eta * c.z_w;
    c.x.lambda -= eta * c.z_lambda;
    project_in_place(c.x, p.domain);
    track_feasibility(c.diag, p.domain, c.x);

    const int i = static_cast<int>(c.rng.index(p.n()));
    const double loss = loss_value_grad(p.loss, p.data, i, c.x.w, c.grad_buf);
    const double g = guarded_g(p, i, loss, c.x.lambda, c.diag);

    EstimatorState& st = c.state;
    st.s = (1.0 - beta) * st.s + beta * g;
    if (st.s < 1.0) {
        st.s = 1.0;
        ++c.diag.clamp_count;
    }
    // grad_f(s) * grad_w g folds to (g/s) * loss gradient.
    st.v *= (1.0 - beta);
    st.v.noalias() += (beta * g / st.s) * c.grad_buf;
    double u_sample = -(g * loss) / (st.s * c.x.lambda) + std::log(st.s) + p.rho;
    if (c.mu != 0) {
        st.v.noalias() += (beta * c.mu) * c.x.w;
        u_sample += c.mu * c.x.lambda;
    }
    st.u = (1.0 - beta) * st.u + beta * u_sample;
}

void ascdro_step_inplace(LoopCtx& c, double beta, double eta) {
    const DroProblem& p = c.problem;
    EstimatorState& st = c.state;

    const double nf = c.x.lambda / st.s;
    c.z_w = nf * st.v;
    c.z_lambda = nf * st.u + std::log(st.s) + p.rho;
    if (c.mu != 0) {
        c.z_w.noalias() += c.mu * c.x.w;
        c.z_lambda += c.mu * c.x.lambda;
    }

    const Point x_old = c.x;
    c.x.w.noalias() -= eta * c.z_w;
    c.x.lambda -= eta * c.z_lambda;
    project_in_place(c.x, p.domain);
    track_feasibility(c.diag, p.domain, c.x);

    // One fresh sample evaluated at both the new and the old point.
    const int i = static_cast<int>(c.rng.index(p.n()));
    const double loss_new = loss_value_grad(p.loss, p.data, i, c.x.w, c.grad_buf);
    const double g_new = guarded_g(p, i, loss_new, c.x.lambda, c.diag);
    const double loss_old = loss_value_grad(p.loss, p.data, i, x_old.w, c.grad_buf2);
    const double g_old = guarded_g(p, i, loss_old, x_old.lambda, c.diag);

    const double keep = 1.0 - beta;
    st.v *= keep;
    st.v.noalias() += (g_new / c.x.lambda) * c.grad_buf;
    st.v.noalias() -= (keep * g_old / x_old.lambda) * c.grad_buf2;
    const double dg_new = -g_new * loss_new / (c.x.lambda * c.x.lambda);
    const double dg_old = -g_old * loss_old / (x_old.lambda * x_old.lambda);
    st.u = keep * st.u + dg_new - keep * dg_old;
    st.s = keep * st.s + g_new - keep * g_old;
    if (st.s < 1.0) {
        st.s = 1.0;
        ++c.diag.clamp_count;
    }
}

// Exact tracking error of the current state against its full-batch targets.
double tracking_error_sq(const LoopCtx& c, InnerAlgo algo) {
    const DroProblem& p = c.problem;
    const int n = p.n();
    Vec grad;
    Vec gw_mean = Vec::Zero(p.model_dim());
    double g_mean = 0, gl_mean = 0;
    for (int i = 0; i < n; ++i) {
        const double loss = loss_value_grad(p.loss, p.data, i, c.x.w, grad);
        const double g = std::exp(loss / c.x.lambda);
        g_mean += g;
        gw_mean.noalias() += (g / c.x.lambda) * grad;
        gl_mean += -g * loss / (c.x.lambda * c.x.lambda);
    }
    g_mean /= n;
    gw_mean /= n;
    gl_mean /= n;

    double err = (c.state.s - g_mean) * (c.state.s - g_mean);
    if (algo == InnerAlgo::Ascdro) {
        err += (c.state.v - gw_mean).squaredNorm();
        err += (c.state.u - gl_mean) * (c.state.u - gl_mean);
    } else {
        // scdro trackers target the assembled gradient components.
        const double nf = c.x.lambda / g_mean;
        Vec target_v = nf * gw_mean;
        double target_u = nf * gl_mean + std::log(g_mean) + p.rho;
        if (c.mu != 0) {
            target_v += c.mu * c.x.w;
            target_u += c.mu * c.x.lambda;
        }
        err += (c.state.v - target_v).squaredNorm();
        err += (c.state.u - target_u) * (c.state.u - target_u);
    }
    return err;
}

void check_tracking_allowed(const LoopCtx& c) {
    if (c.eval.exact_tracking && c.problem.n() > c.eval.tracking_cap)
        throw ConfigError("exact tracking enabled for n > cap (" +
                          std::to_string(c.eval.tracking_cap) + ")");
}

/// Runs `iters` steps of the chosen algorithm, logging per the eval options.
void drive(LoopCtx& c, InnerAlgo algo, const Schedule& sch, int stage, long stage_iters) {
    const long first = c.iter + 1;
    const long last = c.iter + stage_iters;
    for (long t = first; t <= last; ++t) {
        double beta_t, eta_t;
        sch.step_params(t - first + 1, beta_t, eta_t);
        const bool log_now = c.want_log(t, last);
        if (log_now) c.x_prev = c.x;
        const long cost = (algo == InnerAlgo::Scdro) ? 1 : 2;
        if (algo == InnerAlgo::Scdro)
            scdro_step_inplace(c, beta_t, eta_t);
        else
            ascdro_step_inplace(c, beta_t, eta_t);
        c.oracle += cost;
        c.iter = t;
        if (t == c.tau) {
            c.sampled = c.x;
            c.sampled_iter = t;
        }
        if (c.eval.exact_tracking) c.diag.tracking_error_sq.push_back(tracking_error_sq(c, algo));
        if (log_now) c.logger.log(t, stage, c.oracle, c.x, &c.x_prev, &c.z_w, c.z_lambda, eta_t);
    }
}

RunResult finish(LoopCtx& c) {
    RunResult r;
    r.final_point = c.x;
    r.sampled_point = c.sampled_iter > 0 ? c.sampled : c.x;
    r.sampled_iter = c.sampled_iter;
    r.metrics = std::move(c.logger.rows);
    r.oracle_calls = c.oracle;
    r.objective_offset = -c.problem.lambda_min * c.problem.rho;
    r.diag = std::move(c.diag);
    return r;
}

EstimatorState init_state(const DroProblem& p, const Point& x1, int batch, Rng& rng,
                          InnerAlgo algo, double mu, RunDiagnostics& diag) {
    if (batch < 1) throw ConfigError("init batch must be at least 1");
    Vec grad, gw_sum = Vec::Zero(p.model_dim());
    double s_sum = 0, gl_sum = 0;
    for (int b = 0; b < batch; ++b) {
        const int i = static_cast<int>(rng.index(p.n()));
        const double loss = loss_value_grad(p.loss, p.data, i, x1.w, grad);
        const double g = guarded_g(p, i, loss, x1.lambda, diag);
        s_sum += g;
        gw_sum.noalias() += (g / x1.lambda) * grad;
        gl_sum += -g * loss / (x1.lambda * x1.lambda);
    }
    EstimatorState st;
    st.s = s_sum / batch;
    if (algo == InnerAlgo::Ascdro) {
        st.v = gw_sum / batch;
        st.u = gl_sum / batch;
    } else {
        const double nf = x1.lambda / st.s;
        st.v = nf * (gw_sum / batch);
        st.u = nf * (gl_sum / batch) + std::log(st.s) + p.rho;
        if (mu != 0) {
            st.v.noalias() += mu * x1.w;
            st.u += mu * x1.lambda;
        }
    }
    return st;
}

RunResult single_run(const DroProblem& p, const Point& x1, InnerAlgo algo,
                     const Schedule& sch, Rng& rng, const EvalOptions& eval, double mu) {
    require_feasible(p, x1, algo == InnerAlgo::Scdro ? "scdro" : "ascdro");
    if (sch.iters < 1) throw ConfigError("iteration count must be at least 1");
    LoopCtx c(p, rng, mu, eval);
    check_tracking_allowed(c);
    c.x = x1;
    c.state = init_state(p, x1, static_cast<int>(sch.init_batch), rng, algo, mu, c.diag);
    c.oracle = sch.init_batch;
    c.tau = 1 + static_cast<long>(rng.index(static_cast<std::size_t>(sch.iters)));
    c.logger.log(0, 0, c.oracle, c.x, nullptr, nullptr, 0, 0);
    drive(c, algo, sch, 0, sch.iters);
    return finish(c);
}

}  // namespace

EstimatorState scdro_init(const DroProblem& problem, const Point& x1, int batch, Rng& rng,
                          double mu) {
    require_feasible(problem, x1, "scdro_init");
    RunDiagnostics diag;
    return init_state(problem, x1, batch, rng, InnerAlgo::Scdro, mu, diag);
}

EstimatorState ascdro_init(const DroProblem& problem, const Point& x1, int batch, Rng& rng) {
    require_feasible(problem, x1, "ascdro_init");
    RunDiagnostics diag;
    return init_state(problem, x1, batch, rng, InnerAlgo::Ascdro, 0, diag);
}

Step scdro_step(const DroProblem& problem, const EstimatorState& state, const Point& x,
                double beta, double eta, Rng& rng, double mu) {
    if (!(beta > 0 && beta <= 1)) throw ConfigError("beta must lie in (0, 1]");
    if (eta <= 0) throw ConfigError("eta must be positive");
    require_feasible(problem, x, "scdro_step");
    LoopCtx c(problem, rng, mu, {});
    c.x = x;
    c.state = state;
    scdro_step_inplace(c, beta, eta);
    return Step{std::move(c.x), std::move(c.state), std::move(c.z_w), c.z_lambda};
}

Step ascdro_step(const DroProblem& problem, const EstimatorState& state, const Point& x,
                 double beta, double eta, Rng& rng, double mu) {
    if (!(beta > 0 && beta <= 1)) throw ConfigError("beta must lie in (0, 1]");
    if (eta <= 0) throw ConfigError("eta must be positive");
    require_feasible(problem, x, "ascdro_step");
    LoopCtx c(problem, rng, mu, {});
    c.x = x;
    c.state = state;
    ascdro_step_inplace(c, beta, eta);
    return Step{std::move(c.x), std::move(c.state), std::move(c.z_w), c.z_lambda};
}

RunResult scdro_run(const DroProblem& problem, const Point& x1, const Schedule& schedule,
                    Rng& rng, const EvalOptions& eval, double mu) {
    return single_run(problem, x1, InnerAlgo::Scdro, schedule, rng, eval, mu);
}

RunResult ascdro_run(const DroProblem& problem, const Point& x1, const Schedule& schedule,
                     Rng& rng, const EvalOptions& eval, double mu) {
    return single_run(problem, x1, InnerAlgo::Ascdro, schedule, rng, eval, mu);
}

std::vector<StageParams> stage_table(const DroProblem& problem, InnerAlgo inner,
                                     const StagewiseOptions& opts, double epsilon1,
                                     double mu, double sigma_sq) {
    const int stages =
        opts.stages > 0
            ? opts.stages
            : std::max(1, static_cast<int>(
                              std::ceil(std::log2(std::max(1.0, epsilon1 / opts.target_gap)))));
    std::vector<StageParams> table(stages);
    double eps = epsilon1;
    const double L = opts.theory
                         ? smoothness_constants(problem).objective_smooth
                         : 0;
    const double sigma = std::sqrt(sigma_sq);
    for (int k = 0; k < stages; ++k) {
        StageParams& st = table[k];
        st.epsilon = eps;
        if (!opts.theory) {
            const double scale = std::pow(0.5, k);
            st.beta = std::min(1.0, opts.beta1 * scale);
            st.eta = opts.eta1 * scale;
            st.iters = std::ceil(static_cast<double>(opts.iters1) / scale);
        } else if (inner == InnerAlgo::Scdro) {
            const double c = 384.0 * L * L;
            st.beta = std::min(mu * eps / (c * sigma_sq), 1.0 / c);
            st.eta = std::min(mu * eps / (12.0 * c * L * L * sigma_sq),
                              1.0 / (12.0 * c * L * L));
            st.iters = std::max(384.0 * c * L * L * sigma_sq / (mu * mu * eps),
                                384.0 * c * L * L / mu);
        } else {
            const double c = 768.0 * L * L;
            st.beta = std::min(mu * eps / (c * sigma_sq), 1.0 / c);
            st.eta = std::min(std::sqrt(mu * eps) / (24.0 * c * L * sigma_sq),
                              1.0 / (24.0 * c * L * L));
            st.iters = std::max({192.0 * c * L * sigma / (std::pow(mu, 1.5) * std::sqrt(eps)),
                                 192.0 * c * L * L * sigma_sq / (mu * eps),
                                 192.0 * c * L * L / mu});
        }
        eps /= 2.0;
    }
    return table;
}

RunResult restart_run(const DroProblem& problem, const Point& x1, InnerAlgo inner,
                      const StagewiseOptions& opts, Rng& rng, const EvalOptions& eval) {
    require_feasible(problem, x1, "restart_run");
    if (opts.target_gap <= 0) throw ConfigError("target gap must be positive");

    const double span = problem.domain.radius * problem.domain.radius +
                        problem.domain.lambda_max * problem.domain.lambda_max;
    const double mu = opts.mu > 0 ? opts.mu : opts.target_gap / (2.0 * span);

    double sigma_sq = opts.sigma_sq;
    if (opts.theory && sigma_sq <= 0) {
        Rng sig = rng.child("sigma-sq");
        sigma_sq = estimate_sigma_sq(problem, x1, 256, sig);
    }

    const double epsilon1 =
        opts.epsilon1 > 0 ? opts.epsilon1 : F_mu_exact(problem, x1, mu);
    const auto table = stage_table(problem, inner, opts, epsilon1, mu, sigma_sq);

    double total = 0;
    for (const auto& st : table) {
        if (st.iters > opts.iter_budget) throw BudgetExceededError(st.iters);
        total += st.iters;
    }
    if (total > opts.iter_budget) throw BudgetExceededError(total);

    long init_batch = opts.init_batch;
    if (init_batch <= 0) {
        if (!opts.theory) {
            init_batch = 1;
        } else {
            const double L = smoothness_constants(problem).objective_smooth;
            const double want = inner == InnerAlgo::Scdro
                                    ? 4.0 / (mu * epsilon1)
                                    : 48.0 * L * L / (mu * epsilon1);
            init_batch = static_cast<long>(
                std::min(static_cast<double>(problem.n()), std::ceil(want)));
            init_batch = std::max(1l, init_batch);
        }
    }

    LoopCtx c(problem, rng, mu, eval);
    check_tracking_allowed(c);
    c.x = x1;
    c.state =
        init_state(problem, x1, static_cast<int>(init_batch), rng, inner, mu, c.diag);
    c.oracle = init_batch;
    c.tau = 1 + static_cast<long>(rng.index(static_cast<std::size_t>(total)));
    c.logger.log(0, 0, c.oracle, c.x, nullptr, nullptr, 0, 0);

    for (std::size_t k = 0; k < table.size(); ++k) {
        const auto& st = table[k];
        const Schedule sch = constant_schedule(st.beta, st.eta, static_cast<long>(st.iters));
        drive(c, inner, sch, static_cast<int>(k + 1), sch.iters);
    }
    return finish(c);
}

RunResult plugin_minibatch_run(const DroProblem& problem, const Point& x1, int batch,
                               double eta, long iters, Rng& rng, const EvalOptions& eval) {
    require_feasible(problem, x1, "plugin_minibatch_run");
    if (batch < 1) throw ConfigError("batch must be at least 1");
    if (eta <= 0) throw ConfigError("eta must be positive");
    if (iters < 1) throw ConfigError("iteration count must be at least 1");

    const int n = problem.n();
    const bool full = batch >= n;
    const int B = full ? n : batch;

    LoopCtx c(problem, rng, 0.0, eval);
    c.x = x1;
    c.tau = 1 + static_cast<long>(rng.index(static_cast<std::size_t>(iters)));
    c.logger.log(0, 0, 0, c.x, nullptr, nullptr, 0, 0);

    std::vector<int> idx(B);
    Vec losses(B), weights(B);
    std::vector<Vec> grads(B);
    for (long t = 1; t <= iters; ++t) {
        const bool log_now = c.want_log(t, iters);
        if (log_now) c.x_prev = c.x;

        if (full) {
            for (int b = 0; b < B; ++b) idx[b] = b;
        } else {
            for (int b = 0; b < B; ++b) idx[b] = static_cast<int>(c.rng.index(n));
        }
        for (int b = 0; b < B; ++b)
            losses[b] = loss_value_grad(problem.loss, problem.data, idx[b], c.x.w, grads[b]);

        // Batch log-sum-exp plug-in gradient.
        const double shift = losses.maxCoeff() / c.x.lambda;
        weights = ((losses.array() / c.x.lambda) - shift).exp();
        const double total = weights.sum();
        const double log_mean = shift + std::log(total / B);
        weights /= total;
        if (losses.minCoeff() / c.x.lambda < c.diag.min_inner_value)
            c.diag.min_inner_value =
                std::exp(std::min(losses.minCoeff() / c.x.lambda, 700.0));

        c.z_w = Vec::Zero(problem.model_dim());
        double weighted_loss = 0;
        for (int b = 0; b < B; ++b) {
            c.z_w.noalias() += weights[b] * grads[b];
            weighted_loss += weights[b] * losses[b];
        }
        c.z_lambda = -weighted_loss / c.x.lambda + log_mean + problem.rho;

        c.x.w.noalias() -= eta * c.z_w;
        c.x.lambda -= eta * c.z_lambda;
        project_in_place(c.x, problem.domain);
        track_feasibility(c.diag, problem.domain, c.x);
        c.oracle += B;
        c.iter = t;
        if (t == c.tau) {
            c.sampled = c.x;
            c.sampled_iter = t;
        }
        if (log_now) c.logger.log(t, 0, c.oracle, c.x, &c.x_prev, &c.z_w, c.z_lambda, eta);
    }
    return finish(c);
}

RunResult projected_sgd_run(const DroProblem& problem, const Point& x1, double eta,
                            long iters, Rng& rng, const EvalOptions& eval) {
    require_feasible(problem, x1, "projected_sgd_run");
    if (eta <= 0) throw ConfigError("eta must be positive");
    if (iters < 1) throw ConfigError("iteration count must be at least 1");

    LoopCtx c(problem, rng, 0.0, eval);
    c.x = x1;
    c.tau = 1 + static_cast<long>(rng.index(static_cast<std::size_t>(iters)));
    c.logger.log(0, 0, 0, c.x, nullptr, nullptr, 0, 0);
    for (long t = 1; t <= iters; ++t) {
        const bool log_now = c.want_log(t, iters);
        if (log_now) c.x_prev = c.x;
        const int i = static_cast<int>(c.rng.index(problem.n()));
        const double loss = loss_value_grad(problem.loss, problem.data, i, c.x.w, c.grad_buf);
        c.diag.min_inner_value =
            std::min(c.diag.min_inner_value, std::exp(std::min(loss / c.x.lambda, 700.0)));
        // Single-sample plug-in: the temperature part collapses to rho.
        c.z_w = c.grad_buf;
        c.z_lambda = problem.rho;
        c.x.w.noalias() -= eta * c.z_w;
        c.x.lambda -= eta * c.z_lambda;
        project_in_place(c.x, problem.domain);
        track_feasibility(c.diag, problem.domain, c.x);
        c.oracle += 1;
        c.iter = t;
        if (t == c.tau) {
            c.sampled = c.x;
            c.sampled_iter = t;
        }
        if (log_now) c.logger.log(t, 0, c.oracle, c.x, &c.x_prev, &c.z_w, c.z_lambda, eta);
    }
    return finish(c);
}

double plugin_lambda_grad_sample(const DroProblem& problem, const Point& x, Rng& rng) {
    const int i = static_cast<int>(rng.index(problem.n()));
    const double loss = loss_value(problem.loss, problem.data, i, x.w);
    // -loss/lambda + log(exp(loss/lambda)) + rho, evaluated as written.
    return -loss / x.lambda + loss / x.lambda + problem.rho;
}

namespace {

// Projects log-weights onto {D(p, 1/n) <= rho} by bisecting the softmax
// temperature of p^t. Input and output are normalized log-probabilities.
void kl_cap_project(Vec& log_p, double rho, long& bisection_iters) {
    const auto n = log_p.size();
    const double logn = std::log(static_cast<double>(n));
    auto normalize = [&](Vec& lp) {
        const double m = lp.maxCoeff();
        const double lse = m + std::log((lp.array() - m).exp().sum());
        lp.array() -= lse;
    };
    auto kl_of = [&](const Vec& lp) {
        double kl = 0;
        for (Eigen::Index i = 0; i < n; ++i) kl += std::exp(lp[i]) * (lp[i] + logn);
        return kl;
    };
    normalize(log_p);
    if (kl_of(log_p) <= rho) return;

    double lo = 0.0, hi = 1.0;  // power applied to the weights
    Vec scaled;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        scaled = mid * log_p;
        normalize(scaled);
        const double kl = kl_of(scaled);
        if (std::abs(kl - rho) <= 1e-10) {
            log_p = scaled;
            ++bisection_iters;
            return;
        }
        (kl > rho ? hi : lo) = mid;
        ++bisection_iters;
    }
    // Interval collapsed without hitting the tolerance window.
    scaled = lo * log_p;
    normalize(scaled);
    if (kl_of(scaled) <= rho + 1e-10) {
        log_p = scaled;
        return;
    }
    throw NumericError("temperature bisection for the KL cap did not converge");
}

}  // namespace

RunResult primal_dual_run(const DroProblem& problem, const Point& x1, double eta_w,
                          double eta_p, long iters, Rng& rng, const EvalOptions& eval) {
    require_feasible(problem, x1, "primal_dual_run");
    if (eta_w <= 0 || eta_p <= 0) throw ConfigError("step sizes must be positive");
    if (iters < 1) throw ConfigError("iteration count must be at least 1");

    const int n = problem.n();
    const double logn = std::log(static_cast<double>(n));
    LoopCtx c(problem, rng, 0.0, eval);
    c.x = x1;
    c.tau = 1 + static_cast<long>(rng.index(static_cast<std::size_t>(iters)));

    Vec log_p = Vec::Constant(n, -logn);
    Vec losses(n);
    long bisection_iters = 0;

    auto refresh_lambda = [&](Point& x) {
        // Report against the best temperature for the current weights.
        for (int i = 0; i < n; ++i)
            losses[i] = loss_value(problem.loss, problem.data, i, x.w);
        x.lambda = golden_section_lambda(losses, problem.rho, problem.domain.lambda_min,
                                         problem.domain.lambda_max);
    };

    refresh_lambda(c.x);
    c.logger.log(0, 0, 0, c.x, nullptr, nullptr, 0, 0);

    for (long t = 1; t <= iters; ++t) {
        const bool log_now = c.want_log(t, iters);

        // w-step: one sample drawn from the current weights.
        double u = c.rng.uniform01();
        int j = n - 1;
        double acc = 0;
        for (int i = 0; i < n; ++i) {
            acc += std::exp(log_p[i]);
            if (u <= acc) {
                j = i;
                break;
            }
        }
        loss_value_grad(problem.loss, problem.data, j, c.x.w, c.grad_buf);
        c.x.w.noalias() -= eta_w * c.grad_buf;
        const double norm = c.x.w.norm();
        if (norm > problem.domain.radius) c.x.w *= problem.domain.radius / norm;

        // p-step: entropic ascent on the weighted loss, then the KL cap.
        for (int i = 0; i < n; ++i)
            losses[i] = loss_value(problem.loss, problem.data, i, c.x.w);
        for (int i = 0; i < n; ++i)
            log_p[i] += eta_p * (losses[i] - problem.lambda_min * (log_p[i] + logn + 1.0));
        kl_cap_project(log_p, problem.rho, bisection_iters);

        c.oracle += 1 + n;
        c.iter = t;
        if (t == c.tau) {
            c.sampled = c.x;
            refresh_lambda(c.sampled);
            c.sampled_iter = t;
        }
        if (log_now) {
            refresh_lambda(c.x);
            track_feasibility(c.diag, problem.domain, c.x);
            c.logger.log(t, 0, c.oracle, c.x, nullptr, nullptr, 0, 0);
        }
    }
    refresh_lambda(c.x);
    c.diag.dual_weights = log_p.array().exp();
    return finish(c);
}

double estimate_sigma_sq(const DroProblem& problem, const Point& x1, int count, Rng& rng) {
    require_feasible(problem, x1, "estimate_sigma_sq");
    if (count < 2) throw ConfigError("need at least two samples");
    Vec grad;
    Vec gw_sum = Vec::Zero(problem.model_dim());
    double s_sum = 0, s_sq = 0, gl_sum = 0, grad_sq = 0;
    for (int b = 0; b < count; ++b) {
        const int i = static_cast<int>(rng.index(problem.n()));
        const double loss = loss_value_grad(problem.loss, problem.data, i, x1.w, grad);
        const double e = loss / x1.lambda;
        if (e > problem.overflow_guard) throw OverflowGuardError(i, e);
        const double g = std::exp(e);
        const double gl = -g * loss / (x1.lambda * x1.lambda);
        grad *= g / x1.lambda;
        s_sum += g;
        s_sq += g * g;
        gw_sum += grad;
        gl_sum += gl;
        grad_sq += grad.squaredNorm() + gl * gl;
    }
    const double inv = 1.0 / count;
    const double var_g = std::max(0.0, s_sq * inv - (s_sum * inv) * (s_sum * inv));
    const double mean_sq = (gw_sum * inv).squaredNorm() + (gl_sum * inv) * (gl_sum * inv);
    const double var_grad = std::max(0.0, grad_sq * inv - mean_sq);
    return std::max(var_g, var_grad);
}

}  // namespace dro
