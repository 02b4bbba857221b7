#include "dro/dro_core.hpp"

#include <cmath>

namespace dro {

double lambda_tilde(double value_bound, double rho, double lambda_min) {
    if (value_bound <= 0 || rho <= 0 || lambda_min <= 0)
        throw ConfigError("lambda_tilde requires positive value bound, rho and lambda floor");
    return lambda_min + value_bound / rho;
}

DroProblem make_problem(Dataset data, LossModel loss, double rho, double lambda_min,
                        double radius, double overflow_guard) {
    if (rho <= 0) throw ConfigError("rho must be positive");
    if (lambda_min <= 0) throw ConfigError("lambda floor must be positive");
    if (radius <= 0) throw ConfigError("radius must be positive");
    if (overflow_guard <= 0) throw ConfigError("overflow guard must be positive");
    data.validate();

    DroProblem p;
    p.bounds = loss_bounds(loss, data, radius);
    if (p.bounds.value_bound <= 0) throw ConfigError("loss value bound must be positive");
    p.data = std::move(data);
    p.loss = loss;
    p.rho = rho;
    p.lambda_min = lambda_min;
    p.overflow_guard = overflow_guard;
    p.domain.radius = radius;
    p.domain.lambda_min = lambda_min;
    p.domain.lambda_max = lambda_tilde(p.bounds.value_bound, rho, lambda_min);
    return p;
}

SmoothnessConstants smoothness_constants(const DroProblem& problem) {
    const double C = problem.bounds.value_bound;
    const double G = problem.bounds.grad_bound;
    const double L = problem.bounds.smooth_bound;
    const double l0 = problem.lambda_min;
    const double lmax = problem.domain.lambda_max;
    const double e = std::exp(C / l0);
    const double l2 = l0 * l0, l3 = l2 * l0, l4 = l3 * l0;

    SmoothnessConstants s;
    s.inner_value_lip = e * (G / l0 + C / l2);
    s.w_grad_w_lip = e * (G * G / l2 + L / l0);
    s.w_grad_lambda_lip = e * (C * G / l3 + G / l2);
    s.lambda_grad_w_lip = e * ((C * G + l0 * G) / l3);
    s.lambda_grad_lambda_lip = e * ((C * C + 2.0 * l0 * C) / l4);
    s.inner_grad_lip = std::sqrt(s.w_grad_w_lip * s.w_grad_w_lip +
                                 s.w_grad_lambda_lip * s.w_grad_lambda_lip +
                                 s.lambda_grad_w_lip * s.lambda_grad_w_lip +
                                 s.lambda_grad_lambda_lip * s.lambda_grad_lambda_lip);
    s.objective_smooth = lmax * s.inner_value_lip * s.inner_value_lip +
                         2.0 * s.inner_value_lip + lmax * s.inner_grad_lip + 1.0 + lmax;
    return s;
}

namespace {

void check_feasible(const DroProblem& problem, const Point& x) {
    if (!problem.domain.contains(x))
        throw ConfigError("point outside the feasible domain");
}

double guarded_exponent(const DroProblem& problem, int i, double loss, double lambda) {
    const double e = loss / lambda;
    if (e > problem.overflow_guard) throw OverflowGuardError(i, e);
    return e;
}

}  // namespace

double g_value(const DroProblem& problem, int i, const Point& x) {
    const double loss = loss_value(problem.loss, problem.data, i, x.w);
    return std::exp(guarded_exponent(problem, i, loss, x.lambda));
}

double g_value_grad(const DroProblem& problem, int i, const Point& x, Vec& grad_w,
                    double& grad_lambda) {
    const double loss = loss_value_grad(problem.loss, problem.data, i, x.w, grad_w);
    const double g = std::exp(guarded_exponent(problem, i, loss, x.lambda));
    grad_w *= g / x.lambda;
    grad_lambda = -g * loss / (x.lambda * x.lambda);
    return g;
}

std::pair<Vec, double> g_grad(const DroProblem& problem, int i, const Point& x) {
    Vec gw;
    double gl;
    g_value_grad(problem, i, x, gw, gl);
    return {std::move(gw), gl};
}

double f_lambda(double s, double lambda, double rho, long* clamp_count) {
    if (s < 1.0) {
        if (clamp_count) ++*clamp_count;
        s = 1.0;
    }
    return lambda * std::log(s) + lambda * rho;
}

double grad_f_lambda(double s, double lambda) {
    if (s < 1.0) s = 1.0;
    return lambda / s;
}

Vec loss_vector(const DroProblem& problem, const Vec& w) {
    Vec losses(problem.n());
    for (int i = 0; i < problem.n(); ++i)
        losses[i] = loss_value(problem.loss, problem.data, i, w);
    return losses;
}

double objective_from_losses(const Vec& losses, double lambda, double rho) {
    const double shift = losses.maxCoeff() / lambda;
    const double mean = ((losses.array() / lambda) - shift).exp().mean();
    return lambda * (shift + std::log(mean)) + lambda * rho;
}

double F_exact(const DroProblem& problem, const Point& x) {
    check_feasible(problem, x);
    return objective_from_losses(loss_vector(problem, x.w), x.lambda, problem.rho);
}

void grad_F_exact(const DroProblem& problem, const Point& x, Vec& grad_w,
                  double& grad_lambda) {
    check_feasible(problem, x);
    const int n = problem.n();
    Vec losses(n);
    Vec sample_grad;
    grad_w = Vec::Zero(problem.model_dim());

    // First pass: losses and the stable softmax normalizer.
    for (int i = 0; i < n; ++i)
        losses[i] = loss_value(problem.loss, problem.data, i, x.w);
    const double shift = losses.maxCoeff() / x.lambda;
    Vec weights = ((losses.array() / x.lambda) - shift).exp();
    const double total = weights.sum();
    const double log_mean = shift + std::log(total / n);
    weights /= total;

    // grad_w F = sum_i p*_i grad loss_i; the lambda part collapses to the
    // weighted mean loss.
    double weighted_loss = 0;
    for (int i = 0; i < n; ++i) {
        loss_value_grad(problem.loss, problem.data, i, x.w, sample_grad);
        grad_w.noalias() += weights[i] * sample_grad;
        weighted_loss += weights[i] * losses[i];
    }
    grad_lambda = -weighted_loss / x.lambda + log_mean + problem.rho;
}

std::pair<Vec, double> grad_F_exact(const DroProblem& problem, const Point& x) {
    Vec gw;
    double gl;
    grad_F_exact(problem, x, gw, gl);
    return {std::move(gw), gl};
}

double F_mu_exact(const DroProblem& problem, const Point& x, double mu) {
    if (mu < 0) throw ConfigError("mu must be nonnegative");
    return F_exact(problem, x) + 0.5 * mu * x.squared_norm();
}

void grad_F_mu_exact(const DroProblem& problem, const Point& x, double mu, Vec& grad_w,
                     double& grad_lambda) {
    if (mu < 0) throw ConfigError("mu must be nonnegative");
    grad_F_exact(problem, x, grad_w, grad_lambda);
    grad_w += mu * x.w;
    grad_lambda += mu * x.lambda;
}

StarWeights p_star_full(const DroProblem& problem, const Point& x) {
    check_feasible(problem, x);
    const Vec losses = loss_vector(problem, x.w);
    StarWeights out;
    const double shift = losses.maxCoeff() / x.lambda;
    out.log_probs = (losses.array() / x.lambda) - shift;
    Vec e = out.log_probs.array().exp();
    const double total = e.sum();
    out.probs = e / total;
    out.log_probs.array() -= std::log(total);
    out.log_mean = shift + std::log(total / losses.size());
    return out;
}

Vec p_star(const DroProblem& problem, const Point& x) { return p_star_full(problem, x).probs; }

double golden_section_lambda(const Vec& losses, double rho, double lo, double hi,
                             double tol) {
    if (!(lo > 0 && hi > lo)) throw ConfigError("invalid temperature bracket");
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
    double fa = objective_from_losses(losses, a, rho);
    double fb = objective_from_losses(losses, b, rho);
    while (hi - lo > tol) {
        if (fa < fb) {
            hi = b;
            b = a;
            fb = fa;
            a = hi - gr * (hi - lo);
            fa = objective_from_losses(losses, a, rho);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + gr * (hi - lo);
            fb = objective_from_losses(losses, b, rho);
        }
    }
    return 0.5 * (lo + hi);
}

double kl_divergence(const Vec& p) {
    const auto n = p.size();
    if (n == 0) throw DataError("empty probability vector");
    double sum = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(p[i] >= 0)) throw DataError("probability entries must be nonnegative");
        sum += p[i];
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DataError("probabilities must sum to 1");
    double kl = 0;
    const double logn = std::log(static_cast<double>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        if (p[i] > 0) kl += p[i] * (std::log(p[i]) + logn);
    return kl;
}

}  // namespace dro
