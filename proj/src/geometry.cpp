#include "dro/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace dro {

namespace {
// A constraint counts as active when within this relative band of its bound;
// the projection's clamp is exact but the ball scaling can leave |w| a few
// ulps away from the radius.
constexpr double kActivityTol = 1e-10;

bool near(double value, double bound) {
    return std::abs(value - bound) <= kActivityTol * (1.0 + std::abs(bound));
}
}  // namespace

void project_in_place(Point& x, const Domain& domain) {
    const double norm = x.w.norm();
    if (norm > domain.radius) x.w *= domain.radius / norm;
    x.lambda = std::clamp(x.lambda, domain.lambda_min, domain.lambda_max);
}

Point project(Point x, const Domain& domain) {
    project_in_place(x, domain);
    return x;
}

double dist_to_subdifferential(const Point& x, const Vec& grad_w, double grad_lambda,
                               const Domain& domain) {
    if (!domain.contains(x)) throw ConfigError("stationarity measure needs a feasible point");

    // Temperature residual: one-sided absorption at an active bound. At the
    // floor the cone is {v <= 0}, so positive gradients (descent blocked)
    // are absorbed; at the cap the negative ones are.
    double res_lambda = grad_lambda;
    if (near(x.lambda, domain.lambda_min)) res_lambda = std::min(res_lambda, 0.0);
    if (near(x.lambda, domain.lambda_max)) res_lambda = std::max(res_lambda, 0.0);

    // Ball residual: at |w| = R the cone is the outward ray along w.
    const double norm = x.w.norm();
    double res_w_sq;
    if (near(norm, domain.radius) && norm > 0) {
        const double t = std::max(0.0, -grad_w.dot(x.w) / (norm * norm));
        res_w_sq = (grad_w + t * x.w).squaredNorm();
    } else {
        res_w_sq = grad_w.squaredNorm();
    }
    return std::sqrt(res_w_sq + res_lambda * res_lambda);
}

double subgradient_residual_from_step(const Point& x, const Point& x_next, const Vec& z_w,
                                      double z_lambda, const Vec& grad_next_w,
                                      double grad_next_lambda, double eta) {
    if (eta <= 0) throw ConfigError("step size must be positive");
    const double inv_eta = 1.0 / eta;
    const double rw = (grad_next_w - z_w - inv_eta * (x_next.w - x.w)).squaredNorm();
    const double rl = grad_next_lambda - z_lambda - inv_eta * (x_next.lambda - x.lambda);
    return std::sqrt(rw + rl * rl);
}

}  // namespace dro
