#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dro/dro_core.hpp"
#include "dro/validation.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace dro;

namespace {

LossModel logistic_model() { return LossModel{LossKind::BinaryLogistic, {}}; }

DroProblem small_problem(Rng& rng, int n, int d, double rho = 0.5, double lambda0 = 0.5,
                         double radius = 1.0) {
    return make_problem(testutil::random_binary_dataset(rng, n, d), logistic_model(), rho,
                        lambda0, radius);
}

// Single-sample problem engineered so that loss(w) = 1 and grad loss(w) = (1, 0)
// exactly (up to rounding): margin -log(e-1) against feature (-e/(e-1), 0).
DroProblem unit_loss_problem(Point& x) {
    const double e = std::exp(1.0);
    Dataset data;
    data.features.resize(1, 2);
    data.features << -e / (e - 1.0), 0.0;
    data.labels = {1};
    DroProblem p = make_problem(std::move(data), logistic_model(), 1.0, 0.5, 1.0);
    x.w = Vec::Zero(2);
    x.w[0] = std::log(e - 1.0) * (e - 1.0) / e;
    x.lambda = 1.0;
    return p;
}

}  // namespace

TEST_CASE("inner map is exp(loss/lambda), >= 1, matching extended precision") {
    Rng rng(5);
    const DroProblem p = small_problem(rng, 12, 4);
    for (int t = 0; t < 200; ++t) {
        const Point x = random_feasible_point(p, rng);
        const int i = static_cast<int>(rng.index(p.n()));
        const double g = g_value(p, i, x);
        CHECK(g >= 1.0);
        const long double loss = loss_value(p.loss, p.data, i, x.w);
        const double ref = static_cast<double>(expl(loss / static_cast<long double>(x.lambda)));
        CHECK(std::abs(g - ref) / ref <= 1e-14);
    }
}

TEST_CASE("inner map doubles when the temperature equals loss/log 2") {
    Rng rng(9);
    DroProblem p = small_problem(rng, 4, 3, /*rho=*/0.1, /*lambda0=*/0.01);
    Point x;
    x.w = 0.5 * rng.normal_vec(3);
    x.w /= std::max(1.0, x.w.norm());
    const double loss = loss_value(p.loss, p.data, 1, x.w);
    x.lambda = loss / std::log(2.0);
    REQUIRE(p.domain.contains(x));
    CHECK(g_value(p, 1, x) == doctest::Approx(2.0).epsilon(1e-13));
}

TEST_CASE("inner gradient at unit loss is (e, 0) with temperature partial -e") {
    Point x;
    const DroProblem p = unit_loss_problem(x);
    REQUIRE(loss_value(p.loss, p.data, 0, x.w) == doctest::Approx(1.0).epsilon(1e-14));
    Vec gw;
    double gl;
    const double g = g_value_grad(p, 0, x, gw, gl);
    const double e = std::exp(1.0);
    CHECK(g == doctest::Approx(e).epsilon(1e-13));
    CHECK(gw[0] == doctest::Approx(e).epsilon(1e-13));
    CHECK(std::abs(gw[1]) <= 1e-13);
    CHECK(gl == doctest::Approx(-e).epsilon(1e-13));
}

TEST_CASE("inner gradient matches finite differences of the inner value") {
    Rng rng(13);
    const DroProblem p = small_problem(rng, 6, 3);
    for (int t = 0; t < 40; ++t) {
        const Point x = random_feasible_point(p, rng);
        const int i = static_cast<int>(rng.index(p.n()));
        Vec gw;
        double gl;
        g_value_grad(p, i, x, gw, gl);
        auto value = [&](double dw0, double dw1, double dw2, double dl) {
            Point y = x;
            y.w[0] += dw0;
            y.w[1] += dw1;
            y.w[2] += dw2;
            y.lambda += dl;
            const double loss = loss_value(p.loss, p.data, i, y.w);
            return std::exp(loss / y.lambda);
        };
        const double h = 1e-6;
        const Vec fd_w = (Vec(3) << (value(h, 0, 0, 0) - value(-h, 0, 0, 0)) / (2 * h),
                          (value(0, h, 0, 0) - value(0, -h, 0, 0)) / (2 * h),
                          (value(0, 0, h, 0) - value(0, 0, -h, 0)) / (2 * h))
                             .finished();
        const double fd_l = (value(0, 0, 0, h) - value(0, 0, 0, -h)) / (2 * h);
        CHECK((gw - fd_w).norm() / (1.0 + gw.norm()) <= 1e-5);
        CHECK(std::abs(gl - fd_l) / (1.0 + std::abs(gl)) <= 1e-5);
    }
}

TEST_CASE("overflow guard trips when the temperature floor is too small") {
    Dataset data;
    data.features.resize(1, 1);
    data.features << 100.0;
    data.labels = {-1};  // positive w misclassifies, loss ~ 100 w
    DroProblem p = make_problem(std::move(data), logistic_model(), 0.5, 1e-3, 1.0);
    Point x;
    x.w = Vec::Constant(1, 1.0);
    x.lambda = 1e-3;
    CHECK_THROWS_AS(g_value(p, 0, x), OverflowGuardError);
    try {
        g_value(p, 0, x);
    } catch (const OverflowGuardError& err) {
        CHECK(err.sample == 0);
        CHECK(err.exponent > 300.0);
    }
}

TEST_CASE("outer map values") {
    CHECK(f_lambda(1.0, 2.0, 0.3) == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(f_lambda(std::exp(1.0), 1.0, 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(f_lambda(2.0, 0.5, 0.1) ==
          doctest::Approx(0.5 * std::log(2.0) + 0.05).epsilon(1e-14));

    long clamps = 0;
    CHECK(f_lambda(0.9, 2.0, 0.3, &clamps) == doctest::Approx(0.6));
    CHECK(clamps == 1);
}

TEST_CASE("outer gradient lies in (0, lambda]") {
    CHECK(grad_f_lambda(1.0, 3.0) == doctest::Approx(3.0));
    Rng rng(17);
    for (int t = 0; t < 10000; ++t) {
        const double lambda = rng.uniform(0.01, 5.0);
        const double s = 1.0 + 99.0 * rng.uniform01();
        const double g = grad_f_lambda(s, lambda);
        CHECK(g > 0.0);
        CHECK(g <= lambda);
    }
    const double lam = 1.7;
    CHECK(grad_f_lambda(lam, lam) == doctest::Approx(1.0));
}

TEST_CASE("objective at near-zero losses reduces to lambda rho") {
    Dataset data;
    data.features.resize(2, 2);
    data.features << 50.0, 0.0, 50.0, 0.0;
    data.labels = {1, 1};
    DroProblem p = make_problem(std::move(data), logistic_model(), 0.2, 0.01, 1.0);
    Point x;
    x.w = (Vec(2) << 1.0, 0.0).finished();
    x.lambda = 0.5;
    CHECK(F_exact(p, x) == doctest::Approx(0.1).epsilon(1e-14));
}

TEST_CASE("objective on losses (0, ln 3) at unit temperature is ln 2") {
    Dataset data;
    data.features.resize(2, 2);
    data.features << 50.0, 0.0, -std::log(2.0), 0.0;
    data.labels = {1, 1};
    DroProblem p = make_problem(std::move(data), logistic_model(), 1e-9, 0.01, 1.5);
    Point x;
    x.w = (Vec(2) << 1.0, 0.0).finished();
    x.lambda = 1.0;
    REQUIRE(loss_value(p.loss, p.data, 1, x.w) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
    CHECK(F_exact(p, x) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("log-sum-exp path equals the naive formula where the latter is safe") {
    Rng rng(21);
    const DroProblem p = small_problem(rng, 30, 5);
    for (int t = 0; t < 100; ++t) {
        const Point x = random_feasible_point(p, rng);
        const Vec losses = loss_vector(p, x.w);
        const double stable = F_exact(p, x);
        const double naive = testutil::naive_objective(losses, x.lambda, p.rho);
        CHECK(std::abs(stable - naive) / std::abs(naive) <= 1e-13);
    }
}

TEST_CASE("gradient collapses to rho in the temperature for uniform losses") {
    Dataset data;
    data.features.resize(3, 2);
    data.features << 1.0, 0.5, 1.0, 0.5, 1.0, 0.5;
    data.labels = {1, 1, 1};
    DroProblem p = make_problem(std::move(data), logistic_model(), 0.3, 0.05, 2.0);
    Point x;
    x.w = (Vec(2) << -0.4, 0.8).finished();
    x.lambda = 0.7;
    Vec gw;
    double gl;
    grad_F_exact(p, x, gw, gl);
    CHECK(gl == doctest::Approx(p.rho).epsilon(1e-12));
    Vec mean = Vec::Zero(2);
    for (int i = 0; i < 3; ++i) mean += loss_grad(p.loss, p.data, i, x.w) / 3.0;
    CHECK((gw - mean).norm() <= 1e-12);
}

TEST_CASE("full gradient matches finite differences (master check)") {
    Rng rng(25);
    const DroProblem p = small_problem(rng, 20, 4);
    for (int t = 0; t < 60; ++t) {
        const Point x = random_feasible_point(p, rng);
        Vec gw;
        double gl;
        grad_F_exact(p, x, gw, gl);
        auto value = [&](const Point& y) {
            return objective_from_losses(loss_vector(p, y.w), y.lambda, p.rho);
        };
        Vec fd(5);
        const double h = 1e-6;
        for (int c = 0; c < 5; ++c) {
            Point hi = x, lo = x;
            if (c < 4) {
                hi.w[c] += h;
                lo.w[c] -= h;
            } else {
                hi.lambda += h;
                lo.lambda -= h;
            }
            fd[c] = (value(hi) - value(lo)) / (2 * h);
        }
        Vec exact(5);
        exact.head(4) = gw;
        exact[4] = gl;
        CHECK((exact - fd).norm() / (1.0 + exact.norm()) <= 1e-5);
    }
}

TEST_CASE("ridge objective and gradient") {
    Rng rng(27);
    const DroProblem p = small_problem(rng, 8, 3);
    const Point x = random_feasible_point(p, rng);

    CHECK(F_mu_exact(p, x, 0.0) == F_exact(p, x));

    Point origin;
    origin.w = Vec::Zero(3);
    origin.lambda = p.lambda_min;
    const double mu = 0.3;
    CHECK(F_mu_exact(p, origin, mu) - F_exact(p, origin) ==
          doctest::Approx(0.5 * mu * p.lambda_min * p.lambda_min).epsilon(1e-13));

    Vec gw;
    double gl;
    grad_F_mu_exact(p, x, mu, gw, gl);
    auto value = [&](const Point& y) {
        return objective_from_losses(loss_vector(p, y.w), y.lambda, p.rho) +
               0.5 * mu * y.squared_norm();
    };
    const double h = 1e-6;
    Point hi = x, lo = x;
    hi.lambda += h;
    lo.lambda -= h;
    CHECK(std::abs(gl - (value(hi) - value(lo)) / (2 * h)) / (1.0 + std::abs(gl)) <= 1e-5);
}

TEST_CASE("worst-case weights: two-point and uniform cases") {
    Dataset data;
    data.features.resize(2, 2);
    data.features << 50.0, 0.0, -std::log(2.0), 0.0;  // losses (~0, ln 3) at w = e1
    data.labels = {1, 1};
    DroProblem p = make_problem(std::move(data), logistic_model(), 1e-9, 0.01, 1.5);
    Point x;
    x.w = (Vec(2) << 1.0, 0.0).finished();
    x.lambda = 1.0;
    const Vec probs = p_star(p, x);
    CHECK(probs[0] == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(probs[1] == doctest::Approx(0.75).epsilon(1e-9));
    CHECK(probs.sum() == doctest::Approx(1.0).epsilon(1e-12));

    Rng rng(33);
    const DroProblem q = small_problem(rng, 7, 3);
    Point origin;
    origin.w = Vec::Zero(3);
    origin.lambda = 1.0;
    // At w = 0 every logistic loss is log 2: uniform weights.
    const Vec u = p_star(q, origin);
    for (int i = 0; i < 7; ++i) CHECK(u[i] == doctest::Approx(1.0 / 7).epsilon(1e-12));
}

TEST_CASE("worst-case weights match the iterative inner maximizer") {
    Rng rng(37);
    const DroProblem p = small_problem(rng, 10, 4);
    const Point x = random_feasible_point(p, rng);
    const Vec analytic = p_star(p, x);
    const Vec losses = loss_vector(p, x.w);
    const Vec iterative = inner_max_mirror_ascent(losses, x.lambda, 100000);
    CHECK((analytic - iterative).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("no simplex perturbation improves on the closed-form maximizer") {
    Rng rng(41);
    const DroProblem p = small_problem(rng, 8, 3);
    const Point x = random_feasible_point(p, rng);
    const Vec losses = loss_vector(p, x.w);
    const Vec star = p_star(p, x);
    const double best = inner_objective(star, losses, x.lambda);
    for (int t = 0; t < 1000; ++t) {
        Vec dir = rng.normal_vec(8);
        dir.array() -= dir.mean();  // stay on the simplex plane
        double eps = 0.5;
        Vec cand = star + eps * dir;
        while (cand.minCoeff() < 0) {
            eps *= 0.5;
            cand = star + eps * dir;
        }
        cand /= cand.sum();
        CHECK(inner_objective(cand, losses, x.lambda) <= best + 1e-9);
    }
}

TEST_CASE("kl divergence values and input validation") {
    CHECK(kl_divergence(Vec::Constant(4, 0.25)) == doctest::Approx(0.0));
    Vec point_mass = Vec::Zero(4);
    point_mass[0] = 1.0;
    CHECK(kl_divergence(point_mass) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    const Vec two = (Vec(2) << 0.25, 0.75).finished();
    const double want = 0.25 * std::log(0.5) + 0.75 * std::log(1.5);
    CHECK(kl_divergence(two) == doctest::Approx(want).epsilon(1e-14));
    CHECK(want == doctest::Approx(0.130812).epsilon(1e-5));

    CHECK_THROWS_AS(kl_divergence((Vec(2) << 0.5, 0.6).finished()), DataError);
    CHECK_THROWS_AS(kl_divergence((Vec(2) << -0.1, 1.1).finished()), DataError);
}

TEST_CASE("temperature cap formula") {
    CHECK(lambda_tilde(2.0, 0.5, 0.001) == doctest::Approx(4.001).epsilon(1e-14));
    CHECK(lambda_tilde(1.0, 1.0, 1.0) == doctest::Approx(2.0));
    CHECK_THROWS_AS(lambda_tilde(0.0, 0.5, 0.1), ConfigError);
    CHECK_THROWS_AS(lambda_tilde(1.0, -0.5, 0.1), ConfigError);
}

TEST_CASE("smoothness constants follow the closed forms") {
    DroProblem p;  // filled by hand: unit bounds, unit floor, cap 2
    p.bounds = {1.0, 1.0, 1.0};
    p.lambda_min = 1.0;
    p.rho = 1.0;
    p.domain = {1.0, 1.0, 2.0};
    const SmoothnessConstants s = smoothness_constants(p);
    const double e = std::exp(1.0);
    CHECK(s.inner_value_lip == doctest::Approx(2 * e).epsilon(1e-14));
    CHECK(s.w_grad_w_lip == doctest::Approx(2 * e).epsilon(1e-14));
    CHECK(s.w_grad_lambda_lip == doctest::Approx(2 * e).epsilon(1e-14));
    CHECK(s.lambda_grad_w_lip == doctest::Approx(2 * e).epsilon(1e-14));
    CHECK(s.lambda_grad_lambda_lip == doctest::Approx(3 * e).epsilon(1e-14));
    CHECK(s.inner_grad_lip == doctest::Approx(std::sqrt(21.0) * e).epsilon(1e-14));
    const double lf = 2.0 * 4 * e * e + 2.0 * 2 * e + 2.0 * std::sqrt(21.0) * e + 1.0 + 2.0;
    CHECK(s.objective_smooth == doctest::Approx(lf).epsilon(1e-14));
}

TEST_CASE("dual identity between the compositional and weighted forms") {
    Rng rng(45);
    const DroProblem p = small_problem(rng, 25, 4);
    for (int t = 0; t < 100; ++t) {
        const Point x = random_feasible_point(p, rng);
        const Vec losses = loss_vector(p, x.w);
        const StarWeights star = p_star_full(p, x);
        const double lhs = x.lambda * star.log_mean;
        const double rhs = star.probs.dot(losses) - x.lambda * kl_divergence(star.probs);
        CHECK(std::abs(lhs - rhs) <= 1e-10);
    }
}

TEST_CASE("infeasible points are rejected") {
    Rng rng(49);
    const DroProblem p = small_problem(rng, 5, 3);
    Point x;
    x.w = Vec::Constant(3, 10.0);
    x.lambda = 1.0;
    CHECK_THROWS_AS(F_exact(p, x), ConfigError);
    x.w = Vec::Zero(3);
    x.lambda = p.domain.lambda_max * 2;
    CHECK_THROWS_AS(p_star(p, x), ConfigError);
}
