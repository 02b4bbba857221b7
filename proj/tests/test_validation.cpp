#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dro/validation.hpp"
#include "oracles.hpp"

#include <json.hpp>

#include <cmath>

using namespace dro;

namespace {

LossModel logistic_model() { return LossModel{LossKind::BinaryLogistic, {}}; }

DroProblem random_problem(Rng& rng, int n, int d, double rho = 0.5, double lambda0 = 0.5) {
    return make_problem(testutil::random_binary_dataset(rng, n, d), logistic_model(), rho,
                        lambda0, 1.0);
}

}  // namespace

TEST_CASE("report lines carry name, verdict, error, trials and a digest") {
    CheckReport r;
    r.name = "example";
    r.passed = true;
    r.worst_error = 1.5e-12;
    r.tolerance = 1e-10;
    r.trials = 42;
    r.witness = "{\"lambda\":1.0}";
    const std::string line = report_line(r);
    CHECK(line.find("check=example") != std::string::npos);
    CHECK(line.find("passed=1") != std::string::npos);
    CHECK(line.find("trials=42") != std::string::npos);
    CHECK(line.find("witness=") != std::string::npos);
}

TEST_CASE("witnesses round-trip through serialization") {
    Rng rng(3);
    const DroProblem p = random_problem(rng, 15, 3);
    Rng check_rng(5);
    const CheckReport r = check_dual_equivalence(p, 50, check_rng);
    const auto parsed = nlohmann::json::parse(r.witness);
    REQUIRE(parsed.contains("w"));
    REQUIRE(parsed.contains("lambda"));
    CHECK(parsed["w"].size() == 3);
    CHECK(std::isfinite(parsed["lambda"].get<double>()));
    CHECK(nlohmann::json::parse(parsed.dump()) == parsed);
}

TEST_CASE("dual equivalence holds on random problems") {
    Rng rng(7);
    for (int rep = 0; rep < 4; ++rep) {
        const DroProblem p = random_problem(rng, 5 + static_cast<int>(rng.index(30)), 4);
        Rng check_rng(100 + rep);
        const CheckReport r = check_dual_equivalence(p, 100, check_rng);
        CHECK(r.passed);
        CHECK(r.worst_error <= r.tolerance);
        CHECK(r.trials == 100);
    }
}

TEST_CASE("temperature search never exceeds the certified cap") {
    Rng rng(11);
    for (int rep = 0; rep < 5; ++rep) {
        const DroProblem p = random_problem(rng, 3 + static_cast<int>(rng.index(17)), 3,
                                            0.2 + rng.uniform01());
        Rng check_rng(200 + rep);
        const CheckReport r = check_lambda_bound(p, 20, check_rng);
        CHECK(r.passed);
    }
}

TEST_CASE("uniform losses push the best temperature to the floor") {
    // Equal rows make every loss identical, so the objective grows linearly
    // in the temperature and the floor is optimal.
    Dataset data;
    data.features.resize(3, 2);
    data.features << 1.0, 0.5, 1.0, 0.5, 1.0, 0.5;
    data.labels = {1, 1, 1};
    DroProblem p = make_problem(std::move(data), logistic_model(), 0.4, 0.25, 1.0);
    Vec w = (Vec(2) << 0.3, -0.1).finished();
    const Vec losses = loss_vector(p, w);
    const double best = golden_section_lambda(losses, p.rho, p.lambda_min,
                                              10.0 * p.domain.lambda_max);
    CHECK(best == doctest::Approx(p.lambda_min).epsilon(1e-6));
}

TEST_CASE("gradient check passes for the exact gradients") {
    Rng rng(13);
    const DroProblem p = random_problem(rng, 25, 4);
    Rng check_rng(17);
    const CheckReport r = check_gradients(p, 60, check_rng);
    CHECK(r.passed);
    CHECK(r.worst_error <= 1e-5);
}

TEST_CASE("quadratic growth check passes for convex losses and refuses the mlp") {
    Rng rng(19);
    const DroProblem p = random_problem(rng, 60, 4);
    Rng check_rng(23);
    const CheckReport r = check_kl_inequality(p, 0.1, 200, check_rng);
    CHECK(r.passed);

    LossModel mlp;
    mlp.kind = LossKind::TanhMlp;
    mlp.mlp = {4, 3};
    DroProblem q = make_problem(testutil::random_multiclass_dataset(rng, 10, 3, 3), mlp,
                                0.5, 0.5, 1.0);
    Rng other(29);
    CHECK_THROWS_AS(check_kl_inequality(q, 0.1, 10, other), ConfigError);
}

TEST_CASE("sampled smoothness stays within the certified constant") {
    Rng rng(31);
    const DroProblem p = random_problem(rng, 20, 3);
    Rng check_rng(37);
    const CheckReport r = check_smoothness(p, 300, check_rng);
    CHECK(r.passed);
}

TEST_CASE("the check suite is deterministic under a fixed seed") {
    Rng rng(41);
    const DroProblem p = random_problem(rng, 20, 3);
    const auto a = run_all_checks(p, 12345);
    const auto b = run_all_checks(p, 12345);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        CHECK(a[i].worst_error == b[i].worst_error);
        CHECK(a[i].passed == b[i].passed);
        CHECK(a[i].passed == (a[i].worst_error <= a[i].tolerance));
    }
}

TEST_CASE("tracking error vanishes for single-sample plug-in updates") {
    Rng rng(43);
    Dataset data = testutil::random_binary_dataset(rng, 1, 3);
    DroProblem p = make_problem(std::move(data), logistic_model(), 0.5, 0.5, 1.0);
    Point x1;
    x1.w = Vec::Zero(3);
    x1.lambda = 1.0;
    Rng run_rng(47);
    const auto trace = storm_error_trace(p, x1, constant_schedule(1.0, 0.01, 200), run_rng);
    REQUIRE(trace.size() == 200);
    for (double e : trace) CHECK(e <= 1e-24);
}

TEST_CASE("frozen-point tracking error decays geometrically") {
    Rng rng(53);
    const DroProblem p = random_problem(rng, 50, 3);
    Point x1;
    x1.w = Vec::Zero(3);
    x1.lambda = 1.0;

    const double beta = 0.05;
    const int window = 30, seeds = 200;
    std::vector<double> mean(window, 0.0);
    for (int s = 0; s < seeds; ++s) {
        Rng run_rng(1000 + s);
        // vanishing step freezes the iterate; only the trackers move
        const auto trace =
            storm_error_trace(p, x1, constant_schedule(beta, 1e-300, window), run_rng);
        for (int t = 0; t < window; ++t) mean[t] += trace[t] / seeds;
    }
    // least-squares slope of log(mean error) vs iteration
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int t = 0; t < window; ++t) {
        sx += t;
        sy += std::log(mean[t]);
        sxx += double(t) * t;
        sxy += t * std::log(mean[t]);
    }
    const double slope = (window * sxy - sx * sy) / (window * sxx - sx * sx);
    const double want = 2.0 * std::log(1.0 - beta);
    CHECK(slope < want * 0.6);  // clearly decaying
    CHECK(slope > want * 1.6);  // and not faster than the contraction allows
}

TEST_CASE("tracking traces refuse oversized problems") {
    Rng rng(59);
    const DroProblem p = random_problem(rng, 30, 3);
    Point x1;
    x1.w = Vec::Zero(3);
    x1.lambda = 1.0;
    Rng run_rng(61);
    CHECK_THROWS_AS(storm_error_trace(p, x1, constant_schedule(0.5, 0.01, 10), run_rng, 20),
                    ConfigError);
}

TEST_CASE("reference minimum is stationary to tolerance") {
    Rng rng(67);
    const DroProblem p = random_problem(rng, 40, 4);
    const double mu = 0.2;
    const Point x = reference_minimum(p, mu, 1e-10);
    Vec gw;
    double gl;
    grad_F_mu_exact(p, x, mu, gw, gl);
    CHECK(dist_to_subdifferential(x, gw, gl, p.domain) <= 1e-10);
}

TEST_CASE("mirror ascent reaches the analytic inner maximum from below") {
    Rng rng(71);
    const DroProblem p = random_problem(rng, 20, 3);
    const Point x = random_feasible_point(p, rng);
    const Vec losses = loss_vector(p, x.w);
    const StarWeights star = p_star_full(p, x);
    const double analytic = x.lambda * star.log_mean;
    const Vec iter = inner_max_mirror_ascent(losses, x.lambda, 100000);
    const double val = inner_objective(iter, losses, x.lambda);
    CHECK(val <= analytic + 1e-9);
    CHECK(val >= analytic - 1e-6);
}
