#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dro/losses.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace dro;

namespace {
LossModel logistic_model() { return LossModel{LossKind::BinaryLogistic, {}}; }

LossModel mlp_model(int hidden, int classes) {
    LossModel m;
    m.kind = LossKind::TanhMlp;
    m.mlp = {hidden, classes};
    return m;
}
}  // namespace

TEST_CASE("logistic value at zero margin is log 2") {
    Dataset data;
    data.features.resize(1, 3);
    data.features << 1.0, -2.0, 0.5;
    data.labels = {1};
    const Vec w = Vec::Zero(3);
    CHECK(loss_value(logistic_model(), data, 0, w) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("logistic saturates for huge positive margins") {
    Dataset data;
    data.features.resize(1, 2);
    data.features << 50.0, 0.0;
    data.labels = {1};
    Vec w(2);
    w << 1.0, 0.0;  // margin 50
    CHECK(loss_value(logistic_model(), data, 0, w) <= 2e-22);
    const Vec g = loss_grad(logistic_model(), data, 0, w);
    CHECK(g.norm() <= 2e-22 * data.features.row(0).norm());
}

TEST_CASE("logistic gradient at zero margin is -y a / 2") {
    Rng rng(7);
    Dataset data = testutil::random_binary_dataset(rng, 4, 5);
    const Vec w = Vec::Zero(5);
    for (int i = 0; i < data.n(); ++i) {
        const Vec g = loss_grad(logistic_model(), data, i, w);
        const Vec want = -0.5 * data.labels[i] * data.features.row(i).transpose();
        CHECK((g - want).norm() <= 1e-14);
    }
}

TEST_CASE("gradients match central finite differences") {
    Rng rng(11);
    const Dataset bin = testutil::random_binary_dataset(rng, 8, 6);
    const Dataset multi = testutil::random_multiclass_dataset(rng, 8, 4, 3);
    const LossModel models[] = {logistic_model(), mlp_model(5, 3)};
    const Dataset* sets[] = {&bin, &multi};

    for (int m = 0; m < 2; ++m) {
        const LossModel& model = models[m];
        const Dataset& data = *sets[m];
        for (int trial = 0; trial < 50; ++trial) {
            const int i = static_cast<int>(rng.index(data.n()));
            const Vec w = 0.7 * rng.normal_vec(model.param_dim(data.d()));
            const Vec g = loss_grad(model, data, i, w);
            Vec fd(w.size());
            for (int c = 0; c < w.size(); ++c)
                fd[c] = testutil::central_diff(
                    [&](const Vec& v) { return loss_value(model, data, i, v); }, w, c);
            CHECK((g - fd).norm() / (1.0 + g.norm()) <= 1e-6);
        }
    }
}

TEST_CASE("logistic bounds have the closed form") {
    Dataset data;
    data.features.resize(1, 2);
    data.features << 0.6, 0.8;  // unit norm
    data.labels = {1};
    const LossBounds b = loss_bounds(logistic_model(), data, 1.0);
    CHECK(b.value_bound == doctest::Approx(std::log(1.0 + std::exp(1.0))).epsilon(1e-13));
    CHECK(b.grad_bound == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(b.smooth_bound == doctest::Approx(0.25).epsilon(1e-13));
}

TEST_CASE("zero feature vector gives the constant loss bounds") {
    Dataset data;
    data.features = RowMat::Zero(1, 3);
    data.labels = {-1};
    const LossBounds b = loss_bounds(logistic_model(), data, 2.0);
    CHECK(b.value_bound == doctest::Approx(std::log(2.0)));
    CHECK(b.grad_bound == 0.0);
    CHECK(b.smooth_bound == 0.0);
}

TEST_CASE("mlp at w = 0 equals the constant-zero predictor loss") {
    Rng rng(3);
    const int classes = 4;
    const Dataset data = testutil::random_multiclass_dataset(rng, 5, 3, classes);
    const LossModel model = mlp_model(6, classes);
    const Vec w = Vec::Zero(model.param_dim(data.d()));
    for (int i = 0; i < data.n(); ++i) {
        const double got = loss_value(model, data, i, w);
        const double ref = testutil::mlp_forward_reference(
            w, data.features.row(i).transpose(), data.labels[i], 6, classes);
        CHECK(got == doctest::Approx(ref).epsilon(1e-14));
        CHECK(got == doctest::Approx(std::log(double(classes))).epsilon(1e-14));
    }
}

TEST_CASE("mlp value matches an independent forward pass at random weights") {
    Rng rng(19);
    const Dataset data = testutil::random_multiclass_dataset(rng, 6, 4, 3);
    const LossModel model = mlp_model(5, 3);
    for (int t = 0; t < 30; ++t) {
        const int i = static_cast<int>(rng.index(data.n()));
        const Vec w = rng.normal_vec(model.param_dim(data.d()));
        const double got = loss_value(model, data, i, w);
        const double ref = testutil::mlp_forward_reference(
            w, data.features.row(i).transpose(), data.labels[i], 5, 3);
        CHECK(got == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("bounds dominate sampled values and gradients") {
    Rng rng(23);
    const double radius = 1.5;
    const Dataset bin = testutil::random_binary_dataset(rng, 6, 5);
    const Dataset multi = testutil::random_multiclass_dataset(rng, 6, 4, 3);
    const LossModel models[] = {logistic_model(), mlp_model(4, 3)};
    const Dataset* sets[] = {&bin, &multi};
    for (int m = 0; m < 2; ++m) {
        const LossModel& model = models[m];
        const Dataset& data = *sets[m];
        const LossBounds b = loss_bounds(model, data, radius);
        double worst_value = 0, worst_grad = 0;
        for (int t = 0; t < 10000; ++t) {
            Vec w = rng.normal_vec(model.param_dim(data.d()));
            w *= radius / w.norm();  // sphere of the given radius
            const int i = static_cast<int>(rng.index(data.n()));
            Vec g;
            const double v = loss_value_grad(model, data, i, w, g);
            CHECK(v >= 0.0);
            worst_value = std::max(worst_value, v);
            worst_grad = std::max(worst_grad, g.norm());
        }
        CHECK(worst_value <= b.value_bound);
        CHECK(worst_grad <= b.grad_bound);
    }
}

TEST_CASE("logistic loss is convex along segments") {
    Rng rng(29);
    const Dataset data = testutil::random_binary_dataset(rng, 5, 4);
    const LossModel model = logistic_model();
    for (int trial = 0; trial < 200; ++trial) {
        const int i = static_cast<int>(rng.index(data.n()));
        const Vec w1 = rng.normal_vec(4), w2 = rng.normal_vec(4);
        const double t = rng.uniform01();
        const double mix = loss_value(model, data, i, t * w1 + (1 - t) * w2);
        const double bound =
            t * loss_value(model, data, i, w1) + (1 - t) * loss_value(model, data, i, w2);
        CHECK(mix <= bound + 1e-12);
    }
}

TEST_CASE("index and dimension errors are rejected") {
    Rng rng(31);
    const Dataset data = testutil::random_binary_dataset(rng, 3, 4);
    const Vec w = Vec::Zero(4);
    CHECK_THROWS_AS(loss_value(logistic_model(), data, 3, w), DataError);
    CHECK_THROWS_AS(loss_value(logistic_model(), data, -1, w), DataError);
    CHECK_THROWS_AS(loss_value(logistic_model(), data, 0, Vec::Zero(5)), DataError);
    CHECK_THROWS_AS(loss_bounds(logistic_model(), data, 0.0), ConfigError);
}

TEST_CASE("accuracy is the sign / argmax match rate") {
    Dataset data;
    data.features.resize(2, 2);
    data.features << 1.0, 0.0, -1.0, 0.0;
    data.labels = {1, 1};
    Vec w(2);
    w << 1.0, 0.0;
    CHECK(train_accuracy(logistic_model(), data, w) == doctest::Approx(0.5));
}
