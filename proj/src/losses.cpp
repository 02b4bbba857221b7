#include "dro/losses.hpp"

#include <cmath>

namespace dro {

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) {
    if (x > 0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void check_sample(const Dataset& data, int i) {
    if (i < 0 || i >= data.n())
        throw DataError("sample index " + std::to_string(i) + " out of range");
}

void check_dim(const LossModel& model, const Dataset& data, const Vec& w) {
    if (w.size() != model.param_dim(data.d()))
        throw DataError("weight vector has dimension " + std::to_string(w.size()) +
                        ", model expects " + std::to_string(model.param_dim(data.d())));
}

struct MlpViews {
    Eigen::Map<const RowMat> w1;  // h x d
    Eigen::Map<const Vec> b1;     // h
    Eigen::Map<const RowMat> w2;  // k x h
    Eigen::Map<const Vec> b2;     // k
};

MlpViews mlp_views(const MlpShape& shape, int d, const Vec& w) {
    const int h = shape.hidden, k = shape.classes;
    const double* p = w.data();
    return MlpViews{
        Eigen::Map<const RowMat>(p, h, d),
        Eigen::Map<const Vec>(p + h * d, h),
        Eigen::Map<const RowMat>(p + h * d + h, k, h),
        Eigen::Map<const Vec>(p + h * d + h + k * h, k),
    };
}

// Forward pass; returns the cross-entropy loss and fills the intermediates
// needed for the backward pass.
double mlp_forward(const MlpShape& shape, const Dataset& data, int i, const Vec& w,
                   Vec& hidden, Vec& probs, int& cls) {
    const auto v = mlp_views(shape, data.d(), w);
    const auto a = data.features.row(i).transpose();
    hidden = (v.w1 * a + v.b1).array().tanh().matrix();
    Vec logits = v.w2 * hidden + v.b2;
    cls = class_index(data.labels[i], shape.classes);
    const double zmax = logits.maxCoeff();
    probs = (logits.array() - zmax).exp().matrix();
    const double zsum = probs.sum();
    probs /= zsum;
    // -log softmax(logits)[cls]
    return zmax + std::log(zsum) - logits[cls];
}

}  // namespace

double loss_value(const LossModel& model, const Dataset& data, int i, const Vec& w) {
    check_sample(data, i);
    check_dim(model, data, w);
    if (model.kind == LossKind::BinaryLogistic) {
        const double margin = data.labels[i] * data.features.row(i).dot(w);
        return softplus(-margin);
    }
    Vec hidden, probs;
    int cls;
    return mlp_forward(model.mlp, data, i, w, hidden, probs, cls);
}

double loss_value_grad(const LossModel& model, const Dataset& data, int i, const Vec& w,
                       Vec& grad) {
    check_sample(data, i);
    check_dim(model, data, w);
    if (model.kind == LossKind::BinaryLogistic) {
        const double y = data.labels[i];
        const double margin = y * data.features.row(i).dot(w);
        // d/dw log(1+exp(-m)) = -sigmoid(-m) y a
        grad = (-sigmoid(-margin) * y) * data.features.row(i).transpose();
        return softplus(-margin);
    }

    const int h = model.mlp.hidden, k = model.mlp.classes, d = data.d();
    Vec hidden, probs;
    int cls;
    const double value = mlp_forward(model.mlp, data, i, w, hidden, probs, cls);

    const auto v = mlp_views(model.mlp, d, w);
    const auto a = data.features.row(i).transpose();
    Vec dlogits = probs;
    dlogits[cls] -= 1.0;
    Vec dhidden = v.w2.transpose() * dlogits;
    Vec dz1 = dhidden.array() * (1.0 - hidden.array().square());

    grad.resize(w.size());
    double* p = grad.data();
    Eigen::Map<RowMat>(p, h, d).noalias() = dz1 * a.transpose();
    Eigen::Map<Vec>(p + h * d, h) = dz1;
    Eigen::Map<RowMat>(p + h * d + h, k, h).noalias() = dlogits * hidden.transpose();
    Eigen::Map<Vec>(p + h * d + h + k * h, k) = dlogits;
    return value;
}

Vec loss_grad(const LossModel& model, const Dataset& data, int i, const Vec& w) {
    Vec g;
    loss_value_grad(model, data, i, w, g);
    return g;
}

LossBounds loss_bounds(const LossModel& model, const Dataset& data, double radius) {
    if (radius <= 0) throw ConfigError("ball radius must be positive");
    data.validate();

    double max_norm = 0;
    for (int i = 0; i < data.n(); ++i)
        max_norm = std::max(max_norm, data.features.row(i).norm());

    LossBounds b;
    if (model.kind == LossKind::BinaryLogistic) {
        // Worst case at margin -R|a|: value log(1+exp(R|a|)), gradient norm |a|,
        // Hessian |a|^2 sigmoid'(m) <= |a|^2/4.
        b.value_bound = softplus(radius * max_norm);
        b.grad_bound = max_norm;
        b.smooth_bound = max_norm * max_norm / 4.0;
        return b;
    }

    // Layer-norm bounds for the tanh MLP. With |w| <= R every per-layer block
    // has Frobenius norm <= R, tanh outputs lie in [-1,1], and the softmax
    // cross-entropy is sqrt(2)-Lipschitz in the logits with unit-bounded
    // curvature, which gives the chained constants below.
    const double h = model.mlp.hidden;
    const double k = model.mlp.classes;
    const double a2 = max_norm * max_norm + 1.0;  // |(a,1)|^2 through the affine layer
    b.value_bound = std::log(k) + 2.0 * radius * (std::sqrt(h) + 1.0);
    const double jac_sq = h + 1.0 + radius * radius * a2;
    b.grad_bound = std::sqrt(2.0 * jac_sq);
    const double jac_lip = 3.0 * std::sqrt(a2) + radius * a2;
    b.smooth_bound = 2.0 * (jac_sq + std::sqrt(2.0) * jac_lip);
    return b;
}

double train_accuracy(const LossModel& model, const Dataset& data, const Vec& w) {
    int correct = 0;
    if (model.kind == LossKind::BinaryLogistic) {
        for (int i = 0; i < data.n(); ++i) {
            const double score = data.features.row(i).dot(w);
            const int pred = score >= 0 ? 1 : -1;
            if (pred == data.labels[i]) ++correct;
        }
    } else {
        Vec hidden, probs;
        int cls;
        for (int i = 0; i < data.n(); ++i) {
            mlp_forward(model.mlp, data, i, w, hidden, probs, cls);
            Eigen::Index argmax;
            probs.maxCoeff(&argmax);
            if (static_cast<int>(argmax) == cls) ++correct;
        }
    }
    return static_cast<double>(correct) / data.n();
}

}  // namespace dro
