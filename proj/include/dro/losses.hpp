#pragma once

#include "dro/common.hpp"
#include "dro/dataset.hpp"

namespace dro {

enum class LossKind {
    BinaryLogistic,  // log(1 + exp(-y w'a)), convex, nonnegative
    TanhMlp,         // one tanh hidden layer + softmax cross-entropy, smooth non-convex
};

struct MlpShape {
    int hidden = 8;
    int classes = 2;
};

struct LossModel {
    LossKind kind = LossKind::BinaryLogistic;
    MlpShape mlp{};  // used only for TanhMlp

    /// Number of entries of the weight vector for a given feature dimension.
    int param_dim(int feature_dim) const {
        if (kind == LossKind::BinaryLogistic) return feature_dim;
        const int h = mlp.hidden, k = mlp.classes;
        return h * feature_dim + h + k * h + k;
    }
};

/**
 * Certified bounds on a per-sample loss over the ball of a given radius:
 * value_bound    >= sup_i sup_{|w|<=R} loss,
 * grad_bound     >= sup norm of the loss gradient,
 * smooth_bound   >= sup spectral norm of the loss Hessian.
 * The logistic bounds are exact closed forms; the MLP bounds come from
 * conservative layer-norm bounds.
 */
struct LossBounds {
    double value_bound = 0;   // C
    double grad_bound = 0;    // G
    double smooth_bound = 0;  // L
};

/// Per-sample loss value; nonnegative and finite for finite inputs.
double loss_value(const LossModel& model, const Dataset& data, int i, const Vec& w);

/// Loss value and exact analytic gradient in one pass. grad is resized as needed.
double loss_value_grad(const LossModel& model, const Dataset& data, int i, const Vec& w,
                       Vec& grad);

Vec loss_grad(const LossModel& model, const Dataset& data, int i, const Vec& w);

/// Closed-form bounds over the ball {|w| <= radius}.
LossBounds loss_bounds(const LossModel& model, const Dataset& data, double radius);

/// Fraction of samples classified correctly: sign of the linear score for the
/// logistic model, argmax of the logits for the MLP.
double train_accuracy(const LossModel& model, const Dataset& data, const Vec& w);

}  // namespace dro
