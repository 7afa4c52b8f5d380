#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "jscc/nn/tensor.hpp"

namespace jscc::nn {

struct LossResult {
    double value = 0.0;
    Tensor grad;  // dL/d(input), same shape as the prediction
};

namespace detail {
// log(1 + e^x) without overflow.
inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
} // namespace detail

/// Sigmoid cross-entropy with a per-class weight on the positive term, averaged
/// over batch and classes:
///   l = w_c * y * softplus(-z) + (1 - y) * softplus(z)
inline LossResult weighted_bce_loss(const Tensor& logits, const Tensor& targets,
                                    std::span<const double> pos_weights) {
    logits.require_same_shape(targets, "weighted_bce_loss");
    const std::size_t classes = logits.cols();
    if (pos_weights.size() != classes) {
        throw DimensionError("weighted_bce_loss: " + std::to_string(pos_weights.size()) +
                             " weights for " + std::to_string(classes) + " classes");
    }
    LossResult out{0.0, Tensor(logits.shape())};
    const double scale = 1.0 / static_cast<double>(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        const double y = targets[k];
        if (y != 0.0 && y != 1.0) throw Error("weighted_bce_loss: non-binary target " + std::to_string(y));
        const double z = logits[k];
        const double w = pos_weights[k % classes];
        out.value += w * y * detail::softplus(-z) + (1.0 - y) * detail::softplus(z);
        const double s = 1.0 / (1.0 + std::exp(-z));
        out.grad[k] = scale * (w * y * (s - 1.0) + (1.0 - y) * s);
    }
    out.value *= scale;
    return out;
}

/// Mean absolute error; subgradient 0 at exact ties.
inline LossResult l1_loss(const Tensor& pred, const Tensor& target) {
    pred.require_same_shape(target, "l1_loss");
    LossResult out{0.0, Tensor(pred.shape())};
    const double scale = 1.0 / static_cast<double>(pred.size());
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const double d = pred[k] - target[k];
        out.value += std::abs(d);
        out.grad[k] = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
    }
    out.value *= scale;
    return out;
}

/// (#negatives / #positives) per class, clamped to [lo, hi]. A class with no
/// positives gets `hi`.
inline std::vector<double> imbalance_pos_weights(const Tensor& labels, double lo = 0.05,
                                                 double hi = 20.0) {
    const std::size_t classes = labels.cols();
    std::vector<double> pos(classes, 0.0);
    for (std::size_t r = 0; r < labels.rows(); ++r)
        for (std::size_t c = 0; c < classes; ++c) pos[c] += labels.at(r, c);
    std::vector<double> w(classes);
    const double n = static_cast<double>(labels.rows());
    for (std::size_t c = 0; c < classes; ++c) {
        w[c] = pos[c] > 0.0 ? std::clamp((n - pos[c]) / pos[c], lo, hi) : hi;
    }
    return w;
}

} // namespace jscc::nn
