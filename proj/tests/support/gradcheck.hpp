#pragma once

#include <algorithm>

#include "finite_diff.hpp"
#include "jscc/nn/layers.hpp"
#include "jscc/nn/random.hpp"

namespace jscc::testing {

struct GradCheck {
    double input_err = 0.0;
    double param_err = 0.0;
    double worst() const { return std::max(input_err, param_err); }
};

inline nn::Tensor random_tensor(std::vector<std::size_t> shape, nn::Rng& rng, double scale = 1.0) {
    nn::Tensor t(std::move(shape));
    for (double& v : t.data()) v = scale * rng.normal();
    return t;
}

/// Checks a layer's backward pass against central differences of the scalar
/// objective sum(w * layer(x)) with random weights w.
inline GradCheck check_layer(nn::Layer& layer, nn::Tensor x, nn::Mode mode, nn::Rng& rng) {
    const nn::Tensor y0 = layer.forward(x, mode);
    const nn::Tensor w = random_tensor(y0.shape(), rng);
    auto objective = [&] {
        const nn::Tensor y = layer.forward(x, mode);
        double s = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) s += w[k] * y[k];
        return s;
    };

    layer.zero_grad();
    layer.forward(x, mode);
    const nn::Tensor dx = layer.backward(w);
    std::vector<double> analytic_params;
    std::vector<double*> param_coords;
    for (auto& p : layer.params()) {
        analytic_params.insert(analytic_params.end(), p.grad->data().begin(), p.grad->data().end());
        for (double& v : p.value->data()) param_coords.push_back(&v);
    }

    GradCheck out;
    out.input_err = relative_error(dx.data(), numeric_gradient(objective, coords_of(x.data())));
    if (!param_coords.empty())
        out.param_err = relative_error(analytic_params, numeric_gradient(objective, param_coords));
    return out;
}

} // namespace jscc::testing
