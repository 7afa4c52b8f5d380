#pragma once

// Central finite-difference oracle used to check analytic gradients. It only
// perturbs raw coordinates and re-evaluates the scalar objective, so it shares
// no code with any backward pass.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace jscc::testing {

inline std::vector<double> numeric_gradient(const std::function<double()>& objective,
                                            const std::vector<double*>& coords, double step = 1e-6) {
    std::vector<double> g(coords.size());
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const double saved = *coords[i];
        *coords[i] = saved + step;
        const double up = objective();
        *coords[i] = saved - step;
        const double down = objective();
        *coords[i] = saved;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

inline std::vector<double*> coords_of(std::vector<double>& v) {
    std::vector<double*> out;
    for (double& x : v) out.push_back(&x);
    return out;
}

/// |a - b|_2 / max(|a|_2, |b|_2), 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

} // namespace jscc::testing
