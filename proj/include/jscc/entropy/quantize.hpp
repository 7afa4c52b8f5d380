#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "jscc/channel/noise.hpp"
#include "jscc/nn/tensor.hpp"

namespace jscc::entropy {

using nn::Tensor;

/// Training-time quantization proxy: r + u, u ~ U[-1/2, 1/2). d(out)/d(in) = I.
inline Tensor quantize_train(const Tensor& r, channel::NoiseSource& noise) {
    Tensor out = r;
    for (double& v : out.data()) v += noise.uniform(-0.5, 0.5);
    return out;
}

/// Round half away from zero.
inline Tensor quantize_eval(const Tensor& r) {
    Tensor out = r;
    for (double& v : out.data()) v = std::round(v);
    return out;
}

inline std::vector<std::int64_t> to_symbols(const Tensor& q) {
    std::vector<std::int64_t> s(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) s[i] = static_cast<std::int64_t>(q[i]);
    return s;
}

/// Contiguous symbol range [q_min, q_max]; values outside use the escape slot.
struct SymbolAlphabet {
    std::int64_t q_min = -8;
    std::int64_t q_max = 8;

    std::size_t size() const { return static_cast<std::size_t>(q_max - q_min + 1); }
    bool contains(std::int64_t q) const { return q >= q_min && q <= q_max; }

    /// [min - margin, max + margin] over the observed values.
    static SymbolAlphabet covering(const std::vector<std::int64_t>& values, std::int64_t margin = 4) {
        if (values.empty()) return {-margin, margin};
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        return {*lo - margin, *hi + margin};
    }
};

} // namespace jscc::entropy
