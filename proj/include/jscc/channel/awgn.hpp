#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "jscc/channel/noise.hpp"
#include "jscc/nn/tensor.hpp"

namespace jscc::channel {

using nn::Tensor;

struct ChannelConfig {
    double snr_db = 0.0;
    int bandwidth = 16;  // real channel uses per transmission
    double power = 1.0;  // average power budget

    void validate() const {
        if (bandwidth < 1) throw ConfigError("channel bandwidth must be >= 1, got " + std::to_string(bandwidth));
        if (!(power > 0.0)) throw ConfigError("channel power must be > 0");
    }
};

/// Power split between the two users of a superimposed (NOMA) transmission.
enum class NomaPower {
    SplitTotal,  // each user at P/2, superposition has expected power P
    PerUser,     // each user at P
};

/// sigma^2 = P / 10^(snr/10).
inline double snr_to_noise_var(double snr_db, double power = 1.0) {
    return power / std::pow(10.0, snr_db / 10.0);
}

inline double noise_var_to_snr(double noise_var, double power = 1.0) {
    return 10.0 * std::log10(power / noise_var);
}

/// Bits per real channel use: C = 0.5 log2(1 + P / sigma^2).
inline double shannon_capacity(double power, double noise_var) {
    return 0.5 * std::log2(1.0 + power / noise_var);
}

/// Smallest SNR (dB) at which `total_bits` fit into `bandwidth` channel uses at
/// capacity. Zero bits need no SNR at all: returns -infinity.
inline double rate_to_required_snr(double total_bits, double bandwidth) {
    if (total_bits <= 0.0) return -std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(std::expm1(2.0 * total_bits / bandwidth * std::numbers::ln2));
}

/// Scales each row so its average power (1/B) sum x_i^2 equals `target`.
/// Zero rows pass through. Backward applies the exact Jacobian
///   dy/dx = (c/|x|) (I - x x^T / |x|^2),  c = sqrt(target * B).
class PowerNormalize {
public:
    explicit PowerNormalize(double target = 1.0) : target_(target) {}

    double target() const { return target_; }
    void set_target(double t) { target_ = t; }

    Tensor forward(const Tensor& x) {
        input_ = x;
        return infer(x);
    }

    Tensor infer(const Tensor& x) const {
        Tensor y = x;
        const std::size_t b = x.cols();
        const double c = std::sqrt(target_ * static_cast<double>(b));
        for (std::size_t r = 0; r < x.rows(); ++r) {
            auto row = y.row_span(r);
            double sq = 0.0;
            for (double v : row) sq += v * v;
            if (sq == 0.0) continue;
            const double s = c / std::sqrt(sq);
            for (double& v : row) v *= s;
        }
        return y;
    }

    Tensor backward(const Tensor& grad_out) const {
        Tensor dx = grad_out;
        const std::size_t b = input_.cols();
        const double c = std::sqrt(target_ * static_cast<double>(b));
        for (std::size_t r = 0; r < input_.rows(); ++r) {
            auto x = input_.row_span(r);
            auto g = dx.row_span(r);
            double sq = 0.0, xg = 0.0;
            for (std::size_t i = 0; i < b; ++i) {
                sq += x[i] * x[i];
                xg += x[i] * g[i];
            }
            if (sq == 0.0) continue;
            const double norm = std::sqrt(sq);
            for (std::size_t i = 0; i < b; ++i) g[i] = c / norm * (g[i] - x[i] * xg / sq);
        }
        return dx;
    }

private:
    double target_;
    Tensor input_;
};

/// Average power (1/B) sum x_i^2 of row r.
inline double average_power(const Tensor& x, std::size_t r) {
    double sq = 0.0;
    for (double v : x.row_span(r)) sq += v * v;
    return sq / static_cast<double>(x.cols());
}

/// y = x + z, z ~ N(0, noise_var) i.i.d. Gradient w.r.t. x is the identity.
inline Tensor awgn_transmit(const Tensor& x, double noise_var, NoiseSource& noise) {
    Tensor y = x;
    if (noise_var <= 0.0) return y;
    const double sd = std::sqrt(noise_var);
    for (double& v : y.data()) v += sd * noise.normal();
    return y;
}

/// Orthogonal access: user k occupies its own B_k channel uses with an
/// independent noise realization; the receiver sees the concatenation.
inline Tensor oma_compose(const Tensor& s1, const Tensor& s2, double noise_var, NoiseSource& noise) {
    Tensor y1 = awgn_transmit(s1, noise_var, noise);
    Tensor y2 = awgn_transmit(s2, noise_var, noise);
    return nn::concat_cols(y1, y2);
}

/// Non-orthogonal access: both users superimpose on the same B channel uses.
inline Tensor noma_compose(const Tensor& s1, const Tensor& s2, double noise_var, NoiseSource& noise) {
    if (!s1.same_shape(s2)) {
        throw DimensionError("noma_compose: user bandwidths differ, " + s1.shape_string() + " vs " +
                             s2.shape_string());
    }
    return awgn_transmit(s1 + s2, noise_var, noise);
}

} // namespace jscc::channel
