#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "jscc/nn/layers.hpp"
#include "jscc/nn/random.hpp"
#include "jscc/nn/tensor.hpp"

namespace jscc::entropy {

using nn::Tensor;

namespace detail {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Phi(b) - Phi(a) for a <= b, evaluated on whichever tail avoids cancellation.
inline double normal_mass(double a, double b) {
    constexpr double r = 1.0 / std::numbers::sqrt2;
    if (a >= 0.0) return 0.5 * (std::erfc(a * r) - std::erfc(b * r));
    if (b <= 0.0) return 0.5 * (std::erfc(-b * r) - std::erfc(-a * r));
    return 1.0 - 0.5 * std::erfc(b * r) - 0.5 * std::erfc(-a * r);
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

} // namespace detail

struct RateTerm {
    double bits_per_sample = 0.0;  // -sum log2 p(q) / rows
    Tensor grad_q;                 // d(weight * bits_per_sample) / dq
    std::size_t clamp_count = 0;   // symbols whose p(q) fell below the floor
};

/// Gaussian mixture density for the (i.i.d.) latent symbols:
///   alpha = softmax(weight_raw),  sigma = sigma_min + softplus(scale_raw).
/// The integer PMF integrates the density over [q - 1/2, q + 1/2].
class GmmEntropyModel {
public:
    static constexpr double kSigmaMin = 1e-3;
    static constexpr double kProbFloor = 1e-30;

    explicit GmmEntropyModel(std::size_t k = 1)
        : weight_raw_(Tensor({k})), means_(Tensor({k})), scale_raw_(Tensor({k}, detail::inverse_softplus(1.0))),
          weight_grad_(Tensor({k})), means_grad_(Tensor({k})), scale_grad_(Tensor({k})) {
        if (k == 0) throw ConfigError("gmm: mixture count must be >= 1");
    }

    /// Components spread over [-k/2, k/2] with unit scale.
    static GmmEntropyModel spread(std::size_t k) {
        GmmEntropyModel m(k);
        for (std::size_t i = 0; i < k; ++i)
            m.means_[i] = static_cast<double>(i) - 0.5 * static_cast<double>(k - 1);
        return m;
    }

    /// Builds from effective parameters; weights must be positive and sum to 1.
    static GmmEntropyModel from_params(const std::vector<double>& weights, const std::vector<double>& means,
                                       const std::vector<double>& scales) {
        const std::size_t k = weights.size();
        if (means.size() != k || scales.size() != k) throw DimensionError("gmm: parameter count mismatch");
        GmmEntropyModel m(k);
        for (std::size_t i = 0; i < k; ++i) {
            if (!(weights[i] > 0.0)) throw ConfigError("gmm: weights must be positive");
            if (!(scales[i] > kSigmaMin)) throw ConfigError("gmm: scale must exceed sigma_min");
            m.weight_raw_[i] = std::log(weights[i]);
            m.means_[i] = means[i];
            m.scale_raw_[i] = detail::inverse_softplus(scales[i] - kSigmaMin);
        }
        return m;
    }

    std::size_t components() const { return means_.size(); }

    std::vector<double> weights() const {
        const auto& w = weight_raw_.data();
        const double mx = *std::max_element(w.begin(), w.end());
        std::vector<double> a(w.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) sum += a[i] = std::exp(w[i] - mx);
        for (double& v : a) v /= sum;
        return a;
    }
    double mean(std::size_t k) const { return means_[k]; }
    double scale(std::size_t k) const { return kSigmaMin + detail::softplus(scale_raw_[k]); }

    double pdf(double x) const {
        const auto a = weights();
        double p = 0.0;
        for (std::size_t k = 0; k < components(); ++k) {
            const double s = scale(k);
            p += a[k] * detail::normal_pdf((x - mean(k)) / s) / s;
        }
        return p;
    }

    double cdf(double x) const {
        const auto a = weights();
        double c = 0.0;
        for (std::size_t k = 0; k < components(); ++k) c += a[k] * detail::normal_cdf((x - mean(k)) / scale(k));
        return c;
    }

    /// p(q) = F(q + 1/2) - F(q - 1/2); also valid for non-integer q (training path).
    double pmf(double q) const {
        const auto a = weights();
        double p = 0.0;
        for (std::size_t k = 0; k < components(); ++k) {
            const double s = scale(k);
            p += a[k] * detail::normal_mass((q - 0.5 - mean(k)) / s, (q + 0.5 - mean(k)) / s);
        }
        return p;
    }

    /// Average code length -sum log2 p(q_i) per row of `q`, with gradients of
    /// weight * rate accumulated into the model and returned for q.
    RateTerm rate_term(const Tensor& q, double weight = 1.0) {
        const std::size_t kc = components();
        const auto a = weights();
        std::vector<double> s(kc), mass(kc), dmass_dq(kc), dmass_ds(kc);
        for (std::size_t k = 0; k < kc; ++k) s[k] = scale(k);

        RateTerm out{0.0, Tensor(q.shape()), 0};
        const double rows = static_cast<double>(std::max<std::size_t>(q.rows(), 1));
        const double g_scale = weight / rows;
        std::vector<double> dw(kc, 0.0), dmu(kc, 0.0), dsig(kc, 0.0);
        for (std::size_t i = 0; i < q.size(); ++i) {
            double p = 0.0;
            for (std::size_t k = 0; k < kc; ++k) {
                const double lo = (q[i] - 0.5 - mean(k)) / s[k];
                const double hi = (q[i] + 0.5 - mean(k)) / s[k];
                mass[k] = detail::normal_mass(lo, hi);
                const double plo = detail::normal_pdf(lo), phi = detail::normal_pdf(hi);
                dmass_dq[k] = (phi - plo) / s[k];
                dmass_ds[k] = -(phi * hi - plo * lo) / s[k];
                p += a[k] * mass[k];
            }
            if (p < kProbFloor) {
                ++out.clamp_count;
                out.bits_per_sample += -std::log2(kProbFloor);
                continue;
            }
            out.bits_per_sample += -std::log2(p);
            // d(-log2 p)/dp
            const double c = -g_scale / (p * std::numbers::ln2);
            double dq = 0.0;
            for (std::size_t k = 0; k < kc; ++k) {
                dq += a[k] * dmass_dq[k];
                dmu[k] += c * (-a[k] * dmass_dq[k]);
                dsig[k] += c * a[k] * dmass_ds[k];
                dw[k] += c * a[k] * (mass[k] - p);
            }
            out.grad_q[i] = c * dq;
        }
        out.bits_per_sample /= rows;
        for (std::size_t k = 0; k < kc; ++k) {
            weight_grad_[k] += dw[k];
            means_grad_[k] += dmu[k];
            scale_grad_[k] += dsig[k] * nn::sigmoid(scale_raw_[k]);
        }
        return out;
    }

    std::vector<nn::Param> params() {
        return {{"weight_raw", &weight_raw_, &weight_grad_},
                {"means", &means_, &means_grad_},
                {"scale_raw", &scale_raw_, &scale_grad_}};
    }

    void zero_grad() {
        weight_grad_.fill(0.0);
        means_grad_.fill(0.0);
        scale_grad_.fill(0.0);
    }

private:
    Tensor weight_raw_, means_, scale_raw_;
    Tensor weight_grad_, means_grad_, scale_grad_;
};

} // namespace jscc::entropy
