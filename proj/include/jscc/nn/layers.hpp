#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "jscc/nn/random.hpp"
#include "jscc/nn/tensor.hpp"

namespace jscc::nn {

enum class Mode { Train, Eval };

/// Trainable parameter: value and gradient buffer of identical shape.
struct Param {
    std::string name;
    Tensor* value;
    Tensor* grad;
};

/// Named tensor exposed for checkpointing (parameters and running statistics).
struct NamedTensor {
    std::string name;
    Tensor* value;
};

/// A differentiable layer over (batch x features) tensors. `forward` caches what
/// `backward` needs; `infer` is the cache-free eval-mode pass, safe to call
/// concurrently on a trained layer.
class Layer {
public:
    virtual ~Layer() = default;

    virtual Tensor forward(const Tensor& x, Mode mode) = 0;
    /// Consumes dL/dy, accumulates parameter gradients, returns dL/dx.
    virtual Tensor backward(const Tensor& grad_out) = 0;
    virtual Tensor infer(const Tensor& x) const = 0;

    virtual std::vector<Param> params() { return {}; }
    virtual std::vector<NamedTensor> state() {
        std::vector<NamedTensor> out;
        for (auto& p : params()) out.push_back({p.name, p.value});
        return out;
    }
    virtual nlohmann::json topology() const = 0;
    virtual std::unique_ptr<Layer> clone() const = 0;

    void zero_grad() {
        for (auto& p : params()) p.grad->fill(0.0);
    }
};

namespace detail {

inline void require_features(const Tensor& x, std::size_t n, const char* layer) {
    if (x.rank() != 2 || x.cols() != n) {
        throw DimensionError(std::string(layer) + ": expected (batch x " + std::to_string(n) +
                             ") input, got " + x.shape_string());
    }
}

template <typename Derived>
class LayerBase : public Layer {
public:
    std::unique_ptr<Layer> clone() const override {
        return std::make_unique<Derived>(static_cast<const Derived&>(*this));
    }
};

} // namespace detail

/// Fully connected layer, y = x W^T + b with W stored (out x in).
class Dense : public detail::LayerBase<Dense> {
public:
    Dense(std::size_t in, std::size_t out)
        : weight_(Tensor::matrix(out, in)), bias_(Tensor({out})),
          weight_grad_(Tensor::matrix(out, in)), bias_grad_(Tensor({out})) {}

    /// Glorot-uniform weights, zero bias.
    Dense(std::size_t in, std::size_t out, Rng& rng) : Dense(in, out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        for (double& w : weight_.data()) w = rng.uniform(-limit, limit);
    }

    std::size_t in_features() const { return weight_.cols(); }
    std::size_t out_features() const { return weight_.rows(); }

    Tensor& weight() { return weight_; }
    Tensor& bias() { return bias_; }
    const Tensor& weight() const { return weight_; }
    const Tensor& bias() const { return bias_; }
    const Tensor& weight_grad() const { return weight_grad_; }
    const Tensor& bias_grad() const { return bias_grad_; }

    Tensor forward(const Tensor& x, Mode) override {
        input_ = x;
        return infer(x);
    }

    Tensor infer(const Tensor& x) const override {
        detail::require_features(x, in_features(), "dense");
        const std::size_t n = x.rows(), in = in_features(), out = out_features();
        Tensor y = Tensor::matrix(n, out);
        for (std::size_t r = 0; r < n; ++r) {
            const double* xr = x.data().data() + r * in;
            double* yr = y.data().data() + r * out;
            for (std::size_t o = 0; o < out; ++o) {
                const double* w = weight_.data().data() + o * in;
                double acc = bias_[o];
                for (std::size_t i = 0; i < in; ++i) acc += w[i] * xr[i];
                yr[o] = acc;
            }
        }
        return y;
    }

    Tensor backward(const Tensor& grad_out) override {
        const std::size_t n = input_.rows(), in = in_features(), out = out_features();
        if (grad_out.rows() != n || grad_out.cols() != out) {
            throw DimensionError("dense backward: gradient shape " + grad_out.shape_string());
        }
        Tensor dx = Tensor::matrix(n, in);
        for (std::size_t r = 0; r < n; ++r) {
            const double* xr = input_.data().data() + r * in;
            const double* gr = grad_out.data().data() + r * out;
            double* dxr = dx.data().data() + r * in;
            for (std::size_t o = 0; o < out; ++o) {
                const double g = gr[o];
                if (g == 0.0) continue;
                bias_grad_[o] += g;
                double* dw = weight_grad_.data().data() + o * in;
                const double* w = weight_.data().data() + o * in;
                for (std::size_t i = 0; i < in; ++i) {
                    dw[i] += g * xr[i];
                    dxr[i] += g * w[i];
                }
            }
        }
        return dx;
    }

    std::vector<Param> params() override {
        return {{"weight", &weight_, &weight_grad_}, {"bias", &bias_, &bias_grad_}};
    }

    nlohmann::json topology() const override {
        return {{"type", "dense"}, {"in", in_features()}, {"out", out_features()}};
    }

private:
    Tensor weight_, bias_;
    Tensor weight_grad_, bias_grad_;
    Tensor input_;
};

/// Per-feature batch normalization. Train mode normalizes with the biased batch
/// variance and folds the unbiased variance into the running estimate.
class BatchNorm : public detail::LayerBase<BatchNorm> {
public:
    explicit BatchNorm(std::size_t features, double eps = 1e-5, double momentum = 0.1)
        : gamma_(Tensor({features}, 1.0)), beta_(Tensor({features})),
          gamma_grad_(Tensor({features})), beta_grad_(Tensor({features})),
          running_mean_(Tensor({features})), running_var_(Tensor({features}, 1.0)),
          eps_(eps), momentum_(momentum) {}

    std::size_t features() const { return gamma_.size(); }
    double eps() const { return eps_; }
    Tensor& gamma() { return gamma_; }
    Tensor& beta() { return beta_; }
    const Tensor& running_mean() const { return running_mean_; }
    const Tensor& running_var() const { return running_var_; }

    Tensor forward(const Tensor& x, Mode mode) override {
        detail::require_features(x, features(), "batchnorm");
        mode_ = mode;
        if (mode == Mode::Eval) {
            input_ = x;
            return infer(x);
        }
        const std::size_t n = x.rows(), f = features();
        if (n < 2) throw DimensionError("batchnorm: training mode needs a batch of at least 2");
        std::vector<double> mean(f, 0.0), var(f, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < f; ++c) mean[c] += x.at(r, c);
        for (double& m : mean) m /= static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < f; ++c) {
                const double d = x.at(r, c) - mean[c];
                var[c] += d * d;
            }
        for (double& v : var) v /= static_cast<double>(n);

        inv_std_.assign(f, 0.0);
        normalized_ = Tensor::matrix(n, f);
        Tensor y = Tensor::matrix(n, f);
        for (std::size_t c = 0; c < f; ++c) {
            inv_std_[c] = 1.0 / std::sqrt(var[c] + eps_);
            const double unbiased = var[c] * static_cast<double>(n) / static_cast<double>(n - 1);
            running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean[c];
            running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * unbiased;
        }
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < f; ++c) {
                const double xh = (x.at(r, c) - mean[c]) * inv_std_[c];
                normalized_.at(r, c) = xh;
                y.at(r, c) = gamma_[c] * xh + beta_[c];
            }
        return y;
    }

    Tensor infer(const Tensor& x) const override {
        detail::require_features(x, features(), "batchnorm");
        Tensor y = Tensor::matrix(x.rows(), features());
        for (std::size_t c = 0; c < features(); ++c) {
            const double scale = gamma_[c] / std::sqrt(running_var_[c] + eps_);
            for (std::size_t r = 0; r < x.rows(); ++r)
                y.at(r, c) = (x.at(r, c) - running_mean_[c]) * scale + beta_[c];
        }
        return y;
    }

    Tensor backward(const Tensor& grad_out) override {
        const std::size_t f = features();
        if (mode_ == Mode::Eval) {
            const std::size_t n = input_.rows();
            Tensor dx = Tensor::matrix(n, f);
            for (std::size_t c = 0; c < f; ++c) {
                const double inv = 1.0 / std::sqrt(running_var_[c] + eps_);
                for (std::size_t r = 0; r < n; ++r) {
                    const double g = grad_out.at(r, c);
                    const double xh = (input_.at(r, c) - running_mean_[c]) * inv;
                    gamma_grad_[c] += g * xh;
                    beta_grad_[c] += g;
                    dx.at(r, c) = g * gamma_[c] * inv;
                }
            }
            return dx;
        }
        const std::size_t n = normalized_.rows();
        const double nd = static_cast<double>(n);
        Tensor dx = Tensor::matrix(n, f);
        for (std::size_t c = 0; c < f; ++c) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t r = 0; r < n; ++r) {
                const double g = grad_out.at(r, c);
                sum_g += g;
                sum_gx += g * normalized_.at(r, c);
            }
            gamma_grad_[c] += sum_gx;
            beta_grad_[c] += sum_g;
            const double k = gamma_[c] * inv_std_[c] / nd;
            for (std::size_t r = 0; r < n; ++r) {
                dx.at(r, c) =
                    k * (nd * grad_out.at(r, c) - sum_g - normalized_.at(r, c) * sum_gx);
            }
        }
        return dx;
    }

    std::vector<Param> params() override {
        return {{"gamma", &gamma_, &gamma_grad_}, {"beta", &beta_, &beta_grad_}};
    }

    std::vector<NamedTensor> state() override {
        return {{"gamma", &gamma_},
                {"beta", &beta_},
                {"running_mean", &running_mean_},
                {"running_var", &running_var_}};
    }

    nlohmann::json topology() const override {
        return {{"type", "batchnorm"}, {"features", features()}, {"eps", eps_},
                {"momentum", momentum_}};
    }

private:
    Tensor gamma_, beta_, gamma_grad_, beta_grad_;
    Tensor running_mean_, running_var_;
    double eps_, momentum_;
    Mode mode_ = Mode::Train;
    Tensor input_, normalized_;
    std::vector<double> inv_std_;
};

/// Generalized divisive normalization, y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2),
/// or its inverse (multiplicative) counterpart. beta = beta_min + beta_raw^2 and
/// gamma = gamma_raw^2 keep the parameters feasible under unconstrained updates.
class Gdn : public detail::LayerBase<Gdn> {
public:
    static constexpr double kBetaMin = 1e-6;

    Gdn(std::size_t features, bool inverse)
        : beta_raw_(Tensor({features}, 1.0)), gamma_raw_(Tensor::matrix(features, features)),
          beta_grad_(Tensor({features})), gamma_grad_(Tensor::matrix(features, features)),
          inverse_(inverse) {
        for (std::size_t i = 0; i < features; ++i) gamma_raw_.at(i, i) = 0.1;
    }

    std::size_t features() const { return beta_raw_.size(); }
    bool inverse() const { return inverse_; }

    double beta(std::size_t i) const { return kBetaMin + beta_raw_[i] * beta_raw_[i]; }
    double gamma(std::size_t i, std::size_t j) const {
        const double g = gamma_raw_.at(i, j);
        return g * g;
    }

    /// Sets effective parameters (beta_i >= beta_min, gamma_ij >= 0).
    void set_effective(const std::vector<double>& beta, const Tensor& gamma) {
        for (std::size_t i = 0; i < features(); ++i)
            beta_raw_[i] = std::sqrt(std::max(beta[i] - kBetaMin, 0.0));
        for (std::size_t k = 0; k < gamma.size(); ++k)
            gamma_raw_[k] = std::sqrt(std::max(gamma[k], 0.0));
    }

    Tensor& beta_raw() { return beta_raw_; }
    Tensor& gamma_raw() { return gamma_raw_; }

    Tensor forward(const Tensor& x, Mode) override {
        input_ = x;
        norm_ = norms(x);
        return apply(x, norm_);
    }

    Tensor infer(const Tensor& x) const override { return apply(x, norms(x)); }

    Tensor backward(const Tensor& grad_out) override {
        const std::size_t n = input_.rows(), f = features();
        Tensor dx = Tensor::matrix(n, f);
        std::vector<double> coef(f);
        for (std::size_t r = 0; r < n; ++r) {
            // dy_i/du_i for the row, where u_i is the normalization pool.
            for (std::size_t i = 0; i < f; ++i) {
                const double u = norm_.at(r, i);
                const double g = grad_out.at(r, i);
                const double x_i = input_.at(r, i);
                coef[i] = inverse_ ? 0.5 * g * x_i / std::sqrt(u) : -0.5 * g * x_i / (u * std::sqrt(u));
                dx.at(r, i) = inverse_ ? g * std::sqrt(u) : g / std::sqrt(u);
            }
            for (std::size_t i = 0; i < f; ++i) {
                const double c = coef[i];
                if (c == 0.0) continue;
                beta_grad_[i] += c * 2.0 * beta_raw_[i];
                for (std::size_t j = 0; j < f; ++j) {
                    const double x_j = input_.at(r, j);
                    gamma_grad_.at(i, j) += c * x_j * x_j * 2.0 * gamma_raw_.at(i, j);
                    dx.at(r, j) += c * gamma(i, j) * 2.0 * x_j;
                }
            }
        }
        return dx;
    }

    std::vector<Param> params() override {
        return {{"beta_raw", &beta_raw_, &beta_grad_}, {"gamma_raw", &gamma_raw_, &gamma_grad_}};
    }

    nlohmann::json topology() const override {
        return {{"type", inverse_ ? "igdn" : "gdn"}, {"features", features()}};
    }

private:
    Tensor norms(const Tensor& x) const {
        detail::require_features(x, features(), inverse_ ? "igdn" : "gdn");
        const std::size_t n = x.rows(), f = features();
        Tensor u = Tensor::matrix(n, f);
        std::vector<double> sq(f);
        std::vector<double> gam(f * f);
        for (std::size_t k = 0; k < f * f; ++k) gam[k] = gamma_raw_[k] * gamma_raw_[k];
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < f; ++j) sq[j] = x.at(r, j) * x.at(r, j);
            for (std::size_t i = 0; i < f; ++i) {
                double acc = beta(i);
                const double* gi = gam.data() + i * f;
                for (std::size_t j = 0; j < f; ++j) acc += gi[j] * sq[j];
                u.at(r, i) = acc;
            }
        }
        return u;
    }

    Tensor apply(const Tensor& x, const Tensor& u) const {
        Tensor y = Tensor::matrix(x.rows(), features());
        for (std::size_t k = 0; k < y.size(); ++k)
            y[k] = inverse_ ? x[k] * std::sqrt(u[k]) : x[k] / std::sqrt(u[k]);
        return y;
    }

    Tensor beta_raw_, gamma_raw_, beta_grad_, gamma_grad_;
    bool inverse_;
    Tensor input_, norm_;
};

class Relu : public detail::LayerBase<Relu> {
public:
    Tensor forward(const Tensor& x, Mode) override {
        input_ = x;
        return infer(x);
    }
    Tensor infer(const Tensor& x) const override {
        Tensor y = x;
        for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
        return y;
    }
    Tensor backward(const Tensor& grad_out) override {
        Tensor dx = grad_out;
        for (std::size_t k = 0; k < dx.size(); ++k)
            if (input_[k] <= 0.0) dx[k] = 0.0;
        return dx;
    }
    nlohmann::json topology() const override { return {{"type", "relu"}}; }

private:
    Tensor input_;
};

/// Parametric ReLU with one negative slope per feature.
class PRelu : public detail::LayerBase<PRelu> {
public:
    explicit PRelu(std::size_t features, double alpha = 0.25)
        : alpha_(Tensor({features}, alpha)), alpha_grad_(Tensor({features})) {}

    std::size_t features() const { return alpha_.size(); }
    Tensor& alpha() { return alpha_; }

    Tensor forward(const Tensor& x, Mode) override {
        input_ = x;
        return infer(x);
    }
    Tensor infer(const Tensor& x) const override {
        detail::require_features(x, features(), "prelu");
        Tensor y = x;
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < features(); ++c) {
                double& v = y.at(r, c);
                if (v < 0.0) v *= alpha_[c];
            }
        return y;
    }
    Tensor backward(const Tensor& grad_out) override {
        Tensor dx = grad_out;
        for (std::size_t r = 0; r < input_.rows(); ++r)
            for (std::size_t c = 0; c < features(); ++c) {
                const double x = input_.at(r, c);
                if (x < 0.0) {
                    alpha_grad_[c] += grad_out.at(r, c) * x;
                    dx.at(r, c) *= alpha_[c];
                }
            }
        return dx;
    }
    std::vector<Param> params() override { return {{"alpha", &alpha_, &alpha_grad_}}; }
    nlohmann::json topology() const override {
        return {{"type", "prelu"}, {"features", features()}};
    }

private:
    Tensor alpha_, alpha_grad_;
    Tensor input_;
};

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

class Sigmoid : public detail::LayerBase<Sigmoid> {
public:
    Tensor forward(const Tensor& x, Mode) override {
        output_ = infer(x);
        return output_;
    }
    Tensor infer(const Tensor& x) const override {
        Tensor y = x;
        for (double& v : y.data()) v = sigmoid(v);
        return y;
    }
    Tensor backward(const Tensor& grad_out) override {
        Tensor dx = grad_out;
        for (std::size_t k = 0; k < dx.size(); ++k) dx[k] *= output_[k] * (1.0 - output_[k]);
        return dx;
    }
    nlohmann::json topology() const override { return {{"type", "sigmoid"}}; }

private:
    Tensor output_;
};

/// Rebuilds a layer (with default-initialized parameters) from its topology record.
inline std::unique_ptr<Layer> make_layer(const nlohmann::json& t) {
    const std::string type = t.at("type").get<std::string>();
    if (type == "dense") return std::make_unique<Dense>(t.at("in").get<std::size_t>(), t.at("out").get<std::size_t>());
    if (type == "batchnorm")
        return std::make_unique<BatchNorm>(t.at("features").get<std::size_t>(), t.at("eps").get<double>(),
                                           t.at("momentum").get<double>());
    if (type == "gdn") return std::make_unique<Gdn>(t.at("features").get<std::size_t>(), false);
    if (type == "igdn") return std::make_unique<Gdn>(t.at("features").get<std::size_t>(), true);
    if (type == "relu") return std::make_unique<Relu>();
    if (type == "prelu") return std::make_unique<PRelu>(t.at("features").get<std::size_t>());
    if (type == "sigmoid") return std::make_unique<Sigmoid>();
    throw IoError("unknown layer type '" + type + "'");
}

} // namespace jscc::nn
