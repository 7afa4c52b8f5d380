#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "jscc/channel/awgn.hpp"
#include "jscc/entropy/freq_table.hpp"
#include "jscc/entropy/range_coder.hpp"
#include "jscc/nn/checkpoint.hpp"
#include "jscc/nn/layer_stack.hpp"

namespace jscc::schemes {

using nn::LayerStack;
using nn::Mode;
using nn::Tensor;

enum class SchemeKind { SingleUsers, JDecOMA, JDecNOMA, JEnc1, JEnc2, Digital };

inline constexpr std::array<SchemeKind, 6> kAllSchemes{SchemeKind::SingleUsers, SchemeKind::JDecOMA,
                                                       SchemeKind::JDecNOMA,    SchemeKind::JEnc1,
                                                       SchemeKind::JEnc2,       SchemeKind::Digital};

inline std::string to_string(SchemeKind k) {
    switch (k) {
    case SchemeKind::SingleUsers: return "single_users";
    case SchemeKind::JDecOMA: return "jdec_oma";
    case SchemeKind::JDecNOMA: return "jdec_noma";
    case SchemeKind::JEnc1: return "jenc1";
    case SchemeKind::JEnc2: return "jenc2";
    case SchemeKind::Digital: return "digital";
    }
    return "?";
}

/// Accepts the canonical names above; case, '-' and '+' are ignored
/// ("J-Dec+OMA", "JDecOMA", "jdec_oma" all parse).
inline SchemeKind parse_scheme(const std::string& text) {
    auto squash = [](const std::string& s) {
        std::string o;
        for (char c : s)
            if (std::isalnum(static_cast<unsigned char>(c))) o += static_cast<char>(std::tolower(c));
        return o;
    };
    const std::string key = squash(text);
    for (auto k : kAllSchemes)
        if (squash(to_string(k)) == key) return k;
    throw ConfigError("unknown scheme '" + text + "' (expected one of single_users, jdec_oma, jdec_noma, jenc1, "
                      "jenc2, digital)");
}

inline bool is_jscc(SchemeKind k) { return k != SchemeKind::Digital; }

inline std::string to_string(channel::NomaPower p) {
    return p == channel::NomaPower::SplitTotal ? "split_total" : "per_user";
}

inline channel::NomaPower parse_noma_power(const std::string& s) {
    if (s == "split_total") return channel::NomaPower::SplitTotal;
    if (s == "per_user") return channel::NomaPower::PerUser;
    throw ConfigError("noma_power must be split_total or per_user, got '" + s + "'");
}

struct SchemeDims {
    std::size_t descriptor_dim = 128;  // D
    std::size_t feature_dim = 64;      // N, split-point width per camera
    std::size_t bandwidth = 16;        // B
    std::size_t ids1 = 16, ids2 = 16;  // I1, I2
    std::size_t extractor_hidden = 256;
    std::size_t head_hidden = 128;
    // Digital only.
    std::size_t latent_dim = 8;  // per camera
    std::size_t gmm_components = 3;
    bool per_dim_gmm = false;

    std::size_t ids() const { return ids1 + ids2; }

    void validate(SchemeKind kind) const {
        if (descriptor_dim == 0 || feature_dim == 0 || ids1 == 0 || ids2 == 0 || extractor_hidden == 0 ||
            head_hidden == 0)
            throw ConfigError("scheme dimensions must be >= 1");
        if (kind == SchemeKind::Digital) {
            if (latent_dim == 0) throw ConfigError("scheme.latent_dim must be >= 1");
            if (gmm_components == 0) throw ConfigError("scheme.gmm_components must be >= 1");
            if (bandwidth < 1) throw ConfigError("scheme.bandwidth must be >= 1");
            return;
        }
        if (bandwidth < 2) throw ConfigError("bandwidth B must be >= 2, got " + std::to_string(bandwidth));
        if ((kind == SchemeKind::JDecOMA || kind == SchemeKind::SingleUsers) && bandwidth % 2 != 0) {
            throw ConfigError(to_string(kind) + " splits the bandwidth equally between users; B must be even, got " +
                              std::to_string(bandwidth));
        }
    }
};

inline nlohmann::json to_json(const SchemeDims& d) {
    return {{"descriptor_dim", d.descriptor_dim}, {"feature_dim", d.feature_dim},
            {"bandwidth", d.bandwidth},           {"ids1", d.ids1},
            {"ids2", d.ids2},                     {"extractor_hidden", d.extractor_hidden},
            {"head_hidden", d.head_hidden},       {"latent_dim", d.latent_dim},
            {"gmm_components", d.gmm_components}, {"per_dim_gmm", d.per_dim_gmm}};
}

inline SchemeDims dims_from_json(const nlohmann::json& j) {
    SchemeDims d;
    d.descriptor_dim = j.at("descriptor_dim");
    d.feature_dim = j.at("feature_dim");
    d.bandwidth = j.at("bandwidth");
    d.ids1 = j.at("ids1");
    d.ids2 = j.at("ids2");
    d.extractor_hidden = j.at("extractor_hidden");
    d.head_hidden = j.at("head_hidden");
    d.latent_dim = j.at("latent_dim");
    d.gmm_components = j.at("gmm_components");
    d.per_dim_gmm = j.at("per_dim_gmm");
    return d;
}

/// Counts transmitted vectors and those whose average power misses the budget.
/// All-zero vectors pass normalization unchanged and are counted as silent.
struct PowerMonitor {
    double tolerance = 1e-9;
    std::size_t transmissions = 0;
    std::size_t violations = 0;
    std::size_t silent = 0;
    double max_deviation = 0.0;

    void check(const Tensor& s, double budget) {
        for (std::size_t r = 0; r < s.rows(); ++r) {
            ++transmissions;
            const double p = channel::average_power(s, r);
            if (p == 0.0) {
                ++silent;
                continue;
            }
            const double dev = std::abs(p - budget);
            max_deviation = std::max(max_deviation, dev);
            if (!(dev <= tolerance)) ++violations;
        }
    }
    void merge(const PowerMonitor& o) {
        transmissions += o.transmissions;
        violations += o.violations;
        silent += o.silent;
        max_deviation = std::max(max_deviation, o.max_deviation);
    }
};

/// Digital evaluation output for one batch.
struct DigitalPass {
    Tensor logits;
    std::vector<std::size_t> bits;  // per-sample Bitstream length
    bool roundtrip_ok = true;       // decoded symbols equal encoded ones
};

namespace detail {

inline LayerStack extractor_stack(const SchemeDims& d, nn::Rng& rng) {
    LayerStack s;
    s.add<nn::Dense>(d.descriptor_dim, d.extractor_hidden, rng);
    s.add<nn::BatchNorm>(d.extractor_hidden);
    s.add<nn::Relu>();
    s.add<nn::Dense>(d.extractor_hidden, d.feature_dim, rng);
    s.add<nn::BatchNorm>(d.feature_dim);
    s.add<nn::Relu>();
    return s;
}

inline LayerStack head_stack(std::size_t in, std::size_t hidden, std::size_t out, nn::Rng& rng) {
    LayerStack s;
    s.add<nn::Dense>(in, hidden, rng);
    s.add<nn::BatchNorm>(hidden);
    s.add<nn::Relu>();
    s.add<nn::Dense>(hidden, out, rng);
    return s;
}

inline LayerStack encoder_stack(std::size_t in, std::size_t out, nn::Rng& rng) {
    LayerStack s;
    s.add<nn::Dense>(in, out, rng);
    s.add<nn::Gdn>(out, false);
    return s;
}

inline LayerStack decoder_stack(std::size_t in, std::size_t out, nn::Rng& rng) {
    LayerStack s;
    s.add<nn::Dense>(in, 2 * out, rng);
    s.add<nn::Gdn>(2 * out, true);
    s.add<nn::PRelu>(2 * out);
    s.add<nn::Dense>(2 * out, out, rng);
    s.add<nn::BatchNorm>(out);
    s.add<nn::PRelu>(out);
    return s;
}

template <typename Stack>
Tensor run(Stack& s, const Tensor& x, Mode mode) {
    if constexpr (std::is_const_v<Stack>) {
        return s.infer(x);
    } else {
        return s.forward(x, mode);
    }
}

template <typename Norm>
Tensor normalize(Norm& pn, const Tensor& x) {
    if constexpr (std::is_const_v<Norm>) {
        return pn.infer(x);
    } else {
        return pn.forward(x);
    }
}

} // namespace detail

/// One trained (or trainable) pipeline. All kinds share the layout
///   x_k -> extractor_k -> f = [f1 | f2]  (split point, 2N wide)
/// JSCC kinds: f -> encoder(s) -> power normalization -> channel -> decoder(s) -> f' -> head(s)
/// Digital:    f_k -> dense N->L -> quantize -> [q1 | q2] -> classifier
class SchemeModel {
public:
    SchemeModel(SchemeKind kind, SchemeDims dims, channel::ChannelConfig ch = {},
                channel::NomaPower noma = channel::NomaPower::SplitTotal, std::uint64_t init_seed = 1)
        : kind_(kind), dims_(dims), channel_(ch), noma_(noma) {
        dims_.validate(kind_);
        channel_.bandwidth = static_cast<int>(dims_.bandwidth);
        channel_.validate();
        nn::Rng rng(init_seed);
        const std::size_t n = dims_.feature_dim, b = dims_.bandwidth;
        extractors_ = {detail::extractor_stack(dims_, rng), detail::extractor_stack(dims_, rng)};
        switch (kind_) {
        case SchemeKind::SingleUsers:
            for (int k = 0; k < 2; ++k) encoders_.push_back(detail::encoder_stack(n, b / 2, rng));
            for (int k = 0; k < 2; ++k) decoders_.push_back(detail::decoder_stack(b / 2, n, rng));
            heads_.push_back(detail::head_stack(n, dims_.head_hidden, dims_.ids1, rng));
            heads_.push_back(detail::head_stack(n, dims_.head_hidden, dims_.ids2, rng));
            break;
        case SchemeKind::JDecOMA:
            for (int k = 0; k < 2; ++k) encoders_.push_back(detail::encoder_stack(n, b / 2, rng));
            decoders_.push_back(detail::decoder_stack(b, 2 * n, rng));
            heads_.push_back(detail::head_stack(2 * n, dims_.head_hidden, dims_.ids(), rng));
            break;
        case SchemeKind::JDecNOMA:
            for (int k = 0; k < 2; ++k) encoders_.push_back(detail::encoder_stack(n, b, rng));
            decoders_.push_back(detail::decoder_stack(b, 2 * n, rng));
            heads_.push_back(detail::head_stack(2 * n, dims_.head_hidden, dims_.ids(), rng));
            break;
        case SchemeKind::JEnc1:
            encoders_.push_back(detail::encoder_stack(2 * n, b, rng));
            decoders_.push_back(detail::decoder_stack(b, 2 * n, rng));
            heads_.push_back(detail::head_stack(2 * n, dims_.head_hidden, dims_.ids(), rng));
            break;
        case SchemeKind::JEnc2:
            for (int k = 0; k < 2; ++k) encoders_.push_back(detail::encoder_stack(2 * n, b, rng));
            decoders_.push_back(detail::decoder_stack(b, 2 * n, rng));
            heads_.push_back(detail::head_stack(2 * n, dims_.head_hidden, dims_.ids(), rng));
            break;
        case SchemeKind::Digital: {
            const std::size_t l = dims_.latent_dim;
            for (int k = 0; k < 2; ++k) {
                LayerStack e;
                e.add<nn::Dense>(n, l, rng);
                encoders_.push_back(std::move(e));
            }
            heads_.push_back(detail::head_stack(2 * l, dims_.head_hidden, dims_.ids(), rng));
            const std::size_t models = dims_.per_dim_gmm ? 2 * l : 1;
            for (std::size_t i = 0; i < models; ++i)
                gmms_.push_back(entropy::GmmEntropyModel::spread(dims_.gmm_components));
            break;
        }
        }
        for (std::size_t k = 0; k < encoders_.size(); ++k) norms_.emplace_back(user_power(k));
    }

    SchemeKind kind() const { return kind_; }
    const SchemeDims& dims() const { return dims_; }
    const channel::ChannelConfig& channel() const { return channel_; }
    void set_snr_db(double snr) { channel_.snr_db = snr; }
    channel::NomaPower noma_power() const { return noma_; }
    double noise_var() const { return channel::snr_to_noise_var(channel_.snr_db, channel_.power); }

    LayerStack& extractor(std::size_t k) { return extractors_.at(k); }
    LayerStack& encoder(std::size_t k) { return encoders_.at(k); }
    LayerStack& decoder(std::size_t k) { return decoders_.at(k); }
    LayerStack& head(std::size_t k) { return heads_.at(k); }
    const LayerStack& encoder(std::size_t k) const { return encoders_.at(k); }
    const LayerStack& decoder(std::size_t k) const { return decoders_.at(k); }
    std::size_t encoder_count() const { return encoders_.size(); }
    std::size_t decoder_count() const { return decoders_.size(); }
    std::size_t head_count() const { return heads_.size(); }

    std::size_t encoder_input(std::size_t k) const { return first_dense(encoders_.at(k)).in_features(); }
    std::size_t encoder_output(std::size_t k) const { return first_dense(encoders_.at(k)).out_features(); }
    std::size_t decoder_input(std::size_t k) const { return first_dense(decoders_.at(k)).in_features(); }

    /// Average-power budget of encoder k's channel input.
    double user_power(std::size_t k) const {
        (void)k;
        const bool superimposed = kind_ == SchemeKind::JEnc2 || kind_ == SchemeKind::JDecNOMA;
        if (superimposed && noma_ == channel::NomaPower::SplitTotal) return channel_.power / 2.0;
        return channel_.power;
    }

    // ---- Digital entropy model -------------------------------------------------

    std::vector<entropy::GmmEntropyModel>& gmms() { return gmms_; }
    const std::vector<entropy::GmmEntropyModel>& gmms() const { return gmms_; }
    const std::optional<entropy::SymbolAlphabet>& alphabet() const { return alphabet_; }

    /// Fixes the coding alphabet and rebuilds the frequency tables.
    void set_alphabet(entropy::SymbolAlphabet a) {
        alphabet_ = a;
        tables_.clear();
        for (const auto& g : gmms_) tables_.push_back(entropy::build_freq_table(g, a));
    }
    const std::vector<entropy::FrequencyTable>& tables() const { return tables_; }

    // ---- Full forward / backward -------------------------------------------------

    /// Train-mode (caching) or eval-mode forward pass of the whole JSCC pipeline.
    Tensor forward(const Tensor& x1, const Tensor& x2, Mode mode, channel::NoiseSource& noise, double noise_var) {
        require_jscc();
        const Tensor f = extract(*this, x1, x2, mode);
        const Tensor g = transmit(*this, f, mode, noise, noise_var, nullptr);
        return classify(*this, g, mode);
    }

    /// Propagates dL/dlogits back through a preceding `forward`.
    void backward(const Tensor& grad_logits) {
        const Tensor dg = classify_backward(grad_logits);
        const Tensor df = transmit_backward(dg);
        extract_backward(df);
    }

    /// Cache-free eval pass; safe to call concurrently. Records every channel
    /// input in `monitor` if given.
    Tensor infer(const Tensor& x1, const Tensor& x2, channel::NoiseSource& noise, double noise_var,
                 PowerMonitor* monitor = nullptr) const {
        require_jscc();
        const Tensor f = extract(*this, x1, x2, Mode::Eval);
        const Tensor g = transmit(*this, f, Mode::Eval, noise, noise_var, monitor);
        return classify(*this, g, Mode::Eval);
    }

    // ---- Stage helpers -----------------------------------------------------------

    /// Split-point features [f1 | f2] in eval mode.
    Tensor features(const Tensor& x1, const Tensor& x2) const { return extract(*this, x1, x2, Mode::Eval); }

    /// Baseline classifier without the channel: head(s) applied to f directly.
    Tensor baseline_forward(const Tensor& x1, const Tensor& x2, Mode mode) {
        return classify(*this, extract(*this, x1, x2, mode), mode);
    }
    void baseline_backward(const Tensor& grad_logits) { extract_backward(classify_backward(grad_logits)); }
    Tensor baseline_infer(const Tensor& x1, const Tensor& x2) const {
        return classify(*this, extract(*this, x1, x2, Mode::Eval), Mode::Eval);
    }

    /// Autoencoder over split-point features: f -> channel -> f'.
    Tensor autoencode_forward(const Tensor& f, Mode mode, channel::NoiseSource& noise, double noise_var) {
        require_jscc();
        return transmit(*this, f, mode, noise, noise_var, nullptr);
    }
    void autoencode_backward(const Tensor& grad) { transmit_backward(grad); }
    Tensor autoencode_infer(const Tensor& f, channel::NoiseSource& noise, double noise_var) const {
        require_jscc();
        return transmit(*this, f, Mode::Eval, noise, noise_var, nullptr);
    }

    // ---- Digital ---------------------------------------------------------------

    /// Continuous latents r = [r1 | r2] (train: caching).
    Tensor digital_latents(const Tensor& x1, const Tensor& x2, Mode mode) {
        require_digital();
        return latents(*this, x1, x2, mode);
    }
    Tensor digital_latents_infer(const Tensor& x1, const Tensor& x2) const {
        require_digital();
        return latents(*this, x1, x2, Mode::Eval);
    }
    Tensor digital_classify(const Tensor& q, Mode mode) { return detail::run(heads_[0], q, mode); }
    Tensor digital_classify_infer(const Tensor& q) const { return heads_[0].infer(q); }

    /// dL/dq (classifier) -> returns after pushing through classifier; caller
    /// adds the rate gradient and calls digital_latents_backward.
    Tensor digital_classify_backward(const Tensor& grad_logits) { return heads_[0].backward(grad_logits); }
    void digital_latents_backward(const Tensor& grad_r) {
        const std::size_t l = dims_.latent_dim;
        Tensor df1 = encoders_[0].backward(nn::slice_cols(grad_r, 0, l));
        Tensor df2 = encoders_[1].backward(nn::slice_cols(grad_r, l, l));
        extractors_[0].backward(df1);
        extractors_[1].backward(df2);
    }

    /// Symbols of latent column c use model/table index gmm_index(c).
    std::size_t gmm_index(std::size_t column) const { return dims_.per_dim_gmm ? column : 0; }

    /// Eval: quantize, arithmetic-code each sample, decode, classify the
    /// decoded symbols. Requires set_alphabet().
    DigitalPass digital_infer(const Tensor& x1, const Tensor& x2) const {
        require_digital();
        if (!alphabet_) throw ConfigError("digital model has no coding alphabet; train or load it first");
        const Tensor q = entropy::quantize_eval(latents(*this, x1, x2, Mode::Eval));
        DigitalPass out;
        Tensor decoded = Tensor::matrix(q.rows(), q.cols());
        out.bits.assign(q.rows(), 0);
        for (std::size_t r = 0; r < q.rows(); ++r) {
            const auto symbols = entropy::to_symbols(Tensor({q.cols()}, std::vector<double>(q.row_span(r).begin(),
                                                                                            q.row_span(r).end())));
            // Shared model: one table; per-dimension: column c uses table c.
            const auto bits = entropy::arith_encode(symbols, tables_);
            out.bits[r] = bits.bit_length;
            const auto back = entropy::arith_decode(bits, tables_, symbols.size());
            if (back != symbols) out.roundtrip_ok = false;
            for (std::size_t c = 0; c < q.cols(); ++c) decoded.at(r, c) = static_cast<double>(back[c]);
        }
        out.logits = heads_[0].infer(decoded);
        return out;
    }

    // ---- Parameters ------------------------------------------------------------

    enum class Scope { All, Baseline, Autoencoder };

    std::vector<nn::Param> params(Scope scope = Scope::All) {
        std::vector<nn::Param> out;
        auto add = [&](std::vector<LayerStack>& stacks, const std::string& prefix) {
            for (std::size_t i = 0; i < stacks.size(); ++i)
                for (auto p : stacks[i].params()) {
                    p.name = prefix + std::to_string(i) + "." + p.name;
                    out.push_back(p);
                }
        };
        if (scope != Scope::Autoencoder) add(extractors_, "extractor");
        if (scope != Scope::Baseline) add(encoders_, "encoder");
        if (scope != Scope::Baseline) add(decoders_, "decoder");
        if (scope != Scope::Autoencoder) add(heads_, "head");
        if (scope == Scope::All)
            for (std::size_t i = 0; i < gmms_.size(); ++i)
                for (auto p : gmms_[i].params()) {
                    p.name = "gmm" + std::to_string(i) + "." + p.name;
                    out.push_back(p);
                }
        return out;
    }

    void zero_grad() {
        for (auto& p : params()) p.grad->fill(0.0);
    }

    // ---- Checkpointing ---------------------------------------------------------

    nn::Checkpoint to_checkpoint(nlohmann::json meta = nlohmann::json::object()) const {
        auto& self = const_cast<SchemeModel&>(*this);  // state() hands out mutable pointers; we only read
        nn::Checkpoint ck;
        ck.meta = std::move(meta);
        ck.topology = {{"kind", to_string(kind_)},
                       {"dims", to_json(dims_)},
                       {"channel", {{"snr_db", channel_.snr_db}, {"bandwidth", channel_.bandwidth},
                                    {"power", channel_.power}}},
                       {"noma_power", to_string(noma_)}};
        auto stacks = [&](std::vector<LayerStack>& v, const std::string& prefix) {
            nlohmann::json arr = nlohmann::json::array();
            for (std::size_t i = 0; i < v.size(); ++i) {
                arr.push_back(v[i].topology());
                for (auto& t : v[i].state()) ck.tensors.emplace(prefix + std::to_string(i) + "." + t.name, *t.value);
            }
            ck.topology[prefix] = arr;
        };
        stacks(self.extractors_, "extractor");
        stacks(self.encoders_, "encoder");
        stacks(self.decoders_, "decoder");
        stacks(self.heads_, "head");
        for (std::size_t i = 0; i < gmms_.size(); ++i)
            for (auto& p : self.gmms_[i].params()) ck.tensors.emplace("gmm" + std::to_string(i) + "." + p.name, *p.value);
        ck.topology["gmm_count"] = gmms_.size();
        if (alphabet_) ck.topology["alphabet"] = {alphabet_->q_min, alphabet_->q_max};
        return ck;
    }

    static SchemeModel from_checkpoint(const nn::Checkpoint& ck) {
        try {
            const auto& t = ck.topology;
            channel::ChannelConfig ch;
            ch.snr_db = t.at("channel").at("snr_db");
            ch.bandwidth = t.at("channel").at("bandwidth");
            ch.power = t.at("channel").at("power");
            SchemeModel m(parse_scheme(t.at("kind")), dims_from_json(t.at("dims")), ch,
                          parse_noma_power(t.at("noma_power")));
            auto load = [&](std::vector<LayerStack>& v, const std::string& prefix) {
                const auto& arr = t.at(prefix);
                if (arr.size() != v.size()) throw IoError("checkpoint: " + prefix + " count mismatch");
                for (std::size_t i = 0; i < v.size(); ++i) {
                    if (arr[i] != v[i].topology()) throw IoError("checkpoint: " + prefix + " topology mismatch");
                    for (auto& nt : v[i].state()) copy_tensor(ck, prefix + std::to_string(i) + "." + nt.name, *nt.value);
                }
            };
            load(m.extractors_, "extractor");
            load(m.encoders_, "encoder");
            load(m.decoders_, "decoder");
            load(m.heads_, "head");
            if (t.at("gmm_count").get<std::size_t>() != m.gmms_.size()) throw IoError("checkpoint: gmm count mismatch");
            for (std::size_t i = 0; i < m.gmms_.size(); ++i)
                for (auto& p : m.gmms_[i].params()) copy_tensor(ck, "gmm" + std::to_string(i) + "." + p.name, *p.value);
            if (t.contains("alphabet")) m.set_alphabet({t["alphabet"][0].get<std::int64_t>(), t["alphabet"][1].get<std::int64_t>()});
            return m;
        } catch (const nlohmann::json::exception& e) {
            throw IoError(std::string("checkpoint: malformed scheme topology: ") + e.what());
        }
    }

private:
    static const nn::Dense& first_dense(const LayerStack& s) { return dynamic_cast<const nn::Dense&>(s[0]); }

    static void copy_tensor(const nn::Checkpoint& ck, const std::string& name, Tensor& dst) {
        const auto it = ck.tensors.find(name);
        if (it == ck.tensors.end()) throw IoError("checkpoint: missing tensor '" + name + "'");
        if (!it->second.same_shape(dst)) throw IoError("checkpoint: tensor '" + name + "' has wrong shape");
        dst = it->second;
    }

    void require_jscc() const {
        if (!is_jscc(kind_)) throw ConfigError("operation needs a JSCC scheme, model is " + to_string(kind_));
    }
    void require_digital() const {
        if (kind_ != SchemeKind::Digital) throw ConfigError("operation needs the digital scheme");
    }

    // Self is SchemeModel (train, caching) or const SchemeModel (eval, cache-free).
    template <typename Self>
    static Tensor extract(Self& self, const Tensor& x1, const Tensor& x2, Mode mode) {
        return nn::concat_cols(detail::run(self.extractors_[0], x1, mode), detail::run(self.extractors_[1], x2, mode));
    }

    template <typename Self>
    static Tensor latents(Self& self, const Tensor& x1, const Tensor& x2, Mode mode) {
        const std::size_t n = self.dims_.feature_dim;
        const Tensor f = extract(self, x1, x2, mode);
        return nn::concat_cols(detail::run(self.encoders_[0], nn::slice_cols(f, 0, n), mode),
                               detail::run(self.encoders_[1], nn::slice_cols(f, n, n), mode));
    }

    template <typename Self>
    static Tensor encode_user(Self& self, std::size_t k, const Tensor& in, Mode mode, PowerMonitor* monitor) {
        const Tensor s = detail::normalize(self.norms_[k], detail::run(self.encoders_[k], in, mode));
        if (monitor) monitor->check(s, self.norms_[k].target());
        return s;
    }

    template <typename Self>
    static Tensor transmit(Self& self, const Tensor& f, Mode mode, channel::NoiseSource& noise, double nv,
                           PowerMonitor* monitor) {
        const std::size_t n = self.dims_.feature_dim;
        switch (self.kind_) {
        case SchemeKind::SingleUsers: {
            const Tensor s1 = encode_user(self, 0, nn::slice_cols(f, 0, n), mode, monitor);
            const Tensor s2 = encode_user(self, 1, nn::slice_cols(f, n, n), mode, monitor);
            const Tensor y1 = channel::awgn_transmit(s1, nv, noise);
            const Tensor y2 = channel::awgn_transmit(s2, nv, noise);
            return nn::concat_cols(detail::run(self.decoders_[0], y1, mode), detail::run(self.decoders_[1], y2, mode));
        }
        case SchemeKind::JDecOMA: {
            const Tensor s1 = encode_user(self, 0, nn::slice_cols(f, 0, n), mode, monitor);
            const Tensor s2 = encode_user(self, 1, nn::slice_cols(f, n, n), mode, monitor);
            return detail::run(self.decoders_[0], channel::oma_compose(s1, s2, nv, noise), mode);
        }
        case SchemeKind::JDecNOMA: {
            const Tensor s1 = encode_user(self, 0, nn::slice_cols(f, 0, n), mode, monitor);
            const Tensor s2 = encode_user(self, 1, nn::slice_cols(f, n, n), mode, monitor);
            return detail::run(self.decoders_[0], channel::noma_compose(s1, s2, nv, noise), mode);
        }
        case SchemeKind::JEnc1: {
            const Tensor s = encode_user(self, 0, f, mode, monitor);
            return detail::run(self.decoders_[0], channel::awgn_transmit(s, nv, noise), mode);
        }
        case SchemeKind::JEnc2: {
            const Tensor s1 = encode_user(self, 0, f, mode, monitor);
            const Tensor s2 = encode_user(self, 1, f, mode, monitor);
            return detail::run(self.decoders_[0], channel::noma_compose(s1, s2, nv, noise), mode);
        }
        case SchemeKind::Digital: break;
        }
        throw ConfigError("transmit: not a JSCC scheme");
    }

    template <typename Self>
    static Tensor classify(Self& self, const Tensor& g, Mode mode) {
        if (self.kind_ != SchemeKind::SingleUsers) return detail::run(self.heads_[0], g, mode);
        const std::size_t n = self.dims_.feature_dim;
        return nn::concat_cols(detail::run(self.heads_[0], nn::slice_cols(g, 0, n), mode),
                               detail::run(self.heads_[1], nn::slice_cols(g, n, n), mode));
    }

    Tensor classify_backward(const Tensor& grad_logits) {
        if (kind_ != SchemeKind::SingleUsers) return heads_[0].backward(grad_logits);
        return nn::concat_cols(heads_[0].backward(nn::slice_cols(grad_logits, 0, dims_.ids1)),
                               heads_[1].backward(nn::slice_cols(grad_logits, dims_.ids1, dims_.ids2)));
    }

    Tensor encoder_backward(std::size_t k, const Tensor& grad_s) {
        return encoders_[k].backward(norms_[k].backward(grad_s));
    }

    Tensor transmit_backward(const Tensor& dg) {
        const std::size_t n = dims_.feature_dim;
        switch (kind_) {
        case SchemeKind::SingleUsers: {
            const Tensor dy1 = decoders_[0].backward(nn::slice_cols(dg, 0, n));
            const Tensor dy2 = decoders_[1].backward(nn::slice_cols(dg, n, n));
            return nn::concat_cols(encoder_backward(0, dy1), encoder_backward(1, dy2));
        }
        case SchemeKind::JDecOMA: {
            const Tensor dy = decoders_[0].backward(dg);
            const std::size_t half = dims_.bandwidth / 2;
            return nn::concat_cols(encoder_backward(0, nn::slice_cols(dy, 0, half)),
                                   encoder_backward(1, nn::slice_cols(dy, half, half)));
        }
        case SchemeKind::JDecNOMA: {
            const Tensor dy = decoders_[0].backward(dg);
            return nn::concat_cols(encoder_backward(0, dy), encoder_backward(1, dy));
        }
        case SchemeKind::JEnc1: return encoder_backward(0, decoders_[0].backward(dg));
        case SchemeKind::JEnc2: {
            const Tensor dy = decoders_[0].backward(dg);
            Tensor df = encoder_backward(0, dy);
            df += encoder_backward(1, dy);
            return df;
        }
        case SchemeKind::Digital: break;
        }
        throw ConfigError("transmit_backward: not a JSCC scheme");
    }

    void extract_backward(const Tensor& df) {
        const std::size_t n = dims_.feature_dim;
        extractors_[0].backward(nn::slice_cols(df, 0, n));
        extractors_[1].backward(nn::slice_cols(df, n, n));
    }

    SchemeKind kind_;
    SchemeDims dims_;
    channel::ChannelConfig channel_;
    channel::NomaPower noma_;
    std::vector<LayerStack> extractors_, encoders_, decoders_, heads_;
    std::vector<channel::PowerNormalize> norms_;
    std::vector<entropy::GmmEntropyModel> gmms_;
    std::optional<entropy::SymbolAlphabet> alphabet_;
    std::vector<entropy::FrequencyTable> tables_;
};

} // namespace jscc::schemes
