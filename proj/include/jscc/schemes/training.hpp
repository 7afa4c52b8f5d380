#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "jscc/data/dataset.hpp"
#include "jscc/entropy/quantize.hpp"
#include "jscc/eval/metrics.hpp"
#include "jscc/nn/loss.hpp"
#include "jscc/nn/optim.hpp"
#include "jscc/schemes/scheme.hpp"

namespace jscc::schemes {

/// Epoch count plus a step schedule: decay by `factor` every `period` epochs,
/// or at the listed `milestones` when period is 0.
struct StagePlan {
    int epochs = 50;
    double lr = 0.01;
    double factor = 0.1;
    int period = 10;
    std::vector<int> milestones;

    nn::StepLrSchedule schedule() const {
        if (period > 0) return nn::StepLrSchedule::every(lr, factor, period);
        return nn::StepLrSchedule::milestones(lr, factor, milestones);
    }
    void validate(const std::string& name) const {
        if (epochs < 0) throw ConfigError("train." + name + "_epochs must be >= 0");
        if (!(lr > 0.0)) throw ConfigError("train." + name + "_lr must be > 0");
        if (!(factor > 0.0 && factor <= 1.0)) throw ConfigError("train." + name + "_lr_factor must be in (0, 1]");
        if (period < 0) throw ConfigError("train." + name + "_lr_period must be >= 0");
        if (period == 0 && milestones.empty())
            throw ConfigError("train." + name + ": need a decay period or milestone list");
    }
};

struct TrainPlan {
    StagePlan baseline{30, 0.01, 0.1, 10, {}};
    StagePlan autoencoder{50, 0.1, 0.1, 0, {20, 40}};
    StagePlan end_to_end{50, 0.01, 0.1, 10, {}};
    StagePlan digital{50, 0.01, 0.1, 10, {}};
    double momentum = 0.9;
    bool nesterov = true;
    double weight_decay = 5e-4;
    std::size_t batch_size = 32;
    bool single_step = false;  // skip stages 1-2, train end to end from scratch
    std::uint64_t seed = 1;

    void validate() const {
        baseline.validate("baseline");
        autoencoder.validate("autoencoder");
        end_to_end.validate("end_to_end");
        digital.validate("digital");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train.momentum must be in [0, 1)");
        if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
        if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2 (batch normalization)");
    }
};

struct EpochRecord {
    std::string stage;
    int epoch;
    double lr;
    double loss;                                               // mean training loss
    double held_out = std::numeric_limits<double>::quiet_NaN();  // accuracy (CE stages) or L1 (autoencoder)
    double rate_bits = std::numeric_limits<double>::quiet_NaN(); // digital: mean rate term
};

struct TrainLog {
    std::vector<EpochRecord> epochs;

    std::vector<EpochRecord> stage(const std::string& name) const {
        std::vector<EpochRecord> out;
        for (const auto& e : epochs)
            if (e.stage == name) out.push_back(e);
        return out;
    }

    nlohmann::json to_json() const {
        auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& e : epochs)
            arr.push_back({{"stage", e.stage},
                           {"epoch", e.epoch},
                           {"lr", e.lr},
                           {"loss", num(e.loss)},
                           {"held_out", num(e.held_out)},
                           {"rate_bits", num(e.rate_bits)}});
        return arr;
    }
};

struct TrainResult {
    SchemeModel model;
    TrainLog log;
};

namespace detail {

inline Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
    Tensor out = Tensor::matrix(end - begin, t.cols());
    for (std::size_t r = begin; r < end; ++r)
        std::copy_n(t.row_span(idx[r]).begin(), t.cols(), out.row_span(r - begin).begin());
    return out;
}

struct Split {
    Tensor x1, x2, y;  // y = [y1 | y2]
};

inline Split split_of(const data::Dataset& ds) {
    auto b = data::make_batch(ds);
    return {std::move(b.x1), std::move(b.x2), nn::concat_cols(b.y1, b.y2)};
}

/// Minibatch index ranges for one epoch; a trailing batch of one row is
/// dropped (batch normalization needs two).
inline std::vector<std::pair<std::size_t, std::size_t>> batches(std::size_t n, std::size_t size) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t b = 0; b < n; b += size) {
        const std::size_t e = std::min(n, b + size);
        if (e - b >= 2) out.emplace_back(b, e);
    }
    return out;
}

/// Runs `epochs` of shuffled minibatch SGD. `step(begin, end, order)` does
/// forward + backward on one batch and returns its loss; `after_epoch` may
/// attach a held-out metric.
template <typename Step>
void run_stage(const std::string& name, const StagePlan& stage, const TrainPlan& plan, std::size_t n,
               std::vector<nn::Param> params, std::uint64_t stream, TrainLog& log, Step step,
               const std::function<void(EpochRecord&)>& after_epoch = {}) {
    nn::SgdOptimizer opt(stage.lr, plan.momentum, plan.nesterov, plan.weight_decay);
    const auto schedule = stage.schedule();
    nn::Rng order_rng(plan.seed * 0x9E3779B97F4A7C15ull + stream);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int epoch = 0; epoch < stage.epochs; ++epoch) {
        opt.set_lr(schedule.lr_at_epoch(epoch));
        order_rng.shuffle(order.begin(), order.end());
        double total = 0.0;
        std::size_t rows = 0;
        for (const auto& [b, e] : batches(n, plan.batch_size)) {
            for (auto& p : params) p.grad->fill(0.0);
            const double loss = step(b, e, order);
            if (!std::isfinite(loss)) throw DivergenceError(name, epoch);
            opt.step(params);
            total += loss * static_cast<double>(e - b);
            rows += e - b;
        }
        EpochRecord rec{name, epoch, opt.lr(), rows ? total / static_cast<double>(rows) : 0.0};
        if (after_epoch) after_epoch(rec);
        for (auto& p : params)
            if (!p.value->all_finite()) throw DivergenceError(name, epoch);
        log.epochs.push_back(rec);
    }
}

// Noise stream tags, one per stage, so stages never share channel draws.
inline constexpr std::uint64_t kStreamBaseline = 11, kStreamAutoencoder = 12, kStreamEndToEnd = 13,
                               kStreamDigital = 14, kStreamHeldOut = 15;

} // namespace detail

/// Trains a JSCC scheme. Three steps unless plan.single_step:
///   1. baseline: extractors + head(s), weighted BCE, no channel
///   2. autoencoder on frozen split-point features, L1 reconstruction through the channel
///   3. everything end to end, weighted BCE through the channel
/// `held_out` (optional) adds a per-epoch held-out metric to the log.
inline TrainResult train_multistep(SchemeKind kind, const SchemeDims& dims, const channel::ChannelConfig& ch,
                                   channel::NomaPower noma, const TrainPlan& plan, const data::Dataset& train,
                                   const data::Dataset* held_out = nullptr) {
    if (!is_jscc(kind)) throw ConfigError("train_multistep: use train_digital for the digital scheme");
    plan.validate();
    if (train.size() < 2) throw ConfigError("training split needs at least two samples");
    TrainResult res{SchemeModel(kind, dims, ch, noma, plan.seed), {}};
    SchemeModel& m = res.model;
    const auto tr = detail::split_of(train);
    const auto pos_w = nn::imbalance_pos_weights(tr.y);
    const double nv = m.noise_var();
    const std::size_t n = train.size();

    std::optional<detail::Split> ho;
    if (held_out && held_out->size() > 0) ho = detail::split_of(*held_out);

    auto ce_step = [&](bool through_channel, channel::NoiseSource& noise) {
        return [&, through_channel](std::size_t b, std::size_t e, const std::vector<std::size_t>& order) {
            const Tensor x1 = detail::gather_rows(tr.x1, order, b, e);
            const Tensor x2 = detail::gather_rows(tr.x2, order, b, e);
            const Tensor y = detail::gather_rows(tr.y, order, b, e);
            const Tensor logits = through_channel ? m.forward(x1, x2, Mode::Train, noise, nv)
                                                  : m.baseline_forward(x1, x2, Mode::Train);
            const auto loss = nn::weighted_bce_loss(logits, y, pos_w);
            if (!std::isfinite(loss.value)) return loss.value;
            if (through_channel) m.backward(loss.grad);
            else m.baseline_backward(loss.grad);
            return loss.value;
        };
    };

    if (!plan.single_step) {
        channel::NoiseSource unused(plan.seed, detail::kStreamBaseline);
        detail::run_stage("baseline", plan.baseline, plan, n, m.params(SchemeModel::Scope::Baseline),
                          detail::kStreamBaseline, res.log, ce_step(false, unused), [&](EpochRecord& r) {
                              if (ho) r.held_out = eval::mean_balanced_accuracy(m.baseline_infer(ho->x1, ho->x2), ho->y);
                          });

        const Tensor f_train = m.features(tr.x1, tr.x2);
        std::optional<Tensor> f_held;
        if (ho) f_held = m.features(ho->x1, ho->x2);
        channel::NoiseSource noise(plan.seed, detail::kStreamAutoencoder);
        detail::run_stage(
            "autoencoder", plan.autoencoder, plan, n, m.params(SchemeModel::Scope::Autoencoder),
            detail::kStreamAutoencoder, res.log,
            [&](std::size_t b, std::size_t e, const std::vector<std::size_t>& order) {
                const Tensor f = detail::gather_rows(f_train, order, b, e);
                const auto loss = nn::l1_loss(m.autoencode_forward(f, Mode::Train, noise, nv), f);
                if (std::isfinite(loss.value)) m.autoencode_backward(loss.grad);
                return loss.value;
            },
            [&](EpochRecord& r) {
                if (!f_held) return;
                channel::NoiseSource eval_noise(plan.seed, detail::kStreamHeldOut);
                r.held_out = nn::l1_loss(m.autoencode_infer(*f_held, eval_noise, nv), *f_held).value;
            });
    }

    channel::NoiseSource noise(plan.seed, detail::kStreamEndToEnd);
    detail::run_stage("end_to_end", plan.end_to_end, plan, n, m.params(), detail::kStreamEndToEnd, res.log,
                      ce_step(true, noise), [&](EpochRecord& r) {
                          if (!ho) return;
                          channel::NoiseSource eval_noise(plan.seed, detail::kStreamHeldOut);
                          r.held_out = eval::mean_balanced_accuracy(m.infer(ho->x1, ho->x2, eval_noise, nv), ho->y);
                      });
    return res;
}

/// Rate term over a (rows x 2L) latent batch: one shared model or one per column.
inline entropy::RateTerm digital_rate(SchemeModel& m, const Tensor& q, double weight) {
    auto& gmms = m.gmms();
    if (gmms.size() == 1) return gmms[0].rate_term(q, weight);
    entropy::RateTerm total{0.0, Tensor(q.shape()), 0};
    for (std::size_t c = 0; c < q.cols(); ++c) {
        const auto part = gmms[c].rate_term(nn::slice_cols(q, c, 1), weight);
        total.bits_per_sample += part.bits_per_sample;
        total.clamp_count += part.clamp_count;
        for (std::size_t r = 0; r < q.rows(); ++r) total.grad_q.at(r, c) = part.grad_q.at(r, 0);
    }
    return total;
}

/// Widest alphabet the coder is given; anything outside is escaped.
inline constexpr std::int64_t kMaxAlphabet = 4096;

/// [min - 4, max + 4] of the rounded training latents, capped at kMaxAlphabet
/// symbols around the median.
inline entropy::SymbolAlphabet fit_alphabet(const Tensor& q_train) {
    auto symbols = entropy::to_symbols(q_train);
    auto a = entropy::SymbolAlphabet::covering(symbols, 4);
    if (static_cast<std::int64_t>(a.size()) > kMaxAlphabet) {
        std::nth_element(symbols.begin(), symbols.begin() + static_cast<std::ptrdiff_t>(symbols.size() / 2),
                         symbols.end());
        const std::int64_t mid = symbols[symbols.size() / 2];
        a = {mid - kMaxAlphabet / 2, mid + kMaxAlphabet / 2 - 1};
    }
    return a;
}

/// Digital scheme: extractor -> dense N->L per camera -> additive uniform noise
/// -> classifier, loss = weighted BCE + lambda * rate. The arithmetic coder is
/// not used here; the coding alphabet is fixed from the training latents at the end.
inline TrainResult train_digital(const SchemeDims& dims, double lambda, const TrainPlan& plan,
                                 const data::Dataset& train, const data::Dataset* held_out = nullptr) {
    plan.validate();
    if (lambda < 0.0) throw ConfigError("digital lambda must be >= 0");
    if (train.size() < 2) throw ConfigError("training split needs at least two samples");
    channel::ChannelConfig ch;
    ch.bandwidth = static_cast<int>(dims.bandwidth);
    TrainResult res{SchemeModel(SchemeKind::Digital, dims, ch, channel::NomaPower::SplitTotal, plan.seed), {}};
    SchemeModel& m = res.model;
    const auto tr = detail::split_of(train);
    const auto pos_w = nn::imbalance_pos_weights(tr.y);
    std::optional<detail::Split> ho;
    if (held_out && held_out->size() > 0) ho = detail::split_of(*held_out);

    channel::NoiseSource noise(plan.seed, detail::kStreamDigital);
    double rate_sum = 0.0;
    std::size_t rate_rows = 0;
    detail::run_stage(
        "digital", plan.digital, plan, train.size(), m.params(), detail::kStreamDigital, res.log,
        [&](std::size_t b, std::size_t e, const std::vector<std::size_t>& order) {
            const Tensor x1 = detail::gather_rows(tr.x1, order, b, e);
            const Tensor x2 = detail::gather_rows(tr.x2, order, b, e);
            const Tensor y = detail::gather_rows(tr.y, order, b, e);
            const Tensor q = entropy::quantize_train(m.digital_latents(x1, x2, Mode::Train), noise);
            const auto ce = nn::weighted_bce_loss(m.digital_classify(q, Mode::Train), y, pos_w);
            const auto rate = digital_rate(m, q, lambda);
            const double loss = ce.value + lambda * rate.bits_per_sample;
            if (!std::isfinite(loss)) return loss;
            rate_sum += rate.bits_per_sample * static_cast<double>(e - b);
            rate_rows += e - b;
            Tensor dq = m.digital_classify_backward(ce.grad);
            dq += rate.grad_q;
            m.digital_latents_backward(dq);
            return loss;
        },
        [&](EpochRecord& r) {
            r.rate_bits = rate_rows ? rate_sum / static_cast<double>(rate_rows) : 0.0;
            rate_sum = 0.0;
            rate_rows = 0;
            if (ho) {
                const Tensor q = entropy::quantize_eval(m.digital_latents_infer(ho->x1, ho->x2));
                r.held_out = eval::mean_balanced_accuracy(m.digital_classify_infer(q), ho->y);
            }
        });
    m.set_alphabet(fit_alphabet(entropy::quantize_eval(m.digital_latents_infer(tr.x1, tr.x2))));
    return res;
}

/// Digital test-split result: accuracy, coded rate, and the SNR a capacity-
/// achieving code would need to carry that rate over the bandwidth.
struct DigitalEval {
    double accuracy = 0.0;
    double avg_bits = 0.0;
    double required_snr_db = 0.0;
    std::size_t max_bits = 0;
    bool roundtrip_ok = true;
    std::vector<std::size_t> bits;
};

inline DigitalEval evaluate_digital(const SchemeModel& m, const data::Dataset& test) {
    const auto t = detail::split_of(test);
    const auto pass = m.digital_infer(t.x1, t.x2);
    DigitalEval out;
    out.accuracy = eval::mean_balanced_accuracy(pass.logits, t.y);
    out.bits = pass.bits;
    out.roundtrip_ok = pass.roundtrip_ok;
    double sum = 0.0;
    for (auto b : pass.bits) {
        sum += static_cast<double>(b);
        out.max_bits = std::max(out.max_bits, b);
    }
    out.avg_bits = pass.bits.empty() ? 0.0 : sum / static_cast<double>(pass.bits.size());
    out.required_snr_db = channel::rate_to_required_snr(out.avg_bits, static_cast<double>(m.dims().bandwidth));
    return out;
}

} // namespace jscc::schemes
