#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "jscc/error.hpp"
#include "jscc/nn/tensor.hpp"

namespace jscc::eval {

using nn::Tensor;

/// Per-class confusion counts of a multi-label predictor.
struct ConfusionCounts {
    std::vector<std::size_t> tp, fp, tn, fn;

    explicit ConfusionCounts(std::size_t classes = 0) : tp(classes), fp(classes), tn(classes), fn(classes) {}
    std::size_t classes() const { return tp.size(); }
    std::size_t positives(std::size_t c) const { return tp[c] + fn[c]; }
    std::size_t negatives(std::size_t c) const { return tn[c] + fp[c]; }
};

/// Predicts class c present when sigmoid(logit) > 0.5, i.e. logit > 0.
inline ConfusionCounts confusion(const Tensor& logits, const Tensor& targets) {
    logits.require_same_shape(targets, "confusion");
    ConfusionCounts cc(logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r)
        for (std::size_t c = 0; c < logits.cols(); ++c) {
            const bool pred = logits.at(r, c) > 0.0;
            const bool truth = targets.at(r, c) > 0.5;
            if (pred && truth) ++cc.tp[c];
            else if (pred) ++cc.fp[c];
            else if (truth) ++cc.fn[c];
            else ++cc.tn[c];
        }
    return cc;
}

struct BalancedAccuracy {
    std::vector<double> per_class;       // NaN for excluded classes
    std::vector<std::size_t> excluded;   // classes lacking positives or negatives
    double mean = std::numeric_limits<double>::quiet_NaN();
};

/// (TPR + TNR) / 2 per class over classes [begin, begin + count); the mean skips
/// classes with no positives or no negatives in the split.
inline BalancedAccuracy balanced_accuracy(const ConfusionCounts& cc, std::size_t begin = 0,
                                          std::size_t count = std::numeric_limits<std::size_t>::max()) {
    const std::size_t end = count >= cc.classes() - std::min(begin, cc.classes()) ? cc.classes() : begin + count;
    BalancedAccuracy out;
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t c = begin; c < end; ++c) {
        if (cc.positives(c) == 0 || cc.negatives(c) == 0) {
            out.per_class.push_back(std::numeric_limits<double>::quiet_NaN());
            out.excluded.push_back(c);
            continue;
        }
        const double tpr = static_cast<double>(cc.tp[c]) / static_cast<double>(cc.positives(c));
        const double tnr = static_cast<double>(cc.tn[c]) / static_cast<double>(cc.negatives(c));
        out.per_class.push_back(0.5 * (tpr + tnr));
        sum += out.per_class.back();
        ++used;
    }
    if (used > 0) out.mean = sum / static_cast<double>(used);
    return out;
}

inline double mean_balanced_accuracy(const Tensor& logits, const Tensor& targets) {
    return balanced_accuracy(confusion(logits, targets)).mean;
}

struct Quartiles {
    double q1, q2, q3;
};

/// Linear interpolation between order statistics: position p (n - 1).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline Quartiles quartile_summary(std::vector<double> values) {
    if (values.empty()) throw Error("quartile_summary: empty input");
    std::sort(values.begin(), values.end());
    return {quantile_sorted(values, 0.25), quantile_sorted(values, 0.5), quantile_sorted(values, 0.75)};
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// acc[e][k][i]: mean balanced accuracy of camera k in experiment e when that
/// camera alone transmits over bandwidths[i] channel uses.
struct AccuracyTable {
    std::vector<std::size_t> bandwidths;
    std::vector<std::array<std::vector<double>, 2>> experiments;

    void validate() const {
        for (const auto& e : experiments)
            for (const auto& cam : e)
                if (cam.size() != bandwidths.size())
                    throw DimensionError("accuracy table: row width differs from bandwidth set");
    }
    std::size_t index_of(std::size_t b) const {
        const auto it = std::find(bandwidths.begin(), bandwidths.end(), b);
        return it == bandwidths.end() ? bandwidths.size() : static_cast<std::size_t>(it - bandwidths.begin());
    }
};

/// w_k = |ID_k| / (|ID_1| + |ID_2|).
inline std::array<double, 2> id_weights(std::size_t ids1, std::size_t ids2) {
    const double t = static_cast<double>(ids1 + ids2);
    return {static_cast<double>(ids1) / t, static_cast<double>(ids2) / t};
}

inline double weighted_pair(const std::array<double, 2>& w, double a1, double a2) { return w[0] * a1 + w[1] * a2; }

struct SplitChoice {
    std::size_t b1, b2;
    double value;
};

/// Best split b1 + b2 = budget for one experiment (ties: smallest b1).
inline SplitChoice best_split(const AccuracyTable& t, std::size_t e, std::size_t budget, const std::array<double, 2>& w) {
    SplitChoice best{0, 0, -std::numeric_limits<double>::infinity()};
    bool any = false;
    for (std::size_t i = 0; i < t.bandwidths.size(); ++i) {
        const std::size_t b1 = t.bandwidths[i];
        if (b1 >= budget) continue;
        const std::size_t j = t.index_of(budget - b1);
        if (j == t.bandwidths.size()) continue;
        const double v = weighted_pair(w, t.experiments[e][0][i], t.experiments[e][1][j]);
        if (!any || v > best.value || (v == best.value && b1 < best.b1)) best = {b1, budget - b1, v};
        any = true;
    }
    if (!any) {
        std::string set;
        for (auto b : t.bandwidths) set += (set.empty() ? "" : ",") + std::to_string(b);
        throw ConfigError("acc_sep_optimal: no b1 + b2 = " + std::to_string(budget) + " with b1, b2 in {" + set + "}");
    }
    return best;
}

/// Average over experiments of the best weighted per-camera accuracy over all
/// feasible bandwidth splits.
inline double acc_sep_optimal(const AccuracyTable& t, std::size_t budget, std::size_t ids1, std::size_t ids2) {
    t.validate();
    if (t.experiments.empty()) throw ConfigError("acc_sep_optimal: no experiments");
    const auto w = id_weights(ids1, ids2);
    double sum = 0.0;
    for (std::size_t e = 0; e < t.experiments.size(); ++e) sum += best_split(t, e, budget, w).value;
    return sum / static_cast<double>(t.experiments.size());
}

/// Equal split b1 = b2 = budget / 2, averaged over experiments.
inline double acc_sep_equal(const AccuracyTable& t, std::size_t budget, std::size_t ids1, std::size_t ids2) {
    t.validate();
    const std::size_t i = t.index_of(budget / 2);
    if (budget % 2 != 0 || i == t.bandwidths.size())
        throw ConfigError("acc_sep_equal: budget/2 = " + std::to_string(budget / 2) + " not in the bandwidth set");
    const auto w = id_weights(ids1, ids2);
    double sum = 0.0;
    for (const auto& e : t.experiments) sum += weighted_pair(w, e[0][i], e[1][i]);
    return sum / static_cast<double>(t.experiments.size());
}

} // namespace jscc::eval
