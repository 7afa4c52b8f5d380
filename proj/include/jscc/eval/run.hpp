#pragma once

#include <array>
#include <string>
#include <vector>

#include "jscc/data/dataset.hpp"
#include "jscc/eval/metrics.hpp"
#include "jscc/schemes/scheme.hpp"

namespace jscc::eval {

/// One point of a results matrix.
struct ResultCell {
    std::string scheme;
    std::size_t bandwidth = 0;
    double snr_db = 0.0;
    std::size_t seed_count = 0;
    std::size_t n_evals = 0;
    std::vector<double> accuracies;  // pooled over seeds, seed-major
    Quartiles q{0, 0, 0};
    double train_time_s = 0.0;
    std::string extra;

    void summarize() { q = quartile_summary(accuracies); }
};

/// Accuracies of one trained model over repeated noise draws.
struct ModelEval {
    std::vector<double> accuracy;                    // [eval]
    std::array<std::vector<double>, 2> per_camera;   // [camera][eval], class ranges [0,I1) and [I1,I1+I2)
    schemes::PowerMonitor power;
};

/// n_evals independent channel realizations over the whole test split; eval i
/// draws from noise.fork(i).
inline ModelEval evaluate_model(const schemes::SchemeModel& m, const data::Dataset& test, std::size_t n_evals,
                                const channel::NoiseSource& noise) {
    if (n_evals == 0) throw ConfigError("eval.n_evals must be >= 1");
    const auto b = data::make_batch(test);
    const Tensor y = nn::concat_cols(b.y1, b.y2);
    const double nv = m.noise_var();
    ModelEval out;
    for (std::size_t i = 0; i < n_evals; ++i) {
        auto stream = noise.fork(i);
        const Tensor logits = m.infer(b.x1, b.x2, stream, nv, &out.power);
        const auto cc = confusion(logits, y);
        out.accuracy.push_back(balanced_accuracy(cc).mean);
        out.per_camera[0].push_back(balanced_accuracy(cc, 0, test.ids1).mean);
        out.per_camera[1].push_back(balanced_accuracy(cc, test.ids1, test.ids2).mean);
    }
    return out;
}

/// Cell over one or more independently trained models (one per seed); model s
/// uses noise.fork(s).
inline ResultCell run_cell(const std::string& scheme, std::size_t bandwidth, double snr_db,
                           const std::vector<const schemes::SchemeModel*>& models, const data::Dataset& test,
                           std::size_t n_evals, const channel::NoiseSource& noise,
                           std::vector<ModelEval>* detail = nullptr) {
    ResultCell cell{scheme, bandwidth, snr_db, models.size(), n_evals};
    for (std::size_t s = 0; s < models.size(); ++s) {
        auto ev = evaluate_model(*models[s], test, n_evals, noise.fork(s));
        cell.accuracies.insert(cell.accuracies.end(), ev.accuracy.begin(), ev.accuracy.end());
        if (detail) detail->push_back(std::move(ev));
    }
    cell.summarize();
    return cell;
}

/// Opt.BW from Single Users runs. per_camera_bw[j] = b holds the evaluations
/// of models trained with b channel uses per camera, one ModelEval per
/// experiment. Per experiment the split is chosen on mean accuracies; the
/// cell pools that split's per-evaluation weighted accuracies.
inline ResultCell opt_bw_cell(const std::vector<std::size_t>& per_camera_bw,
                              const std::vector<std::vector<ModelEval>>& evals, std::size_t budget, double snr_db,
                              std::size_t ids1, std::size_t ids2) {
    AccuracyTable t;
    t.bandwidths = per_camera_bw;
    if (evals.size() != per_camera_bw.size() || evals.empty()) throw DimensionError("opt_bw_cell: table shape");
    const std::size_t experiments = evals[0].size();
    for (std::size_t e = 0; e < experiments; ++e) {
        std::array<std::vector<double>, 2> row;
        for (std::size_t j = 0; j < per_camera_bw.size(); ++j) {
            if (evals[j].size() != experiments) throw DimensionError("opt_bw_cell: experiment counts differ");
            for (int k = 0; k < 2; ++k) row[k].push_back(mean_of(evals[j][e].per_camera[k]));
        }
        t.experiments.push_back(row);
    }
    const auto w = id_weights(ids1, ids2);
    ResultCell cell{"single_users_opt_bw", budget, snr_db, experiments, evals[0].empty() ? 0 : evals[0][0].accuracy.size()};
    for (std::size_t e = 0; e < experiments; ++e) {
        const auto s = best_split(t, e, budget, w);
        const auto& a1 = evals[t.index_of(s.b1)][e].per_camera[0];
        const auto& a2 = evals[t.index_of(s.b2)][e].per_camera[1];
        for (std::size_t i = 0; i < std::min(a1.size(), a2.size()); ++i)
            cell.accuracies.push_back(weighted_pair(w, a1[i], a2[i]));
        cell.extra += (cell.extra.empty() ? "split=" : "|") + std::to_string(s.b1) + "+" + std::to_string(s.b2);
    }
    cell.summarize();
    return cell;
}

} // namespace jscc::eval
