#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include "jscc/config/config.hpp"
#include "jscc/data/feature_io.hpp"
#include "jscc/eval/run.hpp"
#include "jscc/io.hpp"
#include "jscc/nn/checkpoint.hpp"

namespace jscc::eval {

using config::ExperimentConfig;
using schemes::SchemeKind;

struct Datasets {
    data::Dataset train, test;
};

/// Synthetic data is drawn from the master seed; file data is loaded as is.
inline Datasets load_datasets(const ExperimentConfig& cfg) {
    if (cfg.data_source == "files") {
        Datasets d{data::load_features(cfg.train_file), data::load_features(cfg.test_file)};
        if (d.train.descriptor_dim != d.test.descriptor_dim || d.train.ids1 != d.test.ids1 || d.train.ids2 != d.test.ids2)
            throw ConfigError("train and test feature files disagree on dimensions");
        return d;
    }
    auto syn = cfg.synthetic;
    syn.seed = cfg.master_seed;
    auto g = data::generate_synthetic(syn);
    return {std::move(g.train), std::move(g.test)};
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string fmt_num(double v) { return config::detail::fmt(v); }

/// One trained model of the sweep.
struct Unit {
    SchemeKind kind;
    std::size_t bandwidth = 0;  // JSCC only
    double snr_db = 0.0;        // JSCC only
    std::size_t latent_dim = 0, gmm_components = 0;
    double lambda = 0.0;  // digital only
    std::size_t seed_index = 0;

    std::string name() const {
        if (kind == SchemeKind::Digital)
            return "digital_L" + std::to_string(latent_dim) + "_K" + std::to_string(gmm_components) + "_lam" +
                   fmt_num(lambda) + "_seed" + std::to_string(seed_index);
        return schemes::to_string(kind) + "_B" + std::to_string(bandwidth) + "_snr" + fmt_num(snr_db) + "_seed" +
               std::to_string(seed_index);
    }
};

/// Training seed of experiment k: shared by every scheme so runs are paired.
inline std::uint64_t experiment_seed(std::uint64_t master, std::size_t k) {
    return fnv1a("seed|" + std::to_string(master) + "|" + std::to_string(k));
}

inline schemes::SchemeDims unit_dims(const ExperimentConfig& cfg, const Unit& u, const data::Dataset& train) {
    auto d = cfg.dims;
    d.descriptor_dim = train.descriptor_dim;
    d.ids1 = train.ids1;
    d.ids2 = train.ids2;
    if (u.kind == SchemeKind::Digital) {
        d.bandwidth = 1;  // unused: the digital link is ideal
        d.latent_dim = u.latent_dim;
        d.gmm_components = u.gmm_components;
    } else {
        d.bandwidth = u.bandwidth;
    }
    return d;
}

inline schemes::TrainPlan unit_plan(const ExperimentConfig& cfg, const Unit& u) {
    auto p = cfg.plan;
    p.seed = experiment_seed(cfg.master_seed, u.seed_index);
    return p;
}

/// Everything that determines a unit's trained weights.
inline std::string unit_hash(const ExperimentConfig& cfg, const Unit& u, const Datasets& ds) {
    nlohmann::json j;
    const auto plan = unit_plan(cfg, u);
    j["name"] = u.name();
    j["dims"] = schemes::to_json(unit_dims(cfg, u, ds.train));
    j["power"] = cfg.power;
    j["noma_power"] = schemes::to_string(cfg.noma_power);
    j["plan"] = {{"seed", plan.seed}, {"momentum", plan.momentum}, {"nesterov", plan.nesterov},
                 {"weight_decay", plan.weight_decay}, {"batch", plan.batch_size}, {"single_step", plan.single_step}};
    for (auto [name, st] : {std::pair{"baseline", plan.baseline}, std::pair{"autoencoder", plan.autoencoder},
                            std::pair{"end_to_end", plan.end_to_end}, std::pair{"digital", plan.digital}})
        j["plan"][name] = {st.epochs, st.lr, st.factor, st.period, st.milestones};
    const auto feat = data::encode_features(ds.train);
    j["data"] = hex64(fnv1a(std::string_view(reinterpret_cast<const char*>(feat.data()), feat.size())));
    return hex64(fnv1a(j.dump()));
}

struct TrainedUnit {
    schemes::SchemeModel model;
    schemes::TrainLog log;
    double train_time_s = 0.0;
    bool loaded = false;
};

/// Trains one unit from scratch.
inline TrainedUnit train_unit(const ExperimentConfig& cfg, const Unit& u, const Datasets& ds) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto dims = unit_dims(cfg, u, ds.train);
    const auto plan = unit_plan(cfg, u);
    auto res = [&] {
        if (u.kind == SchemeKind::Digital) return schemes::train_digital(dims, u.lambda, plan, ds.train, &ds.test);
        channel::ChannelConfig ch;
        ch.snr_db = u.snr_db;
        ch.power = cfg.power;
        return schemes::train_multistep(u.kind, dims, ch, cfg.noma_power, plan, ds.train, &ds.test);
    }();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(res.model), std::move(res.log), secs, false};
}

/// Loads `dir/<name>.ckpt` when its recorded hash matches, otherwise trains
/// and writes the checkpoint and log (atomically).
inline TrainedUnit train_or_load(const ExperimentConfig& cfg, const Unit& u, const Datasets& ds,
                                 const std::filesystem::path& dir) {
    const std::string hash = unit_hash(cfg, u, ds);
    const auto ckpt_path = dir / (u.name() + ".ckpt");
    if (std::filesystem::exists(ckpt_path)) {
        try {
            const auto ck = nn::load_checkpoint(ckpt_path);
            if (ck.meta.value("cell_hash", std::string()) == hash)
                return {schemes::SchemeModel::from_checkpoint(ck), {}, 0.0, true};
        } catch (const IoError&) {
            // unreadable checkpoint: retrain
        }
    }
    auto t = train_unit(cfg, u, ds);
    std::filesystem::create_directories(dir);
    nn::save_checkpoint(ckpt_path, t.model.to_checkpoint({{"cell_hash", hash}, {"unit", u.name()}}));
    io::write_file_atomic(dir / (u.name() + ".log.json"), t.log.to_json().dump(1) + "\n");
    return t;
}

struct UnitOutcome {
    std::optional<ModelEval> jscc;
    std::optional<schemes::DigitalEval> digital;
    double train_time_s = 0.0;
    bool loaded = false;
    std::string error;
    bool diverged = false;
};

inline channel::NoiseSource eval_noise(std::uint64_t master, SchemeKind kind, std::size_t b, double snr) {
    return channel::NoiseSource(master, fnv1a("eval|" + schemes::to_string(kind) + "|" + std::to_string(b) + "|" + fmt_num(snr)));
}

struct SweepOptions {
    std::filesystem::path output_dir = "out";
    std::size_t jobs = 1;
    std::function<void(const std::string&)> log;  // progress lines; may be empty
};

struct SweepResult {
    std::vector<ResultCell> cells;
    std::vector<std::string> failures;
    std::size_t trained = 0, loaded = 0;
    bool diverged = false;
};

inline const char* kCsvHeader = "scheme,B,snr_db,seed_count,n_evals,q1,q2,q3,train_time_s,extra\n";

inline std::string csv_row(const ResultCell& c) {
    return c.scheme + "," + std::to_string(c.bandwidth) + "," + fmt_num(c.snr_db) + "," + std::to_string(c.seed_count) +
           "," + std::to_string(c.n_evals) + "," + fmt_num(c.q.q1) + "," + fmt_num(c.q.q2) + "," + fmt_num(c.q.q3) + "," +
           fmt_num(c.train_time_s) + "," + c.extra + "\n";
}

inline std::string results_csv(const std::vector<ResultCell>& cells) {
    std::string out = kCsvHeader;
    for (const auto& c : cells) out += csv_row(c);
    return out;
}

/// Tab-separated series files: for each scheme, accuracy vs SNR at each B
/// and accuracy vs B at each SNR. Returns the written paths.
inline std::vector<std::filesystem::path> write_plot_data(const std::vector<ResultCell>& cells,
                                                          const std::filesystem::path& dir) {
    std::map<std::string, std::vector<const ResultCell*>> by_series;
    std::vector<std::string> order;
    for (const auto& c : cells) {
        for (const std::string key : {c.scheme + "__B" + std::to_string(c.bandwidth) + "__vs_snr",
                                      c.scheme + "__snr" + fmt_num(c.snr_db) + "__vs_B"}) {
            if (!by_series.count(key)) order.push_back(key);
            by_series[key].push_back(&c);
        }
    }
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    for (const auto& key : order) {
        const bool vs_snr = key.ends_with("__vs_snr");
        auto rows = by_series[key];
        std::stable_sort(rows.begin(), rows.end(), [&](auto* a, auto* b) {
            return vs_snr ? a->snr_db < b->snr_db : a->bandwidth < b->bandwidth;
        });
        std::string text = std::string(vs_snr ? "snr_db" : "B") + "\tq1\tq2\tq3\n";
        for (const auto* c : rows)
            text += (vs_snr ? fmt_num(c->snr_db) : std::to_string(c->bandwidth)) + "\t" + fmt_num(c->q.q1) + "\t" +
                    fmt_num(c->q.q2) + "\t" + fmt_num(c->q.q3) + "\n";
        const auto path = dir / (key + ".tsv");
        io::write_file_atomic(path, text);
        written.push_back(path);
    }
    return written;
}

/// Per-camera bandwidths for Opt.BW: B/2 of each even grid budget plus extras.
inline std::vector<std::size_t> opt_bw_set(const ExperimentConfig& cfg) {
    std::set<std::size_t> s(cfg.opt_bw_set.begin(), cfg.opt_bw_set.end());
    for (auto b : cfg.bandwidths)
        if (b % 2 == 0) s.insert(b / 2);
    return {s.begin(), s.end()};
}

/// Trains (or resumes) every unit of the grid, evaluates, aggregates, and
/// writes results.csv, plot/*.tsv, resolved.cfg under opts.output_dir.
inline SweepResult sweep(const ExperimentConfig& cfg, const SweepOptions& opts) {
    cfg.validate();
    const Datasets ds = load_datasets(cfg);
    const auto ckpt_dir = opts.output_dir / "checkpoints";
    std::filesystem::create_directories(opts.output_dir);
    io::write_file_atomic(opts.output_dir / "resolved.cfg", config::to_text(cfg));

    auto has = [&](SchemeKind k) { return std::find(cfg.schemes.begin(), cfg.schemes.end(), k) != cfg.schemes.end(); };
    const bool want_single = has(SchemeKind::SingleUsers);
    const auto bw_set = opt_bw_set(cfg);

    // Unit list, deduplicated by name, in deterministic order.
    std::vector<Unit> units;
    std::map<std::string, std::size_t> index;
    auto add = [&](Unit u) {
        const auto n = u.name();
        if (!index.count(n)) {
            index[n] = units.size();
            units.push_back(u);
        }
    };
    for (auto kind : cfg.schemes) {
        if (kind == SchemeKind::Digital) continue;
        for (auto b : cfg.bandwidths)
            for (double s : cfg.snr_db)
                for (std::size_t k = 0; k < cfg.seeds; ++k) add({kind, b, s, 0, 0, 0.0, k});
    }
    if (want_single)
        for (auto b : bw_set)
            for (double s : cfg.snr_db)
                for (std::size_t k = 0; k < cfg.seeds; ++k) add({SchemeKind::SingleUsers, 2 * b, s, 0, 0, 0.0, k});
    if (has(SchemeKind::Digital))
        for (auto l : cfg.latent_dims)
            for (auto kc : cfg.gmm_components)
                for (double lam : cfg.lambdas)
                    for (std::size_t k = 0; k < cfg.seeds; ++k) add({SchemeKind::Digital, 0, 0.0, l, kc, lam, k});

    std::vector<UnitOutcome> outcomes(units.size());
    std::mutex log_mutex;
    auto say = [&](const std::string& s) {
        if (!opts.log) return;
        std::lock_guard lock(log_mutex);
        opts.log(s);
    };
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < units.size(); i = next++) {
            const Unit& u = units[i];
            UnitOutcome& out = outcomes[i];
            try {
                auto t = train_or_load(cfg, u, ds, ckpt_dir);
                out.loaded = t.loaded;
                out.train_time_s = t.train_time_s;
                if (u.kind == SchemeKind::Digital) {
                    out.digital = schemes::evaluate_digital(t.model, ds.test);
                } else {
                    out.jscc = evaluate_model(t.model, ds.test, cfg.n_evals,
                                              eval_noise(cfg.master_seed, u.kind, u.bandwidth, u.snr_db).fork(u.seed_index));
                }
                say((t.loaded ? "loaded  " : "trained ") + u.name());
            } catch (const DivergenceError& e) {
                out.error = e.what();
                out.diverged = true;
                say("FAILED  " + u.name() + ": " + e.what());
            } catch (const std::exception& e) {
                out.error = e.what();
                say("FAILED  " + u.name() + ": " + e.what());
            }
        }
    };
    const std::size_t jobs = std::max<std::size_t>(1, std::min(opts.jobs, units.size()));
    std::vector<std::thread> pool;
    for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    SweepResult res;
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (!outcomes[i].error.empty()) {
            res.failures.push_back(units[i].name() + ": " + outcomes[i].error);
            res.diverged = res.diverged || outcomes[i].diverged;
        } else if (outcomes[i].loaded) {
            ++res.loaded;
        } else {
            ++res.trained;
        }
    }
    auto unit_of = [&](const Unit& u) -> const UnitOutcome& { return outcomes[index.at(u.name())]; };
    auto time_of = [&](double t) { return cfg.record_train_time ? t : 0.0; };

    // JSCC cells.
    for (auto kind : cfg.schemes) {
        if (kind == SchemeKind::Digital) continue;
        for (auto b : cfg.bandwidths)
            for (double s : cfg.snr_db) {
                ResultCell cell{schemes::to_string(kind), b, s, cfg.seeds, cfg.n_evals};
                bool ok = true;
                schemes::PowerMonitor power;
                for (std::size_t k = 0; k < cfg.seeds; ++k) {
                    const auto& o = unit_of({kind, b, s, 0, 0, 0.0, k});
                    if (!o.jscc) {
                        ok = false;
                        break;
                    }
                    cell.accuracies.insert(cell.accuracies.end(), o.jscc->accuracy.begin(), o.jscc->accuracy.end());
                    cell.train_time_s += time_of(o.train_time_s);
                    power.merge(o.jscc->power);
                }
                if (!ok) continue;
                cell.summarize();
                cell.extra = "power_violations=" + std::to_string(power.violations);
                res.cells.push_back(std::move(cell));
            }
    }

    // Single Users + Opt.BW.
    if (want_single)
        for (auto budget : cfg.bandwidths)
            for (double s : cfg.snr_db) {
                std::vector<std::vector<ModelEval>> evals;
                bool ok = true;
                double secs = 0.0;
                for (auto b : bw_set) {
                    std::vector<ModelEval> per_seed;
                    for (std::size_t k = 0; k < cfg.seeds && ok; ++k) {
                        const auto& o = unit_of({SchemeKind::SingleUsers, 2 * b, s, 0, 0, 0.0, k});
                        if (!o.jscc) ok = false;
                        else {
                            per_seed.push_back(*o.jscc);
                            secs += time_of(o.train_time_s);
                        }
                    }
                    evals.push_back(std::move(per_seed));
                }
                if (!ok) continue;
                try {
                    auto cell = opt_bw_cell(bw_set, evals, budget, s, ds.train.ids1, ds.train.ids2);
                    cell.train_time_s = secs;
                    res.cells.push_back(std::move(cell));
                } catch (const ConfigError& e) {
                    res.failures.push_back("single_users_opt_bw_B" + std::to_string(budget) + ": " + e.what());
                }
            }

    // Digital: best accuracy among configurations whose rate fits the channel.
    if (has(SchemeKind::Digital)) {
        struct DigitalConfig {
            std::size_t l, k;
            double lambda;
            std::vector<double> acc;
            double bits = 0.0, secs = 0.0;
        };
        std::vector<DigitalConfig> configs;
        for (auto l : cfg.latent_dims)
            for (auto kc : cfg.gmm_components)
                for (double lam : cfg.lambdas) {
                    DigitalConfig dc{l, kc, lam, {}};
                    bool ok = true;
                    for (std::size_t k = 0; k < cfg.seeds; ++k) {
                        const auto& o = unit_of({SchemeKind::Digital, 0, 0.0, l, kc, lam, k});
                        if (!o.digital) {
                            ok = false;
                            break;
                        }
                        dc.acc.push_back(o.digital->accuracy);
                        dc.bits += o.digital->avg_bits / static_cast<double>(cfg.seeds);
                        dc.secs += time_of(o.train_time_s);
                    }
                    if (ok) configs.push_back(std::move(dc));
                }
        for (auto b : cfg.bandwidths)
            for (double s : cfg.snr_db) {
                const DigitalConfig* best = nullptr;
                double best_median = 0.0;
                for (const auto& dc : configs) {
                    if (channel::rate_to_required_snr(dc.bits, static_cast<double>(b)) > s) continue;
                    const double med = quartile_summary(dc.acc).q2;
                    if (!best || med > best_median) {
                        best = &dc;
                        best_median = med;
                    }
                }
                ResultCell cell{"digital", b, s, cfg.seeds, 1};
                if (best) {
                    cell.accuracies = best->acc;
                    cell.train_time_s = best->secs;
                    cell.extra = "avg_bits=" + fmt_num(best->bits) + ";required_snr_db=" +
                                 fmt_num(channel::rate_to_required_snr(best->bits, static_cast<double>(b))) +
                                 ";latent_dim=" + std::to_string(best->l) + ";gmm_components=" + std::to_string(best->k) +
                                 ";lambda=" + fmt_num(best->lambda);
                } else {
                    cell.accuracies = {0.5};
                    cell.extra = "infeasible";
                }
                cell.summarize();
                res.cells.push_back(std::move(cell));
            }
    }

    io::write_file_atomic(opts.output_dir / "results.csv", results_csv(res.cells));
    write_plot_data(res.cells, opts.output_dir / "plot");
    std::string fails;
    for (const auto& f : res.failures) fails += f + "\n";
    const auto fail_path = opts.output_dir / "failures.txt";
    if (!fails.empty()) io::write_file_atomic(fail_path, fails);
    else std::filesystem::remove(fail_path);
    return res;
}

} // namespace jscc::eval
