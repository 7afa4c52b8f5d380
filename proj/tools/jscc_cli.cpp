// jscc: command-line front end for data generation, training, evaluation,
// sweeps, camera ranking and entropy-coder debugging.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "jscc/data/correlation.hpp"
#include "jscc/entropy/range_coder.hpp"
#include "jscc/eval/sweep.hpp"

namespace {

using namespace jscc;
namespace fs = std::filesystem;

constexpr int kExitOk = 0, kExitConfig = 2, kExitDiverged = 3, kExitIo = 4;

fs::path default_output_dir() {
    if (const char* env = std::getenv("JSCC_OUTPUT_DIR"); env && *env) return env;
    return "out";
}

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir = default_output_dir().string();

    config::ExperimentConfig resolve() const {
        auto cfg = config_path.empty() ? config::ExperimentConfig{} : config::load_config(config_path);
        for (const auto& o : overrides) config::apply_override(cfg, o);
        cfg.validate();
        return cfg;
    }
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("-c,--config", c.config_path, "experiment config file");
    sub->add_option("-s,--set", c.overrides, "override, section.key=value (repeatable)");
    sub->add_option("-o,--out", c.out_dir, "output directory (default $JSCC_OUTPUT_DIR or ./out)");
}

int cmd_gen_data(const Common& c) {
    const auto cfg = c.resolve();
    if (cfg.data_source != "synthetic") throw ConfigError("gen-data needs data.source = synthetic");
    const auto ds = eval::load_datasets(cfg);
    const fs::path dir = c.out_dir;
    fs::create_directories(dir);
    data::save_features(dir / "train.feat", ds.train);
    data::save_features(dir / "test.feat", ds.test);
    io::write_file_atomic(dir / "resolved.cfg", config::to_text(cfg));
    std::cout << "wrote " << (dir / "train.feat").string() << " (" << ds.train.size() << " samples), "
              << (dir / "test.feat").string() << " (" << ds.test.size() << " samples)\n";
    return kExitOk;
}

struct UnitArgs {
    std::string scheme = "jenc2";
    std::size_t bandwidth = 16;
    double snr_db = 0.0;
    std::size_t seed_index = 0;
    double lambda = 0.01;
    std::size_t latent_dim = 8, gmm_components = 3;

    eval::Unit unit() const {
        const auto kind = schemes::parse_scheme(scheme);
        if (kind == schemes::SchemeKind::Digital) return {kind, 0, 0.0, latent_dim, gmm_components, lambda, seed_index};
        return {kind, bandwidth, snr_db, 0, 0, 0.0, seed_index};
    }
};

int cmd_train(const Common& c, const UnitArgs& a) {
    const auto cfg = c.resolve();
    const auto u = a.unit();
    const auto ds = eval::load_datasets(cfg);
    const fs::path dir = fs::path(c.out_dir) / "checkpoints";
    fs::create_directories(dir);
    auto t = eval::train_unit(cfg, u, ds);
    nn::save_checkpoint(dir / (u.name() + ".ckpt"),
                        t.model.to_checkpoint({{"cell_hash", eval::unit_hash(cfg, u, ds)}, {"unit", u.name()}}));
    io::write_file_atomic(dir / (u.name() + ".log.json"), t.log.to_json().dump(1) + "\n");
    io::write_file_atomic(fs::path(c.out_dir) / "resolved.cfg", config::to_text(cfg));
    const auto& last = t.log.epochs.back();
    std::cout << "trained " << u.name() << " in " << t.train_time_s << " s; final " << last.stage << " loss "
              << last.loss << ", held-out " << last.held_out << "\n"
              << "checkpoint " << (dir / (u.name() + ".ckpt")).string() << "\n";
    return kExitOk;
}

int cmd_eval(const Common& c, const std::string& ckpt_path, std::optional<double> snr_override) {
    const auto cfg = c.resolve();
    const auto ds = eval::load_datasets(cfg);
    auto model = schemes::SchemeModel::from_checkpoint(nn::load_checkpoint(ckpt_path));
    eval::ResultCell cell;
    if (model.kind() == schemes::SchemeKind::Digital) {
        const auto d = schemes::evaluate_digital(model, ds.test);
        cell = {"digital", 0, 0.0, 1, 1, {d.accuracy}};
        cell.extra = "avg_bits=" + eval::fmt_num(d.avg_bits) + ";roundtrip_ok=" + (d.roundtrip_ok ? "true" : "false");
        cell.summarize();
    } else {
        if (snr_override) model.set_snr_db(*snr_override);
        const auto& ch = model.channel();
        const auto noise = eval::eval_noise(cfg.master_seed, model.kind(), static_cast<std::size_t>(ch.bandwidth), ch.snr_db);
        std::vector<eval::ModelEval> detail;
        cell = eval::run_cell(schemes::to_string(model.kind()), static_cast<std::size_t>(ch.bandwidth), ch.snr_db, {&model},
                              ds.test, cfg.n_evals, noise, &detail);
        cell.extra = "power_violations=" + std::to_string(detail[0].power.violations) +
                     ";transmissions=" + std::to_string(detail[0].power.transmissions);
    }
    const fs::path dir = c.out_dir;
    fs::create_directories(dir);
    const auto path = dir / ("eval_" + fs::path(ckpt_path).stem().string() + ".csv");
    io::write_file_atomic(path, eval::results_csv({cell}));
    std::cout << eval::kCsvHeader << eval::csv_row(cell) << "wrote " << path.string() << "\n";
    return kExitOk;
}

int cmd_sweep(const Common& c, std::size_t jobs, bool quiet) {
    const auto cfg = c.resolve();
    eval::SweepOptions opts;
    opts.output_dir = c.out_dir;
    opts.jobs = jobs;
    if (!quiet) opts.log = [](const std::string& s) { std::cerr << s << "\n"; };
    const auto r = eval::sweep(cfg, opts);
    std::cout << "cells " << r.cells.size() << ", trained " << r.trained << ", loaded " << r.loaded << ", failed "
              << r.failures.size() << "\nresults " << (opts.output_dir / "results.csv").string() << "\n";
    for (const auto& f : r.failures) std::cerr << "failed: " << f << "\n";
    if (r.failures.empty()) return kExitOk;
    return r.diverged ? kExitDiverged : kExitIo;
}

int cmd_rank(const Common& c, const std::string& annotations) {
    data::AnnotationTable table;
    if (!annotations.empty()) {
        table = data::load_wildtrack_annotations(annotations);
    } else {
        auto cfg = c.resolve();
        auto syn = cfg.synthetic;
        syn.seed = cfg.master_seed;
        table = data::generate_synthetic(syn).annotations;
    }
    std::cout << "rank\tcam_j\tcam_k\tr_corr\n";
    std::size_t rank = 1;
    for (const auto& p : data::rank_camera_pairs(table)) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", p.r_corr);
        std::cout << rank++ << "\t" << p.j << "\t" << p.k << "\t" << buf << "\n";
    }
    return kExitOk;
}

std::vector<std::int64_t> read_symbols(const fs::path& path) {
    const auto bytes = io::read_file(path);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::vector<std::int64_t> out;
    std::string tok;
    while (in >> tok) {
        std::int64_t v = 0;
        const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (r.ec != std::errc() || r.ptr != tok.data() + tok.size())
            throw IoError(path.string() + ": '" + tok + "' is not an integer symbol");
        out.push_back(v);
    }
    return out;
}

/// Single-Gaussian model fitted to the symbols (moment match), alphabet
/// covering them (capped; the rest escapes).
entropy::FrequencyTable fit_table(const std::vector<std::int64_t>& s) {
    double mean = 0.0, var = 0.0;
    for (auto v : s) mean += static_cast<double>(v);
    mean /= std::max<double>(1.0, static_cast<double>(s.size()));
    for (auto v : s) var += (static_cast<double>(v) - mean) * (static_cast<double>(v) - mean);
    var /= std::max<double>(1.0, static_cast<double>(s.size()));
    const double sigma = std::max(std::sqrt(var), 0.5);
    const auto gmm = entropy::GmmEntropyModel::from_params({1.0}, {mean}, {sigma});
    nn::Tensor q({s.size()});
    for (std::size_t i = 0; i < s.size(); ++i) q[i] = static_cast<double>(s[i]);
    return entropy::build_freq_table(gmm, schemes::fit_alphabet(q));
}

int cmd_codec(const std::string& roundtrip, std::size_t generate, std::uint64_t seed, const std::string& out) {
    if (generate > 0) {
        if (out.empty()) throw ConfigError("codec --generate needs --out FILE");
        channel::NoiseSource noise(seed, 0);
        std::string text;
        for (std::size_t i = 0; i < generate; ++i)
            text += std::to_string(static_cast<std::int64_t>(std::llround(3.0 * noise.normal()))) +
                    ((i + 1) % 20 == 0 ? "\n" : " ");
        io::write_file_atomic(out, text + "\n");
        std::cout << "wrote " << generate << " symbols to " << out << "\n";
        return kExitOk;
    }
    if (roundtrip.empty()) throw ConfigError("codec needs --roundtrip FILE or --generate N");
    const auto symbols = read_symbols(roundtrip);
    const auto table = fit_table(symbols);
    const auto bits = entropy::arith_encode(symbols, table);
    const auto packed = entropy::pack_bitstream(bits, static_cast<std::uint32_t>(symbols.size()), table.hash());
    if (!out.empty()) io::write_file_atomic(out, packed);
    const auto decoded = entropy::decode_packed(entropy::unpack_bitstream(packed), table);
    double ideal = 0.0;
    for (auto s : symbols) ideal += table.information_bits(s);
    const bool ok = decoded == symbols;
    std::cout << "symbols " << symbols.size() << "\nbits " << bits.bit_length << "\nideal_bits " << ideal
              << "\nbits_per_symbol " << (symbols.empty() ? 0.0 : double(bits.bit_length) / double(symbols.size()))
              << "\nroundtrip " << (ok ? "ok" : "MISMATCH") << "\n";
    return ok ? kExitOk : kExitIo;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint source-channel coding simulator for two-camera edge inference"};
    app.require_subcommand(1);

    Common common;
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic two-camera dataset as feature files");
    add_common(gen, common);

    UnitArgs ua;
    auto* train = app.add_subcommand("train", "train one model and write its checkpoint and log");
    add_common(train, common);
    train->add_option("--scheme", ua.scheme, "single_users|jdec_oma|jdec_noma|jenc1|jenc2|digital");
    train->add_option("-B,--bandwidth", ua.bandwidth, "channel uses");
    train->add_option("--snr", ua.snr_db, "training/testing SNR in dB");
    train->add_option("--seed-index", ua.seed_index, "experiment index");
    train->add_option("--lambda", ua.lambda, "digital: rate weight");
    train->add_option("--latent-dim", ua.latent_dim, "digital: latent size per camera");
    train->add_option("--gmm-components", ua.gmm_components, "digital: mixture size");

    std::string ckpt;
    std::optional<double> eval_snr;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    add_common(ev, common);
    ev->add_option("--checkpoint", ckpt, "checkpoint file")->required();
    ev->add_option("--snr", eval_snr, "test SNR override in dB");

    std::size_t jobs = 1;
    bool quiet = false;
    auto* sw = app.add_subcommand("sweep", "train and evaluate the whole grid; resumable");
    add_common(sw, common);
    sw->add_option("-j,--jobs", jobs, "parallel training jobs")->check(CLI::PositiveNumber);
    sw->add_flag("-q,--quiet", quiet, "no per-unit progress");

    std::string annotations;
    auto* rank = app.add_subcommand("rank-cameras", "rank camera pairs by r_corr");
    add_common(rank, common);
    rank->add_option("--annotations", annotations, "directory of per-frame annotation json files");

    std::string roundtrip, codec_out;
    std::size_t generate = 0;
    std::uint64_t codec_seed = 1;
    auto* codec = app.add_subcommand("codec", "arithmetic-code a symbol file and report bits");
    codec->add_option("--roundtrip", roundtrip, "whitespace-separated integer symbols");
    codec->add_option("--generate", generate, "write N random symbols to --out instead");
    codec->add_option("--seed", codec_seed, "seed for --generate");
    codec->add_option("-o,--out", codec_out, "packed bitstream (roundtrip) or symbol file (generate)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*gen) return cmd_gen_data(common);
        if (*train) return cmd_train(common, ua);
        if (*ev) return cmd_eval(common, ckpt, eval_snr);
        if (*sw) return cmd_sweep(common, jobs, quiet);
        if (*rank) return cmd_rank(common, annotations);
        if (*codec) return cmd_codec(roundtrip, generate, codec_seed, codec_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const DecodeError& e) {
        std::cerr << "decode error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
