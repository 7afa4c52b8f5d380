#pragma once

#include <charconv>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "jscc/data/dataset.hpp"
#include "jscc/schemes/training.hpp"

namespace jscc::config {

/// Every knob of an experiment. Parsed from a flat INI-style document with
/// [data] [scheme] [channel] [train] [eval] sections; unset keys keep these defaults.
struct ExperimentConfig {
    // [data]
    std::string data_source = "synthetic";  // synthetic | files
    std::string train_file, test_file;
    data::SyntheticConfig synthetic;

    // [scheme]
    std::vector<schemes::SchemeKind> schemes{schemes::kAllSchemes.begin(), schemes::kAllSchemes.end()};
    schemes::SchemeDims dims;
    std::vector<std::size_t> latent_dims{4, 8, 16};
    std::vector<std::size_t> gmm_components{3};
    std::vector<double> lambdas{0.001, 0.005, 0.01, 0.045};

    // [channel]
    std::vector<double> snr_db{-6, -3, 0, 3, 6};
    std::vector<std::size_t> bandwidths{8, 16, 32, 64};
    double power = 1.0;
    channel::NomaPower noma_power = channel::NomaPower::SplitTotal;

    // [train]
    schemes::TrainPlan plan;
    std::uint64_t master_seed = 1;
    std::size_t seeds = 5;

    // [eval]
    std::size_t n_evals = 100;
    std::vector<std::size_t> opt_bw_set;  // extra per-camera bandwidths for Opt.BW; B/2 of every grid B is always included
    bool record_train_time = false;       // off keeps the CSV byte-reproducible

    void validate() const;
};

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream in(s);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

/// Shortest text that parses back to the same double.
inline std::string fmt(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const char* end = text.data() + text.size();
    auto r = std::from_chars(text.data(), end, v);
    if (r.ec != std::errc() || r.ptr != end) throw ConfigError(key + ": cannot parse '" + text + "' as a number");
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError(key + ": expected true/false, got '" + text + "'");
}

template <typename T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
    std::string out;
    for (const auto& x : v) out += (out.empty() ? "" : ", ") + f(x);
    return out;
}

struct Key {
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

using KeyTable = std::vector<std::pair<std::string, Key>>;  // "section.key" -> accessor, in echo order

template <typename T>
Key number(T ExperimentConfig::*field) {
    return {[field](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*field = parse_number<T>(k, v); },
            [field](const ExperimentConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return fmt(c.*field);
                else return std::to_string(c.*field);
            }};
}

template <typename T, typename Getter>
Key nested_number(Getter g) {
    return {[g](ExperimentConfig& c, const std::string& k, const std::string& v) { g(c) = parse_number<T>(k, v); },
            [g](const ExperimentConfig& c) {
                const T v = g(const_cast<ExperimentConfig&>(c));
                if constexpr (std::is_floating_point_v<T>) return fmt(v);
                else return std::to_string(v);
            }};
}

template <typename Getter>
Key nested_bool(Getter g) {
    return {[g](ExperimentConfig& c, const std::string& k, const std::string& v) { g(c) = parse_bool(k, v); },
            [g](const ExperimentConfig& c) { return std::string(g(const_cast<ExperimentConfig&>(c)) ? "true" : "false"); }};
}

template <typename T>
Key number_list(std::vector<T> ExperimentConfig::*field) {
    return {[field](ExperimentConfig& c, const std::string& k, const std::string& v) {
                std::vector<T> out;
                for (const auto& item : split_list(v)) out.push_back(parse_number<T>(k, item));
                c.*field = out;
            },
            [field](const ExperimentConfig& c) {
                return join<T>(c.*field, [](const T& x) {
                    if constexpr (std::is_floating_point_v<T>) return fmt(x);
                    else return std::to_string(x);
                });
            }};
}

inline void stage_keys(KeyTable& t, const std::string& name, schemes::StagePlan schemes::TrainPlan::*stage) {
    auto st = [stage](ExperimentConfig& c) -> schemes::StagePlan& { return c.plan.*stage; };
    t.push_back({"train." + name + "_epochs", nested_number<int>([st](ExperimentConfig& c) -> int& { return st(c).epochs; })});
    t.push_back({"train." + name + "_lr", nested_number<double>([st](ExperimentConfig& c) -> double& { return st(c).lr; })});
    t.push_back({"train." + name + "_lr_factor",
                 nested_number<double>([st](ExperimentConfig& c) -> double& { return st(c).factor; })});
    t.push_back({"train." + name + "_lr_period",
                 nested_number<int>([st](ExperimentConfig& c) -> int& { return st(c).period; })});
    t.push_back({"train." + name + "_lr_milestones",
                 {[st](ExperimentConfig& c, const std::string& k, const std::string& v) {
                      std::vector<int> out;
                      for (const auto& item : split_list(v)) out.push_back(parse_number<int>(k, item));
                      st(c).milestones = out;
                  },
                  [st](const ExperimentConfig& c) {
                      return join<int>(st(const_cast<ExperimentConfig&>(c)).milestones,
                                       [](const int& x) { return std::to_string(x); });
                  }}});
}

inline const KeyTable& keys() {
    static const KeyTable table = [] {
        using C = ExperimentConfig;
        KeyTable t;
        t.push_back({"data.source",
                     {[](C& c, const std::string& k, const std::string& v) {
                          if (v != "synthetic" && v != "files") throw ConfigError(k + ": expected synthetic or files, got '" + v + "'");
                          c.data_source = v;
                      },
                      [](const C& c) { return c.data_source; }}});
        t.push_back({"data.train_file", {[](C& c, const std::string&, const std::string& v) { c.train_file = v; },
                                         [](const C& c) { return c.train_file; }}});
        t.push_back({"data.test_file", {[](C& c, const std::string&, const std::string& v) { c.test_file = v; },
                                        [](const C& c) { return c.test_file; }}});
        auto syn = [](auto member) {
            return [member](C& c) -> auto& { return c.synthetic.*member; };
        };
        t.push_back({"data.ids1", nested_number<std::size_t>([](C& c) -> std::size_t& { return c.synthetic.ids_per_camera[0]; })});
        t.push_back({"data.ids2", nested_number<std::size_t>([](C& c) -> std::size_t& { return c.synthetic.ids_per_camera[1]; })});
        t.push_back({"data.shared_id_fraction", nested_number<double>(syn(&data::SyntheticConfig::shared_id_fraction))});
        t.push_back({"data.descriptor_dim", nested_number<std::size_t>(syn(&data::SyntheticConfig::descriptor_dim))});
        t.push_back({"data.view_noise_std", nested_number<double>(syn(&data::SyntheticConfig::view_noise_std))});
        t.push_back({"data.train_frames", nested_number<std::size_t>(syn(&data::SyntheticConfig::train_frames))});
        t.push_back({"data.test_frames", nested_number<std::size_t>(syn(&data::SyntheticConfig::test_frames))});
        t.push_back({"data.presence_rate", nested_number<double>(syn(&data::SyntheticConfig::presence_rate))});

        t.push_back({"scheme.schemes",
                     {[](C& c, const std::string&, const std::string& v) {
                          std::vector<schemes::SchemeKind> out;
                          for (const auto& item : split_list(v)) out.push_back(schemes::parse_scheme(item));
                          c.schemes = out;
                      },
                      [](const C& c) {
                          return join<schemes::SchemeKind>(c.schemes, [](const schemes::SchemeKind& k) { return schemes::to_string(k); });
                      }}});
        auto dim = [](auto member) {
            return [member](C& c) -> auto& { return c.dims.*member; };
        };
        t.push_back({"scheme.feature_dim", nested_number<std::size_t>(dim(&schemes::SchemeDims::feature_dim))});
        t.push_back({"scheme.extractor_hidden", nested_number<std::size_t>(dim(&schemes::SchemeDims::extractor_hidden))});
        t.push_back({"scheme.head_hidden", nested_number<std::size_t>(dim(&schemes::SchemeDims::head_hidden))});
        t.push_back({"scheme.per_dim_gmm", nested_bool(dim(&schemes::SchemeDims::per_dim_gmm))});
        t.push_back({"scheme.latent_dims", number_list(&C::latent_dims)});
        t.push_back({"scheme.gmm_components", number_list(&C::gmm_components)});
        t.push_back({"scheme.lambdas", number_list(&C::lambdas)});

        t.push_back({"channel.snr_db", number_list(&C::snr_db)});
        t.push_back({"channel.bandwidths", number_list(&C::bandwidths)});
        t.push_back({"channel.power", number(&C::power)});
        t.push_back({"channel.noma_power",
                     {[](C& c, const std::string&, const std::string& v) { c.noma_power = schemes::parse_noma_power(v); },
                      [](const C& c) { return schemes::to_string(c.noma_power); }}});

        t.push_back({"train.master_seed", number(&C::master_seed)});
        t.push_back({"train.seeds", number(&C::seeds)});
        t.push_back({"train.batch_size", nested_number<std::size_t>([](C& c) -> std::size_t& { return c.plan.batch_size; })});
        t.push_back({"train.momentum", nested_number<double>([](C& c) -> double& { return c.plan.momentum; })});
        t.push_back({"train.nesterov", nested_bool([](C& c) -> bool& { return c.plan.nesterov; })});
        t.push_back({"train.weight_decay", nested_number<double>([](C& c) -> double& { return c.plan.weight_decay; })});
        t.push_back({"train.single_step", nested_bool([](C& c) -> bool& { return c.plan.single_step; })});
        stage_keys(t, "baseline", &schemes::TrainPlan::baseline);
        stage_keys(t, "autoencoder", &schemes::TrainPlan::autoencoder);
        stage_keys(t, "end_to_end", &schemes::TrainPlan::end_to_end);
        stage_keys(t, "digital", &schemes::TrainPlan::digital);

        t.push_back({"eval.n_evals", number(&C::n_evals)});
        t.push_back({"eval.opt_bw_set", number_list(&C::opt_bw_set)});
        t.push_back({"eval.record_train_time", nested_bool([](C& c) -> bool& { return c.record_train_time; })});
        return t;
    }();
    return table;
}

inline const Key* find_key(const std::string& dotted) {
    for (const auto& [name, key] : keys())
        if (name == dotted) return &key;
    return nullptr;
}

} // namespace detail

/// Sets one "section.key" from text.
inline void set_value(ExperimentConfig& c, const std::string& dotted, const std::string& value) {
    const auto* key = detail::find_key(dotted);
    if (!key) throw ConfigError("unknown config key '" + dotted + "'");
    key->set(c, dotted, detail::trim(value));
}

/// Applies "section.key=value" overrides (command-line form).
inline void apply_override(ExperimentConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not section.key=value");
    set_value(c, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

/// Parses a config document on top of `base`. Errors carry the line number.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {}) {
    static const std::vector<std::string> sections{"data", "scheme", "channel", "train", "eval"};
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(lineno) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + "malformed section header '" + line + "'");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (std::find(sections.begin(), sections.end(), section) == sections.end())
                throw ConfigError(where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        if (section.empty()) throw ConfigError(where + "key outside any section");
        const std::string dotted = section + "." + detail::trim(line.substr(0, eq));
        try {
            set_value(base, dotted, line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    return base;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Every key with its resolved value; parsing this reproduces `c`.
inline std::string to_text(const ExperimentConfig& c) {
    std::string out, section;
    for (const auto& [name, key] : detail::keys()) {
        const auto dot = name.find('.');
        const std::string sec = name.substr(0, dot);
        if (sec != section) {
            out += (out.empty() ? "[" : "\n[") + sec + "]\n";
            section = sec;
        }
        out += name.substr(dot + 1) + " = " + key.get(c) + "\n";
    }
    return out;
}

inline void ExperimentConfig::validate() const {
    if (data_source == "files" && (train_file.empty() || test_file.empty()))
        throw ConfigError("data.source = files needs data.train_file and data.test_file");
    if (schemes.empty()) throw ConfigError("scheme.schemes is empty");
    if (snr_db.empty()) throw ConfigError("channel.snr_db is empty");
    if (bandwidths.empty()) throw ConfigError("channel.bandwidths is empty");
    if (!(power > 0.0)) throw ConfigError("channel.power must be > 0");
    if (seeds == 0) throw ConfigError("train.seeds must be >= 1");
    if (n_evals == 0) throw ConfigError("eval.n_evals must be >= 1");
    plan.validate();
    for (auto kind : schemes) {
        if (kind == schemes::SchemeKind::Digital) {
            if (latent_dims.empty() || gmm_components.empty() || lambdas.empty())
                throw ConfigError("digital scheme needs scheme.latent_dims, scheme.gmm_components and scheme.lambdas");
            for (auto l : latent_dims)
                if (l < 1) throw ConfigError("scheme.latent_dims entries must be >= 1");
            for (auto k : gmm_components)
                if (k < 1) throw ConfigError("scheme.gmm_components entries must be >= 1");
            for (double l : lambdas)
                if (l < 0.0) throw ConfigError("scheme.lambdas entries must be >= 0");
            continue;
        }
        for (auto b : bandwidths) {
            auto d = dims;
            d.bandwidth = b;
            try {
                d.validate(kind);
            } catch (const ConfigError& e) {
                throw ConfigError("channel.bandwidths: " + std::string(e.what()));
            }
        }
    }
    for (auto b : opt_bw_set)
        if (b < 1) throw ConfigError("eval.opt_bw_set entries must be >= 1");
}

} // namespace jscc::config
