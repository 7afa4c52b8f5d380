#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "jscc/data/dataset.hpp"
#include "jscc/io.hpp"

namespace jscc::data {

/// Mean over frames of |A u B| / (|A| + |B|) for cameras j and k. Ranges over
/// [0.5, 1]: 0.5 when both cameras always see the same people, 1 when they
/// never share anyone. A frame where both sets are empty counts as 1.
inline double correlation_metric(const AnnotationTable& table, std::size_t j, std::size_t k) {
    if (j == k) throw ConfigError("correlation_metric: cameras must be distinct");
    if (j >= table.camera_count() || k >= table.camera_count())
        throw ConfigError("correlation_metric: camera index out of range");
    table.validate();
    const std::size_t frames = table.frame_count();
    if (frames == 0) return 1.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < frames; ++i) {
        const auto& a = table.cameras[j][i];
        const auto& b = table.cameras[k][i];
        const std::size_t denom = a.size() + b.size();
        if (denom == 0) {
            sum += 1.0;
            continue;
        }
        std::size_t common = 0;
        for (int id : a) common += b.count(id);
        sum += static_cast<double>(denom - common) / static_cast<double>(denom);
    }
    return sum / static_cast<double>(frames);
}

struct CameraPair {
    std::size_t j, k;  // zero-based, j < k
    double r_corr;
};

/// Every unordered pair, highest r_corr first; ties by lower j, then lower k.
inline std::vector<CameraPair> rank_camera_pairs(const AnnotationTable& table) {
    if (table.camera_count() < 2) throw ConfigError("rank_camera_pairs: need at least two cameras");
    std::vector<CameraPair> pairs;
    for (std::size_t j = 0; j < table.camera_count(); ++j)
        for (std::size_t k = j + 1; k < table.camera_count(); ++k)
            pairs.push_back({j, k, correlation_metric(table, j, k)});
    std::stable_sort(pairs.begin(), pairs.end(), [](const CameraPair& a, const CameraPair& b) {
        if (a.r_corr != b.r_corr) return a.r_corr > b.r_corr;
        if (a.j != b.j) return a.j < b.j;
        return a.k < b.k;
    });
    return pairs;
}

/// Reads WILDTRACK-style per-frame annotation files: a directory of `*.json`
/// files (one per frame, processed in filename order), each an array of
/// persons `{"personID": int, "views": [{"viewNum": v, "xmin":.., "ymin":..,
/// "xmax":.., "ymax":..}]}`. A person is present at camera v when any of the
/// box coordinates for that view is not -1. Camera index = viewNum.
inline AnnotationTable load_wildtrack_annotations(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("annotations: '" + dir.string() + "' is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("annotations: no .json files in '" + dir.string() + "'");

    std::vector<std::map<std::size_t, std::set<int>>> frames;
    std::size_t cameras = 0;
    for (const auto& f : files) {
        const auto bytes = io::read_file(f);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(bytes.begin(), bytes.end());
        } catch (const nlohmann::json::exception& e) {
            throw IoError("annotations: cannot parse '" + f.string() + "': " + e.what());
        }
        std::map<std::size_t, std::set<int>> frame;
        for (const auto& person : doc) {
            const int id = person.at("personID").get<int>();
            for (const auto& view : person.at("views")) {
                const auto v = view.at("viewNum").get<std::size_t>();
                cameras = std::max(cameras, v + 1);
                const bool visible = view.at("xmin").get<double>() != -1.0 || view.at("ymin").get<double>() != -1.0 ||
                                     view.at("xmax").get<double>() != -1.0 || view.at("ymax").get<double>() != -1.0;
                if (visible) frame[v].insert(id);
            }
        }
        frames.push_back(std::move(frame));
    }
    AnnotationTable table;
    table.cameras.assign(cameras, std::vector<std::set<int>>(frames.size()));
    for (std::size_t i = 0; i < frames.size(); ++i)
        for (auto& [v, ids] : frames[i]) table.cameras[v][i] = std::move(ids);
    return table;
}

} // namespace jscc::data
