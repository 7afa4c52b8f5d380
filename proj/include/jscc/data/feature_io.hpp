#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "jscc/data/dataset.hpp"
#include "jscc/io.hpp"

namespace jscc::data {

// Feature file, little-endian:
//   "JSCCFEAT"  8-byte magic
//   u32 version (1) | u32 sample count | u32 descriptor dim D | u32 I1 | u32 I2
//   per sample: D x f32 (camera 1), D x f32 (camera 2), I1 + I2 label bytes (0/1)
inline constexpr char kFeatureMagic[] = "JSCCFEAT";
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 8 + 5 * 4;

inline std::size_t feature_file_size(std::size_t count, std::size_t d, std::size_t i1, std::size_t i2) {
    return kFeatureHeaderBytes + count * (4 * 2 * d + i1 + i2);
}

inline std::vector<std::uint8_t> encode_features(const Dataset& ds) {
    ds.validate();
    std::vector<std::uint8_t> out;
    out.reserve(feature_file_size(ds.size(), ds.descriptor_dim, ds.ids1, ds.ids2));
    io::put_bytes(out, std::string_view(kFeatureMagic, 8));
    io::put_u32(out, kFeatureVersion);
    io::put_u32(out, static_cast<std::uint32_t>(ds.size()));
    io::put_u32(out, static_cast<std::uint32_t>(ds.descriptor_dim));
    io::put_u32(out, static_cast<std::uint32_t>(ds.ids1));
    io::put_u32(out, static_cast<std::uint32_t>(ds.ids2));
    for (const auto& s : ds.samples) {
        for (float v : s.x1) io::put_f32(out, v);
        for (float v : s.x2) io::put_f32(out, v);
        out.insert(out.end(), s.y1.begin(), s.y1.end());
        out.insert(out.end(), s.y2.begin(), s.y2.end());
    }
    return out;
}

inline Dataset decode_features(const std::vector<std::uint8_t>& bytes, const std::string& what = "feature file") {
    io::Reader r(bytes, what);
    if (r.bytes(8) != std::string_view(kFeatureMagic, 8)) throw IoError(what + ": bad magic");
    if (const auto v = r.u32(); v != kFeatureVersion)
        throw IoError(what + ": unsupported version " + std::to_string(v));
    Dataset ds;
    const std::size_t count = r.u32();
    ds.descriptor_dim = r.u32();
    ds.ids1 = r.u32();
    ds.ids2 = r.u32();
    if (bytes.size() != feature_file_size(count, ds.descriptor_dim, ds.ids1, ds.ids2)) {
        throw IoError(what + ": size " + std::to_string(bytes.size()) + " does not match header (expected " +
                      std::to_string(feature_file_size(count, ds.descriptor_dim, ds.ids1, ds.ids2)) + ")");
    }
    ds.samples.resize(count);
    for (auto& s : ds.samples) {
        s.x1.resize(ds.descriptor_dim);
        s.x2.resize(ds.descriptor_dim);
        s.y1.resize(ds.ids1);
        s.y2.resize(ds.ids2);
        for (float& v : s.x1) v = r.f32();
        for (float& v : s.x2) v = r.f32();
        for (auto& y : s.y1) y = r.u8();
        for (auto& y : s.y2) y = r.u8();
    }
    try {
        ds.validate();
    } catch (const Error& e) {
        throw IoError(what + ": " + e.what());
    }
    return ds;
}

inline void save_features(const std::filesystem::path& path, const Dataset& ds) {
    io::write_file_atomic(path, encode_features(ds));
}

inline Dataset load_features(const std::filesystem::path& path) {
    return decode_features(io::read_file(path), path.string());
}

} // namespace jscc::data
