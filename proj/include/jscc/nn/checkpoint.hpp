#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "jscc/io.hpp"
#include "jscc/nn/tensor.hpp"

namespace jscc::nn {

// Container layout:
//   "JSCCCKPT"            8-byte magic
//   u64 header_bytes      little-endian
//   header                JSON text: {"format":1, "topology":..., "meta":...,
//                         "tensors":[{"name","shape","offset"}]}, offset in
//                         bytes from the start of the data section
//   data                  little-endian IEEE-754 binary64 values
inline constexpr char kCheckpointMagic[] = "JSCCCKPT";

struct Checkpoint {
    nlohmann::json topology;
    nlohmann::json meta;
    std::map<std::string, Tensor> tensors;
};

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json header;
    header["format"] = 1;
    header["topology"] = ckpt.topology;
    header["meta"] = ckpt.meta;
    header["tensors"] = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        header["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        offset += t.size() * 8;
    }
    const std::string text = header.dump();
    std::vector<std::uint8_t> out;
    out.reserve(16 + text.size() + offset);
    io::put_bytes(out, std::string_view(kCheckpointMagic, 8));
    io::put_u64(out, text.size());
    io::put_bytes(out, text);
    for (const auto& [name, t] : ckpt.tensors)
        for (double v : t.data()) io::put_f64(out, v);
    return out;
}

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& what = "checkpoint") {
    io::Reader r(bytes, what);
    if (r.bytes(8) != std::string_view(kCheckpointMagic, 8)) throw IoError(what + ": bad magic");
    const std::uint64_t header_len = r.u64();
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.bytes(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(what + ": malformed header: " + e.what());
    }
    if (header.value("format", 0) != 1) throw IoError(what + ": unsupported format version");
    const std::size_t data_start = r.position();
    Checkpoint ckpt;
    ckpt.topology = header.at("topology");
    ckpt.meta = header.value("meta", nlohmann::json::object());
    for (const auto& entry : header.at("tensors")) {
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        const auto offset = entry.at("offset").get<std::size_t>();
        const std::size_t n = Tensor::count(shape);
        if (data_start + offset + n * 8 > bytes.size()) throw IoError(what + ": truncated tensor data");
        std::vector<double> values(n);
        r.seek(data_start + offset);
        for (auto& v : values) v = r.f64();
        ckpt.tensors.emplace(entry.at("name").get<std::string>(), Tensor(shape, std::move(values)));
    }
    return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    io::write_file_atomic(path, encode_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(io::read_file(path), path.string());
}

} // namespace jscc::nn
