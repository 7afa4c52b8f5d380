#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "jscc/channel/noise.hpp"
#include "jscc/error.hpp"
#include "jscc/nn/tensor.hpp"

namespace jscc::data {

/// One synchronized frame seen by two cameras: a descriptor per view and a
/// multi-hot presence vector over each camera's ID set.
struct MultiViewSample {
    std::vector<float> x1, x2;
    std::vector<std::uint8_t> y1, y2;

    bool operator==(const MultiViewSample&) const = default;
};

struct Dataset {
    std::size_t descriptor_dim = 0;
    std::size_t ids1 = 0, ids2 = 0;
    std::vector<MultiViewSample> samples;

    std::size_t size() const { return samples.size(); }
    bool operator==(const Dataset&) const = default;

    void validate() const {
        for (const auto& s : samples) {
            if (s.x1.size() != descriptor_dim || s.x2.size() != descriptor_dim || s.y1.size() != ids1 ||
                s.y2.size() != ids2)
                throw DimensionError("dataset: inconsistent sample dimensions");
            for (auto y : s.y1)
                if (y > 1) throw Error("dataset: label outside {0,1}");
            for (auto y : s.y2)
                if (y > 1) throw Error("dataset: label outside {0,1}");
        }
    }
};

/// Row-batched views of a subset of samples.
struct Batch {
    nn::Tensor x1, x2;  // (n x D)
    nn::Tensor y1, y2;  // (n x I1), (n x I2)
};

inline Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices) {
    const std::size_t n = indices.size(), d = ds.descriptor_dim;
    Batch b{nn::Tensor::matrix(n, d), nn::Tensor::matrix(n, d), nn::Tensor::matrix(n, ds.ids1),
            nn::Tensor::matrix(n, ds.ids2)};
    for (std::size_t r = 0; r < n; ++r) {
        const auto& s = ds.samples[indices[r]];
        for (std::size_t c = 0; c < d; ++c) {
            b.x1.at(r, c) = s.x1[c];
            b.x2.at(r, c) = s.x2[c];
        }
        for (std::size_t c = 0; c < ds.ids1; ++c) b.y1.at(r, c) = s.y1[c];
        for (std::size_t c = 0; c < ds.ids2; ++c) b.y2.at(r, c) = s.y2[c];
    }
    return b;
}

inline Batch make_batch(const Dataset& ds) {
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return make_batch(ds, idx);
}

/// Per-frame, per-camera sets of person IDs.
struct AnnotationTable {
    // cameras[j][i] = IDs visible at camera j in frame i
    std::vector<std::vector<std::set<int>>> cameras;

    std::size_t camera_count() const { return cameras.size(); }
    std::size_t frame_count() const { return cameras.empty() ? 0 : cameras.front().size(); }

    void validate() const {
        for (const auto& cam : cameras)
            if (cam.size() != frame_count()) throw DimensionError("annotations: frame count differs between cameras");
    }
};

struct SyntheticConfig {
    std::array<std::size_t, 2> ids_per_camera{16, 16};
    double shared_id_fraction = 0.5;
    std::size_t descriptor_dim = 128;
    double view_noise_std = 1.0;
    std::size_t train_frames = 400;
    std::size_t test_frames = 100;
    double presence_rate = 0.3;
    std::uint64_t seed = 1;

    /// IDs visible to both cameras.
    std::size_t shared_ids() const {
        const auto m = std::min(ids_per_camera[0], ids_per_camera[1]);
        return static_cast<std::size_t>(std::llround(shared_id_fraction * static_cast<double>(m)));
    }

    void validate() const {
        if (shared_id_fraction < 0.0 || shared_id_fraction > 1.0)
            throw ConfigError("data.shared_id_fraction must be in [0, 1]");
        if (!(presence_rate > 0.0 && presence_rate < 1.0)) throw ConfigError("data.presence_rate must be in (0, 1)");
        if (ids_per_camera[0] == 0 || ids_per_camera[1] == 0) throw ConfigError("data.ids_per_camera must be >= 1");
        if (descriptor_dim == 0) throw ConfigError("data.descriptor_dim must be >= 1");
        if (view_noise_std < 0.0) throw ConfigError("data.view_noise_std must be >= 0");
        if (train_frames < 2 || test_frames < 1) throw ConfigError("data: need >= 2 train and >= 1 test frames");
    }
};

struct SyntheticData {
    Dataset train, test;
    AnnotationTable annotations;  // two cameras, all frames (train then test), global IDs
};

/// Draws person presence per frame and renders each camera's descriptor as a
/// fixed random linear embedding of its presence vector plus Gaussian view
/// noise. The first `shared_ids()` local IDs of both cameras refer to the same
/// people, so shared presence correlates the views.
inline SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    const std::size_t i1 = cfg.ids_per_camera[0], i2 = cfg.ids_per_camera[1], d = cfg.descriptor_dim;
    const std::size_t shared = cfg.shared_ids();
    const std::size_t people = i1 + i2 - shared;

    channel::NoiseSource embed_rng(cfg.seed, 1), presence_rng(cfg.seed, 2), view_rng(cfg.seed, 3);
    auto embedding = [&](std::size_t ids) {
        std::vector<double> e(d * ids);
        const double scale = 1.0 / std::sqrt(cfg.presence_rate * static_cast<double>(ids));
        for (double& v : e) v = scale * embed_rng.normal();
        return e;
    };
    const auto e1 = embedding(i1), e2 = embedding(i2);

    // Global person p: [0, shared) both cameras, then camera-1-only, then camera-2-only.
    auto local1 = [&](std::size_t p) -> long { return p < i1 ? static_cast<long>(p) : -1; };
    auto local2 = [&](std::size_t p) -> long {
        if (p < shared) return static_cast<long>(p);
        if (p >= i1) return static_cast<long>(p - i1 + shared);
        return -1;
    };

    SyntheticData out;
    out.annotations.cameras.assign(2, {});
    for (auto* ds : {&out.train, &out.test}) {
        ds->descriptor_dim = d;
        ds->ids1 = i1;
        ds->ids2 = i2;
    }
    const std::size_t frames = cfg.train_frames + cfg.test_frames;
    for (std::size_t f = 0; f < frames; ++f) {
        MultiViewSample s{std::vector<float>(d), std::vector<float>(d), std::vector<std::uint8_t>(i1, 0),
                          std::vector<std::uint8_t>(i2, 0)};
        std::set<int> cam1, cam2;
        for (std::size_t p = 0; p < people; ++p) {
            if (presence_rng.uniform() >= cfg.presence_rate) continue;
            if (const long l = local1(p); l >= 0) {
                s.y1[static_cast<std::size_t>(l)] = 1;
                cam1.insert(static_cast<int>(p));
            }
            if (const long l = local2(p); l >= 0) {
                s.y2[static_cast<std::size_t>(l)] = 1;
                cam2.insert(static_cast<int>(p));
            }
        }
        for (std::size_t r = 0; r < d; ++r) {
            double v1 = 0.0, v2 = 0.0;
            for (std::size_t c = 0; c < i1; ++c) v1 += e1[r * i1 + c] * s.y1[c];
            for (std::size_t c = 0; c < i2; ++c) v2 += e2[r * i2 + c] * s.y2[c];
            v1 += cfg.view_noise_std * view_rng.normal();
            v2 += cfg.view_noise_std * view_rng.normal();
            s.x1[r] = static_cast<float>(v1);
            s.x2[r] = static_cast<float>(v2);
        }
        out.annotations.cameras[0].push_back(std::move(cam1));
        out.annotations.cameras[1].push_back(std::move(cam2));
        (f < cfg.train_frames ? out.train : out.test).samples.push_back(std::move(s));
    }
    return out;
}

} // namespace jscc::data
