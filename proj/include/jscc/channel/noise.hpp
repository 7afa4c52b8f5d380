#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace jscc::channel {

/// Counter-based random source. Draw i of stream (seed, stream) is a pure
/// function of (seed, stream, i):
///
///   key    = splitmix(seed ^ splitmix(stream + 0x632BE59BD9B4E019))
///   bits_i = splitmix(key + i * 0x9E3779B97F4A7C15)
///   u_i    = (bits_i >> 11) * 2^-53                      in [0, 1)
///
/// Gaussian draws come in Box-Muller pairs from (u_{2k}, u_{2k+1}):
///   r = sqrt(-2 ln(1 - u_{2k})),  z_{2k} = r cos(2 pi u_{2k+1}),  z_{2k+1} = r sin(2 pi u_{2k+1})
/// Uniform and Gaussian draws share the counter.
class NoiseSource {
public:
    explicit NoiseSource(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream), key_(splitmix(seed ^ splitmix(stream + 0x632BE59BD9B4E019ull))) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    std::uint64_t counter() const { return counter_; }

    /// Independent child stream; deterministic in (this stream, id).
    NoiseSource fork(std::uint64_t id) const {
        return NoiseSource(seed_, splitmix(stream_ * 0xD1B54A32D192ED03ull + id + 1));
    }

    double uniform() { return static_cast<double>(bits(counter_++) >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    static std::uint64_t splitmix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t bits(std::uint64_t i) const { return splitmix(key_ + i * 0x9E3779B97F4A7C15ull); }

    std::uint64_t seed_, stream_, key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace jscc::channel
