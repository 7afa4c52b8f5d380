#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "jscc/entropy/gmm.hpp"
#include "jscc/entropy/quantize.hpp"
#include "jscc/io.hpp"

namespace jscc::entropy {

/// Integer frequencies over an alphabet plus one trailing escape slot. Every
/// slot has frequency >= 1 and the total is exactly 2^precision_bits.
class FrequencyTable {
public:
    static constexpr int kMaxPrecision = 16;

    FrequencyTable(SymbolAlphabet alphabet, std::vector<std::uint32_t> freqs, int precision_bits)
        : alphabet_(alphabet), freqs_(std::move(freqs)), precision_(precision_bits) {
        if (freqs_.size() != alphabet_.size() + 1) throw DimensionError("frequency table: slot count mismatch");
        cum_.assign(freqs_.size() + 1, 0);
        for (std::size_t i = 0; i < freqs_.size(); ++i) {
            if (freqs_[i] == 0) throw Error("frequency table: zero frequency in slot " + std::to_string(i));
            cum_[i + 1] = cum_[i] + freqs_[i];
        }
        if (cum_.back() > (1u << precision_)) throw Error("frequency table: total exceeds 2^precision");
    }

    /// Quantizes slot probabilities (alphabet order, escape last) to integer
    /// frequencies: one guaranteed count per slot, the rest proportional with
    /// largest-remainder rounding.
    static FrequencyTable from_probabilities(SymbolAlphabet alphabet, const std::vector<double>& slot_probs,
                                             int precision_bits = kMaxPrecision) {
        if (precision_bits < 1 || precision_bits > kMaxPrecision)
            throw ConfigError("frequency table: precision must be in [1, 16]");
        const std::size_t slots = slot_probs.size();
        const std::uint64_t total = std::uint64_t{1} << precision_bits;
        if (slots != alphabet.size() + 1) throw DimensionError("frequency table: probability count mismatch");
        if (slots > total) {
            throw Error("frequency table: alphabet of " + std::to_string(alphabet.size()) +
                        " symbols plus escape does not fit " + std::to_string(precision_bits) + "-bit precision");
        }
        const double mass = std::accumulate(slot_probs.begin(), slot_probs.end(), 0.0);
        const double spare = static_cast<double>(total - slots);
        std::vector<std::uint32_t> freqs(slots, 1);
        std::vector<std::pair<double, std::size_t>> remainders(slots);
        std::uint64_t assigned = slots;
        for (std::size_t i = 0; i < slots; ++i) {
            const double share = mass > 0.0 ? spare * slot_probs[i] / mass : spare / static_cast<double>(slots);
            const double whole = std::floor(share);
            freqs[i] += static_cast<std::uint32_t>(whole);
            assigned += static_cast<std::uint64_t>(whole);
            remainders[i] = {share - whole, i};
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t j = 0; assigned < total; ++j, ++assigned) ++freqs[remainders[j % slots].second];
        return FrequencyTable(alphabet, std::move(freqs), precision_bits);
    }

    const SymbolAlphabet& alphabet() const { return alphabet_; }
    int precision_bits() const { return precision_; }
    std::uint32_t total() const { return cum_.back(); }
    std::size_t slots() const { return freqs_.size(); }
    std::size_t escape_slot() const { return freqs_.size() - 1; }
    const std::vector<std::uint32_t>& freqs() const { return freqs_; }
    std::uint32_t freq(std::size_t slot) const { return freqs_[slot]; }
    std::uint32_t cum(std::size_t slot) const { return cum_[slot]; }

    std::size_t slot_of(std::int64_t q) const {
        return alphabet_.contains(q) ? static_cast<std::size_t>(q - alphabet_.q_min) : escape_slot();
    }

    double probability(std::size_t slot) const { return static_cast<double>(freqs_[slot]) / total(); }

    /// Ideal code length of q under this table, including the 32 raw bits an
    /// escaped value costs.
    double information_bits(std::int64_t q) const {
        const std::size_t slot = slot_of(q);
        const double bits = -std::log2(probability(slot));
        return slot == escape_slot() ? bits + 32.0 : bits;
    }

    /// FNV-1a over bounds, precision, and frequencies.
    std::uint32_t hash() const {
        std::vector<std::uint8_t> buf;
        io::put_u64(buf, static_cast<std::uint64_t>(alphabet_.q_min));
        io::put_u64(buf, static_cast<std::uint64_t>(alphabet_.q_max));
        io::put_u32(buf, static_cast<std::uint32_t>(precision_));
        for (auto f : freqs_) io::put_u32(buf, f);
        return io::fnv1a32(buf.data(), buf.size());
    }

private:
    SymbolAlphabet alphabet_;
    std::vector<std::uint32_t> freqs_;
    std::vector<std::uint32_t> cum_;
    int precision_;
};

/// Table for a learned density: slot mass from the model's PMF; the escape slot
/// receives the probability outside the alphabet.
inline FrequencyTable build_freq_table(const GmmEntropyModel& model, SymbolAlphabet alphabet,
                                       int precision_bits = FrequencyTable::kMaxPrecision) {
    if (alphabet.q_min > alphabet.q_max) throw ConfigError("alphabet: q_min must not exceed q_max");
    if (alphabet.size() + 1 > (std::size_t{1} << std::clamp(precision_bits, 1, 16))) {
        throw Error("frequency table: alphabet of " + std::to_string(alphabet.size()) +
                    " symbols plus escape does not fit " + std::to_string(precision_bits) + "-bit precision");
    }
    std::vector<double> probs(alphabet.size() + 1);
    double inside = 0.0;
    for (std::size_t i = 0; i < alphabet.size(); ++i) {
        probs[i] = model.pmf(static_cast<double>(alphabet.q_min + static_cast<std::int64_t>(i)));
        inside += probs[i];
    }
    probs.back() = std::max(0.0, 1.0 - inside);
    return FrequencyTable::from_probabilities(alphabet, probs, precision_bits);
}

} // namespace jscc::entropy
