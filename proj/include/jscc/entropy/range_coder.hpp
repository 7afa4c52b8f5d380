#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jscc/entropy/freq_table.hpp"
#include "jscc/io.hpp"

namespace jscc::entropy {

/// Bit sequence (MSB-first within each byte) and its exact length in bits.
struct Bitstream {
    std::vector<std::uint8_t> bytes;
    std::size_t bit_length = 0;

    bool bit(std::size_t i) const { return i < bit_length && ((bytes[i >> 3] >> (7 - (i & 7))) & 1u); }

    void push(bool b) {
        if ((bit_length & 7) == 0) bytes.push_back(0);
        if (b) bytes.back() |= static_cast<std::uint8_t>(0x80u >> (bit_length & 7));
        ++bit_length;
    }

    bool operator==(const Bitstream&) const = default;
};

/// Process-wide count of arith_encode calls; lets tests assert that training
/// never touches the coder.
inline std::atomic<std::uint64_t>& arith_encode_calls() {
    static std::atomic<std::uint64_t> calls{0};
    return calls;
}

namespace detail {

// 32-bit range coder, bit-granular output:
//   state: low in [0, 2^32) (plus one carry bit), range in (2^31, 2^32]
//   symbol (cum, freq, total):  lo = floor(range*cum/total), hi = floor(range*(cum+freq)/total)
//                               low += lo, range = hi - lo
//   carry (low >= 2^32):        add one to the emitted bit string, low -= 2^32
//   renormalize while range <= 2^31: emit bit 31 of low, low <<= 1, range <<= 1
//   flush: low == 0 -> nothing; low <= 2^31 -> emit "1"; else carry.
// The decoder reads past the end of the stream as zeros.
constexpr std::uint64_t kTop = std::uint64_t{1} << 32;
constexpr std::uint64_t kHalf = std::uint64_t{1} << 31;
constexpr std::uint64_t kMask = kTop - 1;

class Encoder {
public:
    void encode(std::uint32_t cum, std::uint32_t freq, std::uint32_t total) {
        const std::uint64_t lo = range_ * cum / total;
        const std::uint64_t hi = range_ * (static_cast<std::uint64_t>(cum) + freq) / total;
        low_ += lo;
        range_ = hi - lo;
        if (low_ >= kTop) {
            carry();
            low_ -= kTop;
        }
        while (range_ <= kHalf) {
            out_.push(((low_ >> 31) & 1u) != 0);
            low_ = (low_ << 1) & kMask;
            range_ <<= 1;
        }
    }

    Bitstream finish() {
        if (low_ != 0) {
            if (low_ <= kHalf) out_.push(true);
            else carry();
        }
        return std::move(out_);
    }

private:
    void carry() {
        std::size_t i = out_.bit_length;
        while (i > 0) {
            --i;
            std::uint8_t& byte = out_.bytes[i >> 3];
            const std::uint8_t mask = static_cast<std::uint8_t>(0x80u >> (i & 7));
            if (byte & mask) {
                byte &= static_cast<std::uint8_t>(~mask);
            } else {
                byte |= mask;
                return;
            }
        }
        throw Error("range coder: carry past start of stream");
    }

    std::uint64_t low_ = 0;
    std::uint64_t range_ = kTop;
    Bitstream out_;
};

class Decoder {
public:
    explicit Decoder(const Bitstream& in) : in_(in) {
        for (int i = 0; i < 32; ++i) code_ = (code_ << 1) | next_bit();
        shifts_ = 0;
    }

    /// Finds the slot whose interval holds the code, then consumes it.
    std::size_t decode(const std::vector<std::uint32_t>& cum) {
        const std::uint64_t total = cum.back();
        const std::uint64_t d = (code_ - low_) & kMask;
        // Largest s with floor(range*cum[s]/total) <= d.
        std::size_t lo = 0, hi = cum.size() - 1;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            if (range_ * cum[mid] / total <= d) lo = mid;
            else hi = mid;
        }
        consume(cum[lo], cum[lo + 1] - cum[lo], static_cast<std::uint32_t>(total));
        return lo;
    }

    /// Decodes a value coded with uniform frequency 1 out of 2^16.
    std::uint32_t decode_uniform16() {
        const std::uint64_t d = (code_ - low_) & kMask;
        const std::uint64_t v = ((d + 1) << 16) / range_;  // first guess, corrected below
        std::uint64_t s = v > 0 ? v - 1 : 0;
        while (s + 1 < 65536 && range_ * (s + 1) / 65536 <= d) ++s;
        while (s > 0 && range_ * s / 65536 > d) --s;
        consume(static_cast<std::uint32_t>(s), 1, 65536);
        return static_cast<std::uint32_t>(s);
    }

    /// Bits shifted in beyond the initial 32-bit window; the encoder emitted
    /// at least this many.
    std::size_t shifts() const { return shifts_; }

private:
    void consume(std::uint32_t cum, std::uint32_t freq, std::uint32_t total) {
        const std::uint64_t lo = range_ * cum / total;
        const std::uint64_t hi = range_ * (static_cast<std::uint64_t>(cum) + freq) / total;
        low_ = (low_ + lo) & kMask;
        range_ = hi - lo;
        while (range_ <= kHalf) {
            low_ = (low_ << 1) & kMask;
            code_ = ((code_ << 1) | next_bit()) & kMask;
            range_ <<= 1;
            ++shifts_;
        }
    }

    std::uint64_t next_bit() { return in_.bit(pos_++) ? 1u : 0u; }

    const Bitstream& in_;
    std::size_t pos_ = 0;
    std::size_t shifts_ = 0;
    std::uint64_t low_ = 0;
    std::uint64_t range_ = kTop;
    std::uint64_t code_ = 0;
};

} // namespace detail

namespace detail {

template <typename TableFor>
Bitstream encode_with(std::span<const std::int64_t> symbols, TableFor table_for) {
    arith_encode_calls().fetch_add(1, std::memory_order_relaxed);
    Encoder enc;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        const FrequencyTable& table = table_for(i);
        const std::int64_t q = symbols[i];
        const std::size_t slot = table.slot_of(q);
        enc.encode(table.cum(slot), table.freq(slot), table.total());
        if (slot == table.escape_slot()) {
            if (q < INT32_MIN || q > INT32_MAX) throw Error("arith_encode: escaped value exceeds 32 bits");
            const auto raw = static_cast<std::uint32_t>(static_cast<std::int32_t>(q));
            enc.encode(raw >> 16, 1, 65536);
            enc.encode(raw & 0xFFFFu, 1, 65536);
        }
    }
    return enc.finish();
}

inline std::vector<std::uint32_t> cum_of(const FrequencyTable& t) {
    std::vector<std::uint32_t> cum(t.slots() + 1);
    for (std::size_t i = 0; i <= t.slots(); ++i) cum[i] = t.cum(i);
    return cum;
}

template <typename TableFor>
std::vector<std::int64_t> decode_with(const Bitstream& bits, std::size_t n, TableFor table_for) {
    std::vector<std::int64_t> out;
    out.reserve(n);
    if (n == 0) return out;
    const FrequencyTable* cached = nullptr;
    std::vector<std::uint32_t> cum;
    Decoder dec(bits);
    for (std::size_t i = 0; i < n; ++i) {
        const FrequencyTable& table = table_for(i);
        if (&table != cached) {
            cum = cum_of(table);
            cached = &table;
        }
        const std::size_t slot = dec.decode(cum);
        if (slot != table.escape_slot()) {
            out.push_back(table.alphabet().q_min + static_cast<std::int64_t>(slot));
            continue;
        }
        const std::uint32_t hi = dec.decode_uniform16();
        const std::uint32_t lo = dec.decode_uniform16();
        const auto value = static_cast<std::int64_t>(static_cast<std::int32_t>((hi << 16) | lo));
        if (table.alphabet().contains(value)) {
            throw DecodeError("arith_decode: escaped value " + std::to_string(value) +
                              " lies inside the alphabet (corrupt stream)");
        }
        out.push_back(value);
    }
    if (dec.shifts() > bits.bit_length) {
        throw DecodeError("arith_decode: stream truncated (" + std::to_string(bits.bit_length) + " bits, needed " +
                          std::to_string(dec.shifts()) + ")");
    }
    return out;
}

} // namespace detail

/// Encodes `symbols` under `table`. Out-of-alphabet values take the escape slot
/// followed by their 32-bit two's-complement form as two uniform 16-bit halves.
inline Bitstream arith_encode(std::span<const std::int64_t> symbols, const FrequencyTable& table) {
    return detail::encode_with(symbols, [&](std::size_t) -> const FrequencyTable& { return table; });
}

/// Symbol i coded under tables[i % tables.size()] (per-dimension models).
inline Bitstream arith_encode(std::span<const std::int64_t> symbols, const std::vector<FrequencyTable>& tables) {
    if (tables.empty()) throw ConfigError("arith_encode: no tables");
    return detail::encode_with(symbols, [&](std::size_t i) -> const FrequencyTable& { return tables[i % tables.size()]; });
}

inline std::vector<std::int64_t> arith_decode(const Bitstream& bits, const FrequencyTable& table, std::size_t n) {
    return detail::decode_with(bits, n, [&](std::size_t) -> const FrequencyTable& { return table; });
}

inline std::vector<std::int64_t> arith_decode(const Bitstream& bits, const std::vector<FrequencyTable>& tables,
                                              std::size_t n) {
    if (tables.empty()) throw ConfigError("arith_decode: no tables");
    return detail::decode_with(bits, n,
                               [&](std::size_t i) -> const FrequencyTable& { return tables[i % tables.size()]; });
}

// Container: "JSCCBITS" | u32 symbol count | u32 table hash | payload bytes
// (bits MSB-first, zero-padded to a byte boundary). Integers little-endian.
inline constexpr char kBitstreamMagic[] = "JSCCBITS";

inline std::vector<std::uint8_t> pack_bitstream(const Bitstream& bits, std::uint32_t symbol_count,
                                                std::uint32_t table_hash) {
    std::vector<std::uint8_t> out;
    io::put_bytes(out, std::string_view(kBitstreamMagic, 8));
    io::put_u32(out, symbol_count);
    io::put_u32(out, table_hash);
    out.insert(out.end(), bits.bytes.begin(), bits.bytes.end());
    return out;
}

struct PackedStream {
    Bitstream bits;
    std::uint32_t symbol_count = 0;
    std::uint32_t table_hash = 0;
};

inline PackedStream unpack_bitstream(const std::vector<std::uint8_t>& bytes) {
    io::Reader r(bytes, "bitstream");
    if (r.bytes(8) != std::string_view(kBitstreamMagic, 8)) throw IoError("bitstream: bad magic");
    PackedStream p;
    p.symbol_count = r.u32();
    p.table_hash = r.u32();
    p.bits.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.position()), bytes.end());
    p.bits.bit_length = p.bits.bytes.size() * 8;
    return p;
}

/// Decodes a packed stream, rejecting it if it was coded under another table.
inline std::vector<std::int64_t> decode_packed(const PackedStream& p, const FrequencyTable& table) {
    if (p.table_hash != table.hash()) {
        throw DecodeError("bitstream: table hash mismatch (stream " + std::to_string(p.table_hash) + ", table " +
                          std::to_string(table.hash()) + ")");
    }
    return arith_decode(p.bits, table, p.symbol_count);
}

} // namespace jscc::entropy
