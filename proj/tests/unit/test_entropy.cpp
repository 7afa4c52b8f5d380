#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "finite_diff.hpp"
#include "jscc/entropy/freq_table.hpp"
#include "jscc/entropy/range_coder.hpp"
#include "jscc/nn/random.hpp"

using namespace jscc;
using namespace jscc::entropy;
using nn::Tensor;

namespace {

// Standard normal CDF by Simpson integration of the density from 0; independent
// of the erfc route the model takes.
double phi_oracle(double z) {
    const int n = 20000;
    const double h = z / n;
    auto f = [](double t) { return std::exp(-0.5 * t * t); };
    double s = f(0.0) + f(z);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
    return 0.5 + s * h / 3.0 / std::sqrt(2.0 * std::numbers::pi);
}

double ideal_bits(const std::vector<std::int64_t>& s, const FrequencyTable& t) {
    double bits = 0.0;
    for (auto q : s) bits += t.information_bits(q);
    return bits;
}

FrequencyTable uniform_table(std::int64_t lo, std::int64_t hi) {
    const SymbolAlphabet a{lo, hi};
    std::vector<double> p(a.size() + 1, 1.0);
    p.back() = 0.0;
    return FrequencyTable::from_probabilities(a, p);
}

} // namespace

TEST(Quantize, TrainNoiseSupportAndDeterminism) {
    nn::Rng rng(1);
    Tensor r({1000});
    for (double& v : r.data()) v = 10.0 * rng.normal();
    channel::NoiseSource a(4, 0), b(4, 0);
    const Tensor qa = quantize_train(r, a);
    EXPECT_EQ(qa.data(), quantize_train(r, b).data());
    for (std::size_t i = 0; i < r.size(); ++i) {
        EXPECT_GE(qa[i] - r[i], -0.5 - 1e-12);
        EXPECT_LT(qa[i] - r[i], 0.5 + 1e-12);
    }
}

TEST(Quantize, TrainNoiseVariance) {
    Tensor r({1'000'000});
    channel::NoiseSource n(8, 1);
    const Tensor q = quantize_train(r, n);
    double m = 0.0, v = 0.0;
    for (double e : q.data()) m += e;
    m /= q.size();
    for (double e : q.data()) v += (e - m) * (e - m);
    v /= q.size() - 1;
    EXPECT_NEAR(v, 1.0 / 12.0, 0.02 / 12.0);
}

TEST(Quantize, EvalRounding) {
    EXPECT_EQ(quantize_eval(Tensor::row({0.4, -1.6})).data(), (std::vector<double>{0.0, -2.0}));
    EXPECT_EQ(quantize_eval(Tensor::row({2.5, -2.5})).data(), (std::vector<double>{3.0, -3.0}));
}

TEST(Gmm, DensityClosedForms) {
    const auto m1 = GmmEntropyModel::from_params({1.0}, {0.0}, {1.0});
    EXPECT_NEAR(m1.pdf(0.0), 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-12);
    EXPECT_NEAR(m1.pdf(0.0), 0.398942, 1e-6);
    const auto m2 = GmmEntropyModel::from_params({0.5, 0.5}, {-1.0, 1.0}, {1.0, 1.0});
    EXPECT_NEAR(m2.pdf(0.0), 0.241971, 1e-6);
}

TEST(Gmm, PmfMatchesIntegratedDensity) {
    const auto m1 = GmmEntropyModel::from_params({1.0}, {0.0}, {1.0});
    EXPECT_NEAR(m1.pmf(0.0), 2.0 * phi_oracle(0.5) - 1.0, 1e-10);
    EXPECT_NEAR(m1.pmf(0.0), 0.382925, 1e-6);
    const auto m = GmmEntropyModel::from_params({0.2, 0.5, 0.3}, {-2.0, 0.3, 4.0}, {0.7, 1.5, 2.0});
    for (int q = -6; q <= 8; ++q) {
        double oracle = 0.0;
        const double w[] = {0.2, 0.5, 0.3}, mu[] = {-2.0, 0.3, 4.0}, s[] = {0.7, 1.5, 2.0};
        for (int k = 0; k < 3; ++k)
            oracle += w[k] * (phi_oracle((q + 0.5 - mu[k]) / s[k]) - phi_oracle((q - 0.5 - mu[k]) / s[k]));
        EXPECT_NEAR(m.pmf(q), oracle, 1e-10) << q;
    }
}

TEST(Gmm, SymmetryPositivityAndNormalization) {
    const auto m = GmmEntropyModel::from_params({0.3, 0.4, 0.3}, {-2.0, 0.0, 2.0}, {0.5, 3.0, 0.5});
    double prev_sum = 0.0;
    for (int w = 0; w <= 60; ++w) {
        EXPECT_NEAR(m.pmf(w), m.pmf(-w), 1e-15);
        EXPECT_GT(m.pmf(w), 0.0);
        double sum = 0.0;
        for (int q = -w; q <= w; ++q) sum += m.pmf(q);
        EXPECT_GE(sum, prev_sum);
        EXPECT_LE(sum, 1.0 + 1e-12);
        prev_sum = sum;
    }
    EXPECT_NEAR(prev_sum, 1.0, 1e-9);
    // Far tails stay positive thanks to the erfc form.
    EXPECT_GT(GmmEntropyModel::from_params({1.0}, {0.0}, {1.0}).pmf(20.0), 0.0);
}

TEST(Gmm, ParametersStayFeasible) {
    GmmEntropyModel m(4);
    for (auto& p : m.params()) p.value->fill(-50.0);
    const auto a = m.weights();
    double s = 0.0;
    for (double v : a) {
        s += v;
        EXPECT_GT(v, 0.0);
    }
    EXPECT_NEAR(s, 1.0, 1e-15);
    EXPECT_GE(m.scale(0), GmmEntropyModel::kSigmaMin);
}

TEST(Rate, HalfProbabilityIsOneBit) {
    auto m = GmmEntropyModel::from_params({1.0}, {0.5}, {0.01});
    EXPECT_NEAR(m.pmf(0.0), 0.5, 1e-15);
    EXPECT_NEAR(m.rate_term(Tensor({1, 1}, {0.0})).bits_per_sample, 1.0, 1e-12);
}

TEST(Rate, ZeroWeightGivesZeroGradient) {
    auto m = GmmEntropyModel::spread(3);
    m.zero_grad();
    const auto r = m.rate_term(Tensor({2, 2}, {0.1, -0.7, 1.3, 2.0}), 0.0);
    for (double g : r.grad_q.data()) EXPECT_EQ(g, 0.0);
    for (auto& p : m.params())
        for (double g : p.grad->data()) EXPECT_EQ(g, 0.0);
}

TEST(Rate, UnderflowClampedAndCounted) {
    auto m = GmmEntropyModel::from_params({1.0}, {0.0}, {0.01});
    const auto r = m.rate_term(Tensor({1, 2}, {0.0, 1000.0}));
    EXPECT_EQ(r.clamp_count, 1u);
    EXPECT_TRUE(std::isfinite(r.bits_per_sample));
    for (double g : r.grad_q.data()) EXPECT_TRUE(std::isfinite(g));
}

TEST(Rate, GradientsMatchFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        nn::Rng rng(seed);
        auto m = GmmEntropyModel::spread(3);
        for (auto& p : m.params())
            for (double& v : p.value->data()) v += 0.5 * rng.normal();
        Tensor q({4, 3});
        for (double& v : q.data()) v = 2.0 * rng.normal();
        const double w = 0.7;

        m.zero_grad();
        const auto r = m.rate_term(q, w);
        std::vector<double> analytic;
        std::vector<double*> coords;
        for (auto& p : m.params()) {
            analytic.insert(analytic.end(), p.grad->data().begin(), p.grad->data().end());
            for (double& v : p.value->data()) coords.push_back(&v);
        }
        auto objective = [&] { return w * m.rate_term(q, w).bits_per_sample; };
        EXPECT_LT(jscc::testing::relative_error(analytic, jscc::testing::numeric_gradient(objective, coords)), 1e-5)
            << seed;
        EXPECT_LT(jscc::testing::relative_error(r.grad_q.data(), jscc::testing::numeric_gradient(
                                                                      objective, jscc::testing::coords_of(q.data()))),
                  1e-5)
            << seed;
    }
}

TEST(FreqTable, InvariantsAndUniformity) {
    const auto m = GmmEntropyModel::from_params({1.0}, {0.0}, {1e6});  // locally flat
    const auto t = build_freq_table(m, {-20, 20});
    EXPECT_EQ(t.total(), 1u << 16);
    std::uint32_t lo = UINT32_MAX, hi = 0;
    for (std::size_t s = 0; s < t.slots(); ++s) {
        EXPECT_GE(t.freq(s), 1u);
        if (s != t.escape_slot()) lo = std::min(lo, t.freq(s)), hi = std::max(hi, t.freq(s));
    }
    EXPECT_LE(hi - lo, 1u);

    const auto skewed = build_freq_table(GmmEntropyModel::from_params({1.0}, {0.0}, {0.05}), {-100, 100});
    EXPECT_EQ(skewed.total(), 1u << 16);
    for (std::size_t s = 0; s < skewed.slots(); ++s) EXPECT_GE(skewed.freq(s), 1u);
}

TEST(FreqTable, AlphabetTooWideRejected) {
    const auto m = GmmEntropyModel::spread(1);
    EXPECT_THROW(build_freq_table(m, {0, 70000}), Error);
    EXPECT_THROW(build_freq_table(m, {0, 255}, 8), Error);
    EXPECT_NO_THROW(build_freq_table(m, {0, 254}, 8));
}

TEST(Coder, EmptySequence) {
    const auto t = uniform_table(0, 3);
    const auto bits = arith_encode({}, t);
    EXPECT_LE(bits.bit_length, 1u);
    EXPECT_TRUE(arith_decode(bits, t, 0).empty());
}

TEST(Coder, RandomRoundtripsWithinBound) {
    nn::Rng rng(77);
    const auto model = GmmEntropyModel::from_params({0.6, 0.4}, {0.0, 3.0}, {1.0, 2.5});
    const auto table = build_freq_table(model, {-8, 12});
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = rng.below(200);
        std::vector<std::int64_t> s(n);
        for (auto& q : s) {
            const double u = rng.uniform();
            q = u < 0.02 ? static_cast<std::int64_t>(rng.below(2000)) - 1000  // escapes, mostly
                         : static_cast<std::int64_t>(std::llround(u < 0.6 ? rng.normal() : 3.0 + 2.5 * rng.normal()));
        }
        const auto bits = arith_encode(s, table);
        ASSERT_EQ(arith_decode(bits, table, n), s) << "trial " << trial;
        EXPECT_LE(static_cast<double>(bits.bit_length), std::ceil(ideal_bits(s, table)) + 16.0) << trial;
    }
}

TEST(Coder, UniformByteAlphabetLength) {
    nn::Rng rng(3);
    const auto t = uniform_table(0, 255);
    std::vector<std::int64_t> s(1000);
    for (auto& q : s) q = static_cast<std::int64_t>(rng.below(256));
    const auto bits = arith_encode(s, t);
    EXPECT_LE(bits.bit_length, 8000u + 32u);
    EXPECT_EQ(arith_decode(bits, t, s.size()), s);
}

TEST(Coder, SkewedBinarySourceNearEntropy) {
    const SymbolAlphabet a{0, 1};
    const auto t = FrequencyTable::from_probabilities(a, {0.9, 0.1, 0.0});
    std::vector<std::int64_t> s(10000, 0);
    std::fill(s.begin(), s.begin() + 1000, 1);
    nn::Rng rng(12);
    rng.shuffle(s.begin(), s.end());
    const auto bits = arith_encode(s, t);
    const double per_symbol = static_cast<double>(bits.bit_length) / s.size();
    EXPECT_GE(per_symbol, 0.469);
    EXPECT_LE(per_symbol, 0.479);
    EXPECT_EQ(arith_decode(bits, t, s.size()), s);
}

TEST(Coder, ExtremeEscapes) {
    const auto t = uniform_table(-2, 2);
    const std::vector<std::int64_t> s{INT32_MIN, INT32_MAX, -3, 3, 0, -1};
    EXPECT_EQ(arith_decode(arith_encode(s, t), t, s.size()), s);
    const std::vector<std::int64_t> too_big{std::int64_t{INT32_MAX} + 1};
    EXPECT_THROW(arith_encode(too_big, t), Error);
}

TEST(Coder, WrongTableOrTruncationDetected) {
    nn::Rng rng(21);
    const auto t1 = build_freq_table(GmmEntropyModel::from_params({1.0}, {0.0}, {2.0}), {-10, 10});
    const auto t2 = build_freq_table(GmmEntropyModel::from_params({1.0}, {4.0}, {0.5}), {-10, 10});
    std::vector<std::int64_t> s(500);
    for (auto& q : s) q = std::llround(2.0 * rng.normal());
    const auto bits = arith_encode(s, t1);

    const auto packed = unpack_bitstream(pack_bitstream(bits, 500, t1.hash()));
    EXPECT_EQ(decode_packed(packed, t1), s);
    EXPECT_THROW(decode_packed(packed, t2), DecodeError);

    bool detected = false;
    try {
        detected = arith_decode(bits, t2, s.size()) != s;
    } catch (const DecodeError&) {
        detected = true;
    }
    EXPECT_TRUE(detected);

    Bitstream cut = bits;
    cut.bit_length /= 2;
    cut.bytes.resize((cut.bit_length + 7) / 8);
    EXPECT_THROW(arith_decode(cut, t1, s.size()), DecodeError);
}

TEST(Coder, ContainerRejectsBadMagic) {
    std::vector<std::uint8_t> junk(20, 0);
    EXPECT_THROW(unpack_bitstream(junk), IoError);
}
