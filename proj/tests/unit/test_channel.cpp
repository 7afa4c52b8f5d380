#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "jscc/channel/awgn.hpp"

using namespace jscc;
using namespace jscc::channel;
using nn::Tensor;

TEST(Snr, NoiseVariance) {
    EXPECT_DOUBLE_EQ(snr_to_noise_var(0.0), 1.0);
    EXPECT_NEAR(snr_to_noise_var(-3.0), std::pow(10.0, 0.3), 1e-12);
    EXPECT_NEAR(snr_to_noise_var(-3.0), 1.995262, 1e-6);
    EXPECT_NEAR(snr_to_noise_var(6.0), 0.251189, 1e-6);
    EXPECT_NEAR(noise_var_to_snr(snr_to_noise_var(7.25)), 7.25, 1e-12);
}

TEST(Capacity, ClosedForm) {
    EXPECT_DOUBLE_EQ(shannon_capacity(1.0, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(shannon_capacity(3.0, 1.0), 1.0);
    EXPECT_LT(shannon_capacity(1.0, 1e30), 1e-29);
    double prev = -1.0;
    for (double ratio = 1e-4; ratio < 1e6; ratio *= 1.5) {
        const double c = shannon_capacity(ratio, 1.0);
        EXPECT_GT(c, prev);
        prev = c;
    }
}

TEST(Capacity, RequiredSnrInverse) {
    EXPECT_NEAR(rate_to_required_snr(8.0, 16.0), 0.0, 1e-12);
    EXPECT_NEAR(rate_to_required_snr(16.0, 16.0), 10.0 * std::log10(3.0), 1e-12);
    EXPECT_NEAR(rate_to_required_snr(16.0, 16.0), 4.771, 5e-4);
    EXPECT_TRUE(std::isinf(rate_to_required_snr(0.0, 16.0)));
    EXPECT_LT(rate_to_required_snr(0.0, 16.0), 0.0);
    for (double snr = -30.0; snr <= 30.0; snr += 0.5) {
        const double b = 24.0;
        const double c = shannon_capacity(1.0, snr_to_noise_var(snr));
        EXPECT_NEAR(rate_to_required_snr(c * b, b), snr, 1e-9) << snr;
    }
}

TEST(PowerNormalize, Examples) {
    PowerNormalize pn(1.0);
    const Tensor y = pn.infer(Tensor::row({2.0, 2.0, 2.0, 2.0}));
    for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 1.0);
    const Tensor z = pn.infer(Tensor::row({0.0, 0.0, 0.0}));
    for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(PowerNormalize, ExactPowerAndIdempotent) {
    nn::Rng rng(42);
    for (double target : {1.0, 0.5, 3.0}) {
        PowerNormalize pn(target);
        const Tensor x = jscc::testing::random_tensor({8, 13}, rng, 4.0);
        const Tensor y = pn.infer(x);
        const Tensor yy = pn.infer(y);
        for (std::size_t r = 0; r < 8; ++r) EXPECT_NEAR(average_power(y, r), target, 1e-12);
        for (std::size_t k = 0; k < y.size(); ++k) EXPECT_NEAR(yy[k], y[k], 1e-12);
    }
}

TEST(PowerNormalize, JacobianMatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        nn::Rng rng(seed);
        PowerNormalize pn(0.5 + rng.uniform());
        Tensor x = jscc::testing::random_tensor({3, 6}, rng);
        const Tensor w = jscc::testing::random_tensor({3, 6}, rng);
        auto objective = [&] {
            const Tensor y = pn.infer(x);
            double s = 0.0;
            for (std::size_t k = 0; k < y.size(); ++k) s += w[k] * y[k];
            return s;
        };
        pn.forward(x);
        const Tensor dx = pn.backward(w);
        const auto numeric = jscc::testing::numeric_gradient(objective, jscc::testing::coords_of(x.data()));
        EXPECT_LT(jscc::testing::relative_error(dx.data(), numeric), 1e-5) << seed;
    }
}

TEST(Awgn, NoiselessAndDeterministic) {
    const Tensor x = Tensor::row({0.3, -1.0, 2.0});
    NoiseSource n0(1, 0);
    EXPECT_EQ(awgn_transmit(x, 0.0, n0).data(), x.data());

    NoiseSource a(7, 3), b(7, 3), c(7, 4);
    const Tensor ya = awgn_transmit(x, 1.0, a);
    EXPECT_EQ(ya.data(), awgn_transmit(x, 1.0, b).data());
    EXPECT_NE(ya.data(), awgn_transmit(x, 1.0, c).data());
}

TEST(Awgn, NoiseVarianceCalibrated) {
    const std::size_t n = 1'000'000;
    const Tensor x = Tensor::matrix(1000, 1000);
    NoiseSource noise(2024, 0);
    const Tensor y = awgn_transmit(x, 1.0, noise);
    double m = 0.0, v = 0.0;
    for (double e : y.data()) m += e;
    m /= n;
    for (double e : y.data()) v += (e - m) * (e - m);
    v /= n - 1;
    EXPECT_GE(v, 0.99);
    EXPECT_LE(v, 1.01);
}

TEST(Oma, NoiselessConcatAndIndependentSubchannels) {
    const Tensor s1 = Tensor::row({1.0, 2.0}), s2 = Tensor::row({3.0});
    NoiseSource n0(1, 0);
    EXPECT_EQ(oma_compose(s1, s2, 0.0, n0).data(), (std::vector<double>{1.0, 2.0, 3.0}));

    const std::size_t n = 1'000'000;
    const Tensor z = Tensor::matrix(1, n);
    NoiseSource noise(99, 1);
    const Tensor y = oma_compose(z, z, 1.0, noise);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = y[i], b = y[n + i];
        sxy += a * b, sxx += a * a, syy += b * b;
    }
    EXPECT_LT(std::abs(sxy / std::sqrt(sxx * syy)), 0.01);
}

TEST(Noma, SumAndCancellation) {
    const Tensor s1 = Tensor::row({1.0, -2.0}), s2 = Tensor::row({-1.0, 2.0});
    NoiseSource n0(1, 0);
    const Tensor cancelled = noma_compose(s1, s2, 0.0, n0);
    for (double v : cancelled.data()) EXPECT_EQ(v, 0.0);
    const Tensor s3 = Tensor::row({0.25, 0.5});
    EXPECT_EQ(noma_compose(s1, s3, 0.0, n0).data(), (std::vector<double>{1.25, -1.5}));
    EXPECT_THROW(noma_compose(s1, Tensor::row({1.0}), 0.0, n0), DimensionError);
}

TEST(Noma, SplitBudgetGivesTotalPowerPlusNoise) {
    nn::Rng rng(5);
    const double p = 1.0, noise_var = 0.4;
    PowerNormalize half(p / 2);
    const Tensor s1 = half.infer(jscc::testing::random_tensor({20000, 16}, rng));
    const Tensor s2 = half.infer(jscc::testing::random_tensor({20000, 16}, rng));
    NoiseSource noise(5, 5);
    const Tensor y = noma_compose(s1, s2, noise_var, noise);
    double mean_power = 0.0;
    for (std::size_t r = 0; r < y.rows(); ++r) mean_power += average_power(y, r);
    mean_power /= static_cast<double>(y.rows());
    EXPECT_NEAR(mean_power, p + noise_var, 0.01);
}

TEST(Noise, ForkedStreamsDiffer) {
    NoiseSource base(3, 0);
    NoiseSource a = base.fork(1), b = base.fork(2);
    EXPECT_NE(a.uniform(), b.uniform());
    NoiseSource a2 = base.fork(1);
    NoiseSource a3 = base.fork(1);
    EXPECT_EQ(a2.normal(), a3.normal());
}
