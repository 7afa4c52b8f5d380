#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "jscc/data/dataset.hpp"
#include "jscc/data/correlation.hpp"
#include "jscc/schemes/training.hpp"

using namespace jscc;
using namespace jscc::schemes;
using nn::Tensor;
using jscc::testing::random_tensor;

namespace {

SchemeDims tiny_dims(std::size_t b = 4) {
    SchemeDims d;
    d.descriptor_dim = 5;
    d.feature_dim = 4;
    d.bandwidth = b;
    d.ids1 = 3;
    d.ids2 = 2;
    d.extractor_hidden = 6;
    d.head_hidden = 5;
    d.latent_dim = 3;
    return d;
}

double weighted_sum(const Tensor& y, const Tensor& w) {
    double s = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) s += w[k] * y[k];
    return s;
}

data::SyntheticConfig toy_data(std::uint64_t seed) {
    data::SyntheticConfig c;
    c.descriptor_dim = 12;
    c.ids_per_camera = {4, 4};
    c.train_frames = 96;
    c.test_frames = 48;
    c.seed = seed;
    return c;
}

SchemeDims toy_dims(std::size_t b) {
    SchemeDims d;
    d.descriptor_dim = 12;
    d.feature_dim = 8;
    d.bandwidth = b;
    d.ids1 = 4;
    d.ids2 = 4;
    d.extractor_hidden = 16;
    d.head_hidden = 12;
    d.latent_dim = 4;
    return d;
}

TrainPlan short_plan(int epochs) {
    TrainPlan p;
    p.baseline.epochs = epochs;
    p.autoencoder.epochs = epochs;
    p.end_to_end.epochs = epochs;
    p.digital.epochs = epochs;
    p.batch_size = 16;
    return p;
}

} // namespace

TEST(BuildScheme, TopologyExamples) {
    SchemeDims d;  // N = 64
    d.bandwidth = 16;
    SchemeModel jenc1(SchemeKind::JEnc1, d);
    ASSERT_EQ(jenc1.encoder_count(), 1u);
    EXPECT_EQ(jenc1.encoder_input(0), 128u);
    EXPECT_EQ(jenc1.encoder_output(0), 16u);
    EXPECT_EQ(jenc1.decoder_input(0), 16u);

    d.bandwidth = 32;
    SchemeModel oma(SchemeKind::JDecOMA, d);
    ASSERT_EQ(oma.encoder_count(), 2u);
    for (std::size_t k = 0; k < 2; ++k) {
        EXPECT_EQ(oma.encoder_input(k), 64u);
        EXPECT_EQ(oma.encoder_output(k), 16u);
    }
    EXPECT_EQ(oma.decoder_input(0), 32u);

    SchemeModel noma(SchemeKind::JDecNOMA, d);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(noma.encoder_output(k), 32u);
    EXPECT_EQ(noma.decoder_input(0), 32u);

    SchemeModel su(SchemeKind::SingleUsers, d);
    EXPECT_EQ(su.head_count(), 2u);
    EXPECT_EQ(su.decoder_count(), 2u);
    EXPECT_EQ(su.decoder_input(1), 16u);
}

TEST(BuildScheme, GridInvariants) {
    for (std::size_t b = 2; b <= 64; b += 2)
        for (auto kind : kAllSchemes) {
            auto d = tiny_dims(b);
            SchemeModel m(kind, d);
            const std::size_t n = d.feature_dim;
            switch (kind) {
            case SchemeKind::JEnc1:
                ASSERT_EQ(m.encoder_count(), 1u);
                EXPECT_EQ(m.encoder_input(0), 2 * n);
                break;
            case SchemeKind::JEnc2:
                ASSERT_EQ(m.encoder_count(), 2u);
                EXPECT_EQ(m.encoder_output(1), b);
                break;
            case SchemeKind::JDecNOMA: EXPECT_EQ(m.encoder_output(0), b); break;
            case SchemeKind::JDecOMA: EXPECT_EQ(m.encoder_output(0) + m.encoder_output(1), b); break;
            case SchemeKind::SingleUsers: EXPECT_EQ(m.head_count(), 2u); break;
            case SchemeKind::Digital: EXPECT_EQ(m.gmms().size(), 1u); break;
            }
            if (is_jscc(kind) && kind != SchemeKind::SingleUsers) EXPECT_EQ(m.decoder_input(0), b);
        }
}

TEST(BuildScheme, InvalidBandwidth) {
    EXPECT_THROW(SchemeModel(SchemeKind::JDecOMA, tiny_dims(5)), ConfigError);
    EXPECT_THROW(SchemeModel(SchemeKind::SingleUsers, tiny_dims(7)), ConfigError);
    EXPECT_THROW(SchemeModel(SchemeKind::JEnc1, tiny_dims(1)), ConfigError);
    EXPECT_NO_THROW(SchemeModel(SchemeKind::JEnc1, tiny_dims(3)));
}

TEST(SchemeNames, ParseRoundTrip) {
    for (auto k : kAllSchemes) EXPECT_EQ(parse_scheme(to_string(k)), k);
    EXPECT_EQ(parse_scheme("j-enc2"), SchemeKind::JEnc2);
    EXPECT_THROW(parse_scheme("jenc3"), ConfigError);
}

TEST(Forward, JEnc2WithSilentSecondEncoderMatchesSinglePath) {
    SchemeModel m(SchemeKind::JEnc2, tiny_dims(4), {}, channel::NomaPower::SplitTotal, 3);
    for (auto& p : m.encoder(1).params()) p.value->fill(0.0);
    nn::Rng rng(1);
    const Tensor x1 = random_tensor({6, 5}, rng), x2 = random_tensor({6, 5}, rng);
    channel::NoiseSource noise(1, 0);
    const Tensor logits = m.infer(x1, x2, noise, 0.0);

    const Tensor f = m.features(x1, x2);
    const Tensor s1 = channel::PowerNormalize(m.user_power(0)).infer(m.encoder(0).infer(f));
    const Tensor single = m.head(0).infer(m.decoder(0).infer(s1));
    ASSERT_TRUE(logits.same_shape(single));
    for (std::size_t k = 0; k < logits.size(); ++k) EXPECT_NEAR(logits[k], single[k], 1e-12);
}

TEST(Forward, SeededDeterminism) {
    for (auto kind : {SchemeKind::JEnc1, SchemeKind::JDecOMA, SchemeKind::SingleUsers}) {
        SchemeModel a(kind, tiny_dims(), {}, channel::NomaPower::SplitTotal, 9);
        SchemeModel b(kind, tiny_dims(), {}, channel::NomaPower::SplitTotal, 9);
        nn::Rng rng(2);
        const Tensor x1 = random_tensor({4, 5}, rng), x2 = random_tensor({4, 5}, rng);
        channel::NoiseSource na(5, 1), nb(5, 1);
        EXPECT_EQ(a.infer(x1, x2, na, 0.5).data(), b.infer(x1, x2, nb, 0.5).data());
        channel::NoiseSource z1(1, 0), z2(2, 0);
        EXPECT_EQ(a.infer(x1, x2, z1, 0.0).data(), a.infer(x1, x2, z2, 0.0).data());
    }
}

TEST(Forward, EndToEndGradientMatchesFiniteDifferences) {
    const SchemeKind kinds[] = {SchemeKind::SingleUsers, SchemeKind::JDecOMA, SchemeKind::JDecNOMA,
                                SchemeKind::JEnc1, SchemeKind::JEnc2};
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const SchemeKind kind = kinds[seed % 5];
        SchemeModel m(kind, tiny_dims(4), {}, channel::NomaPower::SplitTotal, seed + 100);
        nn::Rng rng(seed);
        // Nonzero encoder biases keep every transmitted vector away from the
        // origin, where normalization is discontinuous.
        for (std::size_t k = 0; k < m.encoder_count(); ++k)
            for (auto& p : m.encoder(k).params())
                if (p.name.find("bias") != std::string::npos)
                    for (double& v : p.value->data()) v = 0.5 + rng.uniform();
        Tensor x1 = random_tensor({5, 5}, rng), x2 = random_tensor({5, 5}, rng);
        const double nv = 0.1;
        auto run = [&] {
            channel::NoiseSource noise(seed, 7);
            return m.forward(x1, x2, nn::Mode::Train, noise, nv);
        };
        const Tensor w = random_tensor(run().shape(), rng);
        auto objective = [&] { return weighted_sum(run(), w); };

        m.zero_grad();
        run();
        m.backward(w);
        std::vector<double> analytic;
        std::vector<double*> coords;
        for (auto& p : m.params()) {
            analytic.insert(analytic.end(), p.grad->data().begin(), p.grad->data().end());
            for (double& v : p.value->data()) coords.push_back(&v);
        }
        const double err =
            jscc::testing::relative_error(analytic, jscc::testing::numeric_gradient(objective, coords));
        EXPECT_LT(err, 1e-4) << to_string(kind) << " seed " << seed;
        worst = std::max(worst, err);
    }
    RecordProperty("worst_rel_err", std::to_string(worst));
}

TEST(Forward, PowerInstrumentationCoversEveryTransmission) {
    for (auto kind : {SchemeKind::SingleUsers, SchemeKind::JDecOMA, SchemeKind::JDecNOMA, SchemeKind::JEnc1,
                      SchemeKind::JEnc2}) {
        SchemeModel m(kind, tiny_dims(6));
        nn::Rng rng(3);
        const Tensor x1 = random_tensor({7, 5}, rng, 3.0), x2 = random_tensor({7, 5}, rng, 3.0);
        channel::NoiseSource noise(1, 1);
        PowerMonitor mon;
        m.infer(x1, x2, noise, 1.0, &mon);
        EXPECT_EQ(mon.transmissions, 7u * m.encoder_count());
        EXPECT_EQ(mon.violations, 0u);
        EXPECT_LT(mon.max_deviation, 1e-9);
        EXPECT_LT(mon.silent, mon.transmissions);
    }
}

TEST(Forward, ZeroEncoderOutputIsSilentNotViolation) {
    SchemeModel m(SchemeKind::JEnc2, tiny_dims(4));
    for (auto& p : m.encoder(1).params()) p.value->fill(0.0);
    nn::Rng rng(3);
    const Tensor x1 = random_tensor({3, 5}, rng), x2 = random_tensor({3, 5}, rng);
    channel::NoiseSource noise(1, 1);
    PowerMonitor mon;
    m.infer(x1, x2, noise, 1.0, &mon);
    EXPECT_EQ(mon.transmissions, 6u);
    EXPECT_GE(mon.silent, 3u);
    EXPECT_EQ(mon.violations, 0u);
}

TEST(Forward, NomaPowerModes) {
    SchemeModel split(SchemeKind::JEnc2, tiny_dims());
    SchemeModel per_user(SchemeKind::JEnc2, tiny_dims(), {}, channel::NomaPower::PerUser);
    SchemeModel oma(SchemeKind::JDecOMA, tiny_dims());
    EXPECT_DOUBLE_EQ(split.user_power(0), 0.5);
    EXPECT_DOUBLE_EQ(per_user.user_power(0), 1.0);
    EXPECT_DOUBLE_EQ(oma.user_power(1), 1.0);
}

TEST(Checkpoint, SchemeRoundTrip) {
    for (auto kind : kAllSchemes) {
        SchemeModel m(kind, tiny_dims(), {}, channel::NomaPower::SplitTotal, 4);
        if (kind == SchemeKind::Digital) m.set_alphabet({-5, 5});
        const auto bytes = nn::encode_checkpoint(m.to_checkpoint({{"note", "x"}}));
        const SchemeModel back = SchemeModel::from_checkpoint(nn::decode_checkpoint(bytes));
        EXPECT_EQ(nn::encode_checkpoint(back.to_checkpoint({{"note", "x"}})), bytes);
        nn::Rng rng(6);
        const Tensor x1 = random_tensor({3, 5}, rng), x2 = random_tensor({3, 5}, rng);
        if (kind == SchemeKind::Digital) {
            EXPECT_EQ(m.digital_infer(x1, x2).logits.data(), back.digital_infer(x1, x2).logits.data());
        } else {
            channel::NoiseSource a(1, 1), b(1, 1);
            EXPECT_EQ(m.infer(x1, x2, a, 0.3).data(), back.infer(x1, x2, b, 0.3).data());
        }
    }
}

TEST(Digital, CoderTransparencyAndBitRecount) {
    for (bool per_dim : {false, true}) {
        auto d = tiny_dims();
        d.per_dim_gmm = per_dim;
        SchemeModel m(SchemeKind::Digital, d, {}, channel::NomaPower::SplitTotal, 2);
        m.set_alphabet({-3, 3});  // narrow on purpose: some symbols escape
        nn::Rng rng(8);
        const Tensor x1 = random_tensor({10, 5}, rng, 2.0), x2 = random_tensor({10, 5}, rng, 2.0);
        const auto pass = m.digital_infer(x1, x2);
        EXPECT_TRUE(pass.roundtrip_ok);
        const Tensor q = entropy::quantize_eval(m.digital_latents_infer(x1, x2));
        EXPECT_EQ(pass.logits.data(), m.digital_classify_infer(q).data());
        ASSERT_EQ(pass.bits.size(), 10u);
        for (std::size_t r = 0; r < q.rows(); ++r) {
            std::vector<std::int64_t> sym;
            for (double v : q.row_span(r)) sym.push_back(static_cast<std::int64_t>(v));
            EXPECT_EQ(pass.bits[r], entropy::arith_encode(sym, m.tables()).bit_length);
        }
    }
}

TEST(Digital, ZeroLambdaHasNoRateGradient) {
    SchemeModel m(SchemeKind::Digital, tiny_dims());
    nn::Rng rng(2);
    const Tensor q = entropy::quantize_eval(random_tensor({4, 6}, rng, 3.0));
    const auto rate = digital_rate(m, q, 0.0);
    for (double g : rate.grad_q.data()) EXPECT_EQ(g, 0.0);
    EXPECT_GT(rate.bits_per_sample, 0.0);
}

TEST(Digital, GradientThroughRateAndClassifier) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto d = tiny_dims();
        d.per_dim_gmm = seed % 2 == 1;
        SchemeModel m(SchemeKind::Digital, d, {}, channel::NomaPower::SplitTotal, seed);
        nn::Rng rng(seed + 50);
        const Tensor x1 = random_tensor({5, 5}, rng), x2 = random_tensor({5, 5}, rng);
        const double lambda = 0.3;
        Tensor w;
        auto objective = [&] {
            channel::NoiseSource noise(seed, 3);
            const Tensor q = entropy::quantize_train(m.digital_latents(x1, x2, nn::Mode::Train), noise);
            return weighted_sum(m.digital_classify(q, nn::Mode::Train), w) + lambda * digital_rate(m, q, lambda).bits_per_sample;
        };
        {
            channel::NoiseSource noise(seed, 3);
            const Tensor q = entropy::quantize_train(m.digital_latents(x1, x2, nn::Mode::Train), noise);
            w = random_tensor({5, d.ids()}, rng);
            m.zero_grad();
            m.digital_classify(q, nn::Mode::Train);
            const auto rate = digital_rate(m, q, lambda);
            Tensor dq = m.digital_classify_backward(w);
            dq += rate.grad_q;
            m.digital_latents_backward(dq);
        }
        std::vector<double> analytic;
        std::vector<double*> coords;
        for (auto& p : m.params()) {
            analytic.insert(analytic.end(), p.grad->data().begin(), p.grad->data().end());
            for (double& v : p.value->data()) coords.push_back(&v);
        }
        EXPECT_LT(jscc::testing::relative_error(analytic, jscc::testing::numeric_gradient(objective, coords)), 1e-4)
            << seed;
    }
}

TEST(Training, ScheduleArithmetic) {
    TrainPlan p;
    EXPECT_NEAR(p.end_to_end.schedule().lr_at_epoch(25), 1e-4, 1e-15);
    EXPECT_NEAR(p.autoencoder.schedule().lr_at_epoch(19), 0.1, 1e-15);
    EXPECT_NEAR(p.autoencoder.schedule().lr_at_epoch(20), 0.01, 1e-15);
    EXPECT_NEAR(p.autoencoder.schedule().lr_at_epoch(45), 0.001, 1e-15);
    EXPECT_NEAR(p.baseline.schedule().lr_at_epoch(29), 1e-4, 1e-15);
    EXPECT_EQ(p.baseline.epochs, 30);
    EXPECT_EQ(p.autoencoder.epochs, 50);
    EXPECT_EQ(p.end_to_end.epochs, 50);
}

TEST(Training, AutoencoderHeldOutL1DecreasesNoiseless) {
    const auto ds = data::generate_synthetic(toy_data(5));
    auto plan = short_plan(50);
    plan.baseline.epochs = 10;
    plan.end_to_end.epochs = 0;
    channel::ChannelConfig ch;
    ch.snr_db = 300.0;  // sigma^2 = 1e-30
    const auto res = train_multistep(SchemeKind::JEnc1, toy_dims(8), ch, channel::NomaPower::SplitTotal, plan,
                                     ds.train, &ds.test);
    const auto ae = res.log.stage("autoencoder");
    ASSERT_EQ(ae.size(), 50u);
    EXPECT_LT(ae.back().held_out, ae.front().held_out);
    EXPECT_EQ(res.log.stage("baseline").size(), 10u);
}

TEST(Training, DeterministicGivenSeed) {
    const auto ds = data::generate_synthetic(toy_data(6));
    auto plan = short_plan(2);
    const auto a = train_multistep(SchemeKind::JDecNOMA, toy_dims(4), {}, channel::NomaPower::SplitTotal, plan, ds.train);
    const auto b = train_multistep(SchemeKind::JDecNOMA, toy_dims(4), {}, channel::NomaPower::SplitTotal, plan, ds.train);
    EXPECT_EQ(nn::encode_checkpoint(a.model.to_checkpoint()), nn::encode_checkpoint(b.model.to_checkpoint()));
    EXPECT_EQ(a.log.to_json(), b.log.to_json());
}

TEST(Training, DivergenceReportsStageAndEpoch) {
    const auto ds = data::generate_synthetic(toy_data(6));
    auto plan = short_plan(3);
    plan.baseline.lr = 1e200;
    try {
        train_multistep(SchemeKind::JEnc1, toy_dims(4), {}, channel::NomaPower::SplitTotal, plan, ds.train);
        FAIL() << "expected divergence";
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.stage(), "baseline");
        EXPECT_GE(e.epoch(), 0);
        EXPECT_LT(e.epoch(), 3);
    }
}

TEST(Training, SingleStepSkipsPretraining) {
    const auto ds = data::generate_synthetic(toy_data(6));
    auto plan = short_plan(2);
    plan.single_step = true;
    const auto r = train_multistep(SchemeKind::JEnc2, toy_dims(4), {}, channel::NomaPower::SplitTotal, plan, ds.train);
    EXPECT_TRUE(r.log.stage("baseline").empty());
    EXPECT_TRUE(r.log.stage("autoencoder").empty());
    EXPECT_EQ(r.log.stage("end_to_end").size(), 2u);
}

TEST(TrainingDigital, CoderBypassedAndRatePressure) {
    const auto ds = data::generate_synthetic(toy_data(7));
    auto plan = short_plan(15);
    const auto calls_before = entropy::arith_encode_calls().load();
    const auto lo = train_digital(toy_dims(8), 0.001, plan, ds.train);
    const auto hi = train_digital(toy_dims(8), 0.045, plan, ds.train);
    EXPECT_EQ(entropy::arith_encode_calls().load(), calls_before);
    ASSERT_TRUE(lo.model.alphabet().has_value());

    const auto elo = evaluate_digital(lo.model, ds.test);
    const auto ehi = evaluate_digital(hi.model, ds.test);
    EXPECT_TRUE(elo.roundtrip_ok);
    EXPECT_TRUE(ehi.roundtrip_ok);
    EXPECT_LE(ehi.avg_bits, elo.avg_bits);
    EXPECT_NEAR(elo.required_snr_db, channel::rate_to_required_snr(elo.avg_bits, 8.0), 1e-12);
    double sum = 0.0;
    for (auto b : elo.bits) sum += static_cast<double>(b);
    EXPECT_NEAR(elo.avg_bits, sum / static_cast<double>(elo.bits.size()), 1e-12);
}
