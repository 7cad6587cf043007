#include "test_util.hpp"

#include "aad/envelope.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace aad;

namespace {

double rms(const Eigen::Ref<const Vector>& x) { return std::sqrt(x.squaredNorm() / static_cast<double>(x.size())); }

} // namespace

TEST(Gammatone, CentersAreErbSpaced)
{
    GammatoneBankSpec spec;
    spec.fs = 16000.0;
    const auto c = spec.center_frequencies();
    ASSERT_EQ(c.size(), 28u);
    EXPECT_NEAR(c.front(), 50.0, 1e-9);
    EXPECT_NEAR(c.back(), 5000.0, 1e-6);
    const double step = erb_number(c[1]) - erb_number(c[0]);
    for (std::size_t k = 1; k < c.size(); ++k)
        EXPECT_NEAR(erb_number(c[k]) - erb_number(c[k - 1]), step, 1e-9);
}

TEST(Gammatone, ZeroInZeroOut)
{
    GammatoneBankSpec spec;
    const MultichannelSignal audio(Matrix::Zero(1000, 1), 16000.0);
    const auto bands = gammatone_filterbank(audio, spec);
    EXPECT_EQ(bands.n_channels(), 28);
    EXPECT_EQ(bands.samples().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Gammatone, ToneConcentratesInItsBand)
{
    const double fs = 16000.0;
    GammatoneBankSpec spec;
    spec.fs = fs;
    const auto centers = spec.center_frequencies();
    for (std::size_t k : {5u, 12u, 20u}) {
        const double fc = centers[k];
        const Index n = 16000;
        const auto audio = MultichannelSignal::from_vector(testutil::sine(n, fc, fs), fs);
        const auto bands = gammatone_filterbank(audio, spec);
        const Index skip = 4000; // settle
        const double own = rms(bands.channel(static_cast<Index>(k)).tail(n - skip));
        // Unit gain at the center: a unit sine keeps rms 1/sqrt(2).
        EXPECT_NEAR(own, std::sqrt(0.5), 0.01);
        for (std::size_t j = 0; j < centers.size(); ++j) {
            if (std::abs(erb_number(centers[j]) - erb_number(fc)) < 2.0)
                continue;
            const double other = rms(bands.channel(static_cast<Index>(j)).tail(n - skip));
            EXPECT_GE(own, 3.0 * other) << "tone band " << k << " vs " << j;
            // Band j's response to the tone follows the closed-form magnitude.
            const double expected = oracle::gammatone_magnitude(fc, centers[j], fs, 4) * std::sqrt(0.5);
            EXPECT_NEAR(other, expected, 0.02 * std::sqrt(0.5) + 0.05 * expected) << k << " " << j;
        }
    }
}

TEST(Gammatone, SingleBandEqualsSingleFilter)
{
    std::mt19937_64 rng(4);
    const double fs = 8000.0;
    const auto audio = MultichannelSignal::from_vector(testutil::randn(2000, rng), fs);
    GammatoneBankSpec spec;
    spec.n_bands = 1;
    spec.f_low = 100.0;
    spec.f_high = 3000.0;
    spec.fs = fs;
    const auto bands = gammatone_filterbank(audio, spec);
    const double fc = spec.center_frequencies().front();
    EXPECT_NEAR(erb_number(fc), 0.5 * (erb_number(100.0) + erb_number(3000.0)), 1e-12);
    EXPECT_EQ(Vector(bands.channel(0)), gammatone_filter(audio.channel(0), fs, fc, 4));
}

TEST(Gammatone, RejectsMultichannelAndBadSpecs)
{
    EXPECT_THROW(gammatone_filterbank(MultichannelSignal(Matrix::Zero(10, 2), 8000.0), {}), Error);
    GammatoneBankSpec spec;
    spec.fs = 8000.0; // f_high above Nyquist
    EXPECT_THROW(spec.validate(), Error);
}

TEST(Powerlaw, Examples)
{
    EXPECT_EQ(powerlaw_envelope(MultichannelSignal(Matrix::Zero(5, 3), 10.0), 0.6).values().cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(powerlaw_envelope(MultichannelSignal(Matrix::Constant(5, 1, 4.0), 10.0), 0.5).values(),
              Vector::Constant(5, 2.0));
    const auto two = powerlaw_envelope(MultichannelSignal(Matrix::Ones(5, 2), 10.0), 0.6);
    EXPECT_EQ(two.values(), Vector::Constant(5, 2.0));
    EXPECT_THROW(powerlaw_envelope(MultichannelSignal(Matrix::Ones(5, 2), 10.0), 0.0), Error);
}

TEST(Powerlaw, PositiveHomogeneityAndNonnegativity)
{
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 10; ++rep) {
        const Matrix x = testutil::randn(300, 1, rng);
        const double a = std::uniform_real_distribution<double>(0.1, 10.0)(rng);
        const Vector e1 = powerlaw_envelope(MultichannelSignal(x, 100.0), 0.6).values();
        const Vector e2 = powerlaw_envelope(MultichannelSignal(a * x, 100.0), 0.6).values();
        EXPECT_LE((e2 - std::pow(a, 0.6) * e1).cwiseAbs().maxCoeff(), 1e-12 * e2.cwiseAbs().maxCoeff());
        EXPECT_GE(e1.minCoeff(), 0.0);
    }
}

TEST(PreprocessEnvelope, ShapeAndNormalization)
{
    std::mt19937_64 rng(2);
    const Vector raw = testutil::randn(76800, rng).cwiseAbs();
    const Envelope env{MultichannelSignal::from_vector(raw, 128.0), 0.6, std::nullopt};
    const auto out = preprocess_envelope(env, 20.0);
    ASSERT_EQ(out.size(), 12000);
    EXPECT_NEAR(out.values().mean(), 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt((out.values().array() - out.values().mean()).square().sum() / 11999.0), 1.0, 1e-12);
}

TEST(PreprocessEnvelope, ConstantIsRejected)
{
    const Envelope env{MultichannelSignal::from_vector(Vector::Constant(2000, 3.0), 128.0), 0.6, std::nullopt};
    try {
        preprocess_envelope(env, 20.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ZeroVariance);
    }
}

TEST(PreprocessEnvelope, SecondPassRefilters)
{
    // The z-score stage is idempotent, but the 1-9 Hz bandpass is not: a
    // second pass filters again, reweighting the resampler's residual images
    // (80 dB stopband, ~1e-4) and shifting the z-score gain.
    const Index n = 128 * 600;
    Vector x(n);
    for (Index t = 0; t < n; ++t) {
        const double s = static_cast<double>(t) / 128.0;
        x(t) = std::sin(2 * std::numbers::pi * 4.5 * s + 0.3);
    }
    const Envelope env{MultichannelSignal::from_vector(x, 128.0), 0.6, std::nullopt};
    const auto once = preprocess_envelope(env, 20.0);
    const auto twice = preprocess_envelope(once, 20.0);
    ASSERT_EQ(once.size(), twice.size());
    const Index edge = 1200;
    const Vector a = once.values().segment(edge, n / 128 * 20 - 2 * edge);
    const Vector b = twice.values().segment(edge, a.size());
    const double gain = a.dot(b) / a.squaredNorm();
    EXPECT_LT((b - gain * a).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_GT((b - a).cwiseAbs().maxCoeff(), 1e-6);
    const auto z = zscore_per_trial(once.signal);
    EXPECT_LT((z.samples() - once.signal.samples()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ExtractEnvelope, FullChainShape)
{
    std::mt19937_64 rng(5);
    const double fs = 2000.0;
    const auto audio = MultichannelSignal::from_vector(testutil::randn(static_cast<Index>(fs * 600), rng), fs);
    EnvelopeExtractionConfig cfg;
    cfg.bank.n_bands = 4;
    cfg.bank.f_high = 900.0;
    const auto env = extract_envelope(audio, cfg);
    EXPECT_EQ(env.size(), 128 * 600);
    const auto pre = preprocess_envelope(env, 20.0);
    EXPECT_EQ(pre.size(), 12000);

    cfg.dataset_compatible = false;
    const auto raw = extract_envelope(MultichannelSignal(audio.samples().topRows(4000), fs), cfg);
    EXPECT_GE(raw.values().minCoeff(), 0.0);
}
