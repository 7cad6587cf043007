#include "test_util.hpp"

#include "aad/iir.hpp"
#include "aad/resample.hpp"
#include "aad/signal.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace aad;
using testutil::sine;

namespace {

double interior_amplitude(const Vector& y, Index edge)
{
    return y.segment(edge, y.size() - 2 * edge).cwiseAbs().maxCoeff();
}

const IIRFilterSpec& eeg_band()
{
    static const auto f = design_butterworth_bandpass(4, 1.0, 9.0, 128.0);
    return f;
}

} // namespace

TEST(MultichannelSignal, RejectsBadInput)
{
    EXPECT_THROW(MultichannelSignal(Matrix::Zero(3, 1), 0.0), Error);
    EXPECT_THROW(MultichannelSignal(Matrix::Zero(0, 1), 10.0), Error);
    Matrix bad = Matrix::Zero(3, 1);
    bad(1, 0) = std::nan("");
    EXPECT_THROW(MultichannelSignal(bad, 10.0), Error);
    const MultichannelSignal ok(Matrix::Zero(20, 2), 10.0);
    EXPECT_DOUBLE_EQ(ok.duration_s(), 2.0);
}

TEST(ButterworthBandpass, MatchesClosedFormMagnitude)
{
    const auto& f = eeg_band();
    ASSERT_EQ(f.sections.size(), 4u);
    EXPECT_EQ(f.a.front(), 1.0);
    for (const auto& p : f.poles)
        EXPECT_LT(std::abs(p), 1.0);
    for (double hz = 0.05; hz < 64.0; hz += 0.37) {
        const double expected = oracle::butterworth_bandpass_magnitude(4, 1.0, 9.0, 128.0, hz);
        EXPECT_NEAR(std::abs(f.response(hz)), expected, 1e-9) << hz;
        EXPECT_NEAR(std::abs(oracle::polynomial_response(f.b, f.a, hz, 128.0)), expected, 1e-7) << hz;
    }
}

TEST(ButterworthBandpass, PassbandAndStopband)
{
    const auto& f = eeg_band();
    EXPECT_GE(std::abs(oracle::polynomial_response(f.b, f.a, 4.5, 128.0)), 0.95);
    EXPECT_LE(std::abs(oracle::polynomial_response(f.b, f.a, 0.1, 128.0)), 0.05);
    EXPECT_NEAR(std::abs(f.response(1.0)), std::sqrt(0.5), 1e-9);
    EXPECT_NEAR(std::abs(f.response(9.0)), std::sqrt(0.5), 1e-9);
}

TEST(ButterworthBandpass, OtherOrdersAndRates)
{
    for (int order : {1, 2, 3, 5, 6})
        for (double fs : {20.0, 128.0, 1000.0}) {
            const auto f = design_butterworth_bandpass(order, 1.0, 9.0, fs);
            for (double hz : {0.3, 1.0, 3.0, 8.0, 9.5})
                EXPECT_NEAR(std::abs(f.response(hz)), oracle::butterworth_bandpass_magnitude(order, 1.0, 9.0, fs, hz), 1e-8)
                    << order << " " << fs << " " << hz;
        }
}

TEST(ButterworthBandpass, InvalidBands)
{
    auto code = [](auto fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::Io;
    };
    EXPECT_EQ(code([] { design_butterworth_bandpass(4, 9.0, 1.0, 128.0); }), ErrorCode::InvalidBand);
    EXPECT_EQ(code([] { design_butterworth_bandpass(4, 1.0, 70.0, 128.0); }), ErrorCode::InvalidBand);
    EXPECT_EQ(code([] { design_butterworth_bandpass(4, 0.0, 9.0, 128.0); }), ErrorCode::InvalidBand);
    EXPECT_EQ(code([] { design_butterworth_bandpass(0, 1.0, 9.0, 128.0); }), ErrorCode::InvalidOrder);
}

TEST(Filtfilt, ZeroInZeroOut)
{
    const MultichannelSignal x(Matrix::Zero(500, 3), 128.0);
    EXPECT_EQ(filtfilt(eeg_band(), x).samples().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Filtfilt, InBandSineKeepsAmplitudeAndPhase)
{
    const Index n = 128 * 40;
    const auto x = MultichannelSignal::from_vector(sine(n, 5.0, 128.0), 128.0);
    const Vector y = filtfilt(eeg_band(), x).channel(0);
    const Index edge = 2 * 128 * 4;
    const double amp = interior_amplitude(y, edge);
    const double expected = std::pow(oracle::butterworth_bandpass_magnitude(4, 1.0, 9.0, 128.0, 5.0), 2);
    EXPECT_GE(amp, 0.9);
    EXPECT_LE(amp, 1.0 + 1e-9);
    EXPECT_NEAR(amp, expected, 2e-3);
    const Vector xi = x.channel(0).segment(edge, n - 2 * edge);
    const Vector yi = y.segment(edge, n - 2 * edge);
    EXPECT_EQ(testutil::xcorr_peak_lag(xi, yi, 10), 0);
}

TEST(Filtfilt, ZeroPhaseAcrossBand)
{
    for (double hz : {1.5, 3.0, 5.0, 7.0, 8.5}) {
        const Index n = 128 * 60;
        const auto x = MultichannelSignal::from_vector(sine(n, hz, 128.0, 0.3), 128.0);
        const Vector y = filtfilt(eeg_band(), x).channel(0);
        const Index edge = 2 * 128 * 6;
        const Vector xi = x.channel(0).segment(edge, n - 2 * edge);
        const Vector yi = y.segment(edge, n - 2 * edge);
        EXPECT_EQ(testutil::xcorr_peak_lag(xi, yi, 20), 0) << hz;
        // Zero phase: y is the input scaled by |H|^2, sample by sample.
        const double g = std::pow(oracle::butterworth_bandpass_magnitude(4, 1.0, 9.0, 128.0, hz), 2);
        EXPECT_LT((yi - g * xi).cwiseAbs().maxCoeff(), 5e-3) << hz;
    }
}

TEST(Filtfilt, StopbandSineIsRemoved)
{
    const Index n = 128 * 20;
    const auto x = MultichannelSignal::from_vector(sine(n, 30.0, 128.0), 128.0);
    EXPECT_LE(interior_amplitude(filtfilt(eeg_band(), x).channel(0), 2 * 128), 0.05);
}

TEST(Filtfilt, Linearity)
{
    std::mt19937_64 rng(7);
    const Matrix a = testutil::randn(1000, 2, rng);
    const Matrix b = testutil::randn(1000, 2, rng);
    const double alpha = 2.5, beta = -0.75;
    const Matrix lhs = filtfilt(eeg_band(), MultichannelSignal(alpha * a + beta * b, 128.0)).samples();
    const Matrix rhs = alpha * filtfilt(eeg_band(), MultichannelSignal(a, 128.0)).samples()
                       + beta * filtfilt(eeg_band(), MultichannelSignal(b, 128.0)).samples();
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10 * rhs.cwiseAbs().maxCoeff());
}

TEST(Filtfilt, ShortSignalAndRateMismatch)
{
    const auto pad = filtfilt_pad_length(eeg_band());
    EXPECT_EQ(pad, 24);
    const MultichannelSignal short_sig(Matrix::Ones(pad, 1), 128.0);
    try {
        filtfilt(eeg_band(), short_sig);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InsufficientLength);
    }
    EXPECT_THROW(filtfilt(eeg_band(), MultichannelSignal(Matrix::Ones(500, 1), 100.0)), Error);
}

TEST(Resample, LengthAndRate)
{
    const MultichannelSignal x(Matrix::Zero(76800, 1), 128.0);
    const auto y = resample_rational(x, 5, 32);
    EXPECT_EQ(y.n_samples(), 12000);
    EXPECT_DOUBLE_EQ(y.fs(), 20.0);
    const auto r = rational_ratio(128.0, 20.0);
    EXPECT_EQ(r.up, 5);
    EXPECT_EQ(r.down, 32);
    EXPECT_EQ(resample_to(x, 20.0).n_samples(), 12000);
}

TEST(Resample, IdentityRatio)
{
    std::mt19937_64 rng(1);
    const MultichannelSignal x(testutil::randn(100, 3, rng), 128.0);
    EXPECT_EQ(resample_rational(x, 1, 1).samples(), x.samples());
    EXPECT_EQ(resample_rational(x, 7, 7).samples(), x.samples());
}

TEST(Resample, SinusoidAmplitude)
{
    const Index n = 128 * 60;
    const auto x = MultichannelSignal::from_vector(sine(n, 3.0, 128.0, 0.4), 128.0);
    const Vector y = resample_to(x, 20.0).channel(0);
    const Vector ref = sine(y.size(), 3.0, 20.0, 0.4);
    const Index edge = 20 * 5;
    const double err = (y - ref).segment(edge, y.size() - 2 * edge).cwiseAbs().maxCoeff();
    EXPECT_LE(err, 0.02);
}

TEST(Resample, DurationPreserved)
{
    for (Index n : {100, 1000, 76799, 76800, 76801}) {
        const MultichannelSignal x(Matrix::Zero(n, 1), 128.0);
        const auto y = resample_rational(x, 5, 32);
        EXPECT_LE(std::abs(y.duration_s() - x.duration_s()), 1.0 / 20.0) << n;
    }
}

TEST(Resample, InvalidFactors)
{
    const MultichannelSignal x(Matrix::Zero(10, 1), 128.0);
    EXPECT_THROW(resample_rational(x, 0, 3), Error);
    EXPECT_THROW(resample_rational(x, 3, -1), Error);
}

TEST(Zscore, Examples)
{
    Matrix m(3, 1);
    m << 1, 2, 3;
    const auto z = zscore_per_trial(MultichannelSignal(m, 1.0));
    EXPECT_NEAR(z.channel(0).mean(), 0.0, 1e-15);
    EXPECT_NEAR(std::sqrt(z.channel(0).squaredNorm() / 2.0), 1.0, 1e-15);
    EXPECT_LE((zscore_per_trial(z).samples() - z.samples()).cwiseAbs().maxCoeff(), 1e-10);

    Matrix flat(3, 1);
    flat << 5, 5, 5;
    try {
        zscore_per_trial(MultichannelSignal(flat, 1.0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ZeroVariance);
    }
}

TEST(Zscore, AffineInvariance)
{
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix x = testutil::randn(200, 2, rng);
        std::uniform_real_distribution<double> u(-10.0, 10.0);
        double a = u(rng);
        if (std::abs(a) < 0.1)
            a = 1.0;
        const double b = u(rng);
        const Matrix zx = zscore_per_trial(MultichannelSignal(x, 1.0)).samples();
        const Matrix zy = zscore_per_trial(MultichannelSignal((a * x.array() + b).matrix(), 1.0)).samples();
        EXPECT_LE((zy - (a > 0 ? 1.0 : -1.0) * zx).cwiseAbs().maxCoeff(), 1e-10);
    }
}
