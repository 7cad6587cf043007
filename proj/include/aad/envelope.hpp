#pragma once

#include "aad/error.hpp"
#include "aad/iir.hpp"
#include "aad/resample.hpp"
#include "aad/signal.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace aad {

// ERB scale (Glasberg & Moore): bandwidth and ERB-number of a frequency.
inline double erb_bandwidth_hz(double f_hz) { return 24.7 * (4.37e-3 * f_hz + 1.0); }
inline double erb_number(double f_hz) { return 21.4 * std::log10(4.37e-3 * f_hz + 1.0); }
inline double erb_number_to_hz(double e) { return (std::pow(10.0, e / 21.4) - 1.0) / 4.37e-3; }

struct GammatoneBankSpec {
    int n_bands = 28;
    double f_low = 50.0;
    double f_high = 5000.0;
    int filter_order = 4;
    double fs = 0.0;

    void validate() const
    {
        if (n_bands < 1)
            fail(ErrorCode::InvalidBand, "gammatone bank needs at least one band");
        if (filter_order < 1)
            fail(ErrorCode::InvalidOrder, "gammatone order must be >= 1");
        if (!(f_low > 0.0) || !(f_low < f_high) || !(f_high < fs / 2.0))
            fail(ErrorCode::InvalidBand, "gammatone centers must satisfy 0 < f_low < f_high < fs/2");
    }

    /// Center frequencies equally spaced on the ERB-number scale, endpoints
    /// included. A single band sits at the ERB midpoint of the range.
    [[nodiscard]] std::vector<double> center_frequencies() const
    {
        validate();
        const double e_lo = erb_number(f_low);
        const double e_hi = erb_number(f_high);
        std::vector<double> centers(static_cast<std::size_t>(n_bands));
        if (n_bands == 1) {
            centers[0] = erb_number_to_hz(0.5 * (e_lo + e_hi));
            return centers;
        }
        for (int k = 0; k < n_bands; ++k)
            centers[static_cast<std::size_t>(k)] =
                erb_number_to_hz(e_lo + (e_hi - e_lo) * static_cast<double>(k) / static_cast<double>(n_bands - 1));
        return centers;
    }
};

/// Single-channel envelope with the parameters that produced it.
struct Envelope {
    MultichannelSignal signal;
    double exponent = 0.0;
    std::optional<GammatoneBankSpec> bank;

    [[nodiscard]] auto values() const { return signal.channel(0); }
    [[nodiscard]] double fs() const { return signal.fs(); }
    [[nodiscard]] Index size() const { return signal.n_samples(); }
};

/// Gammatone filter of the given order at center `fc`, implemented as a
/// complex baseband cascade of one-pole lowpass sections (unit gain at fc).
/// Bandwidth parameter b = 1.019 * ERB(fc).
inline Vector gammatone_filter(const Eigen::Ref<const Vector>& x, double fs, double fc, int order)
{
    using cd = std::complex<double>;
    const double b = 1.019 * erb_bandwidth_hz(fc);
    const double pole = std::exp(-2.0 * std::numbers::pi * b / fs);
    const double w = 2.0 * std::numbers::pi * fc / fs;
    const cd rot = std::polar(1.0, -w);

    std::vector<cd> state(static_cast<std::size_t>(order), cd{0.0, 0.0});
    Vector y(x.size());
    cd osc{1.0, 0.0}; // e^{-j w t}
    for (Index t = 0; t < x.size(); ++t) {
        cd v = x(t) * osc;
        for (auto& s : state) {
            s = (1.0 - pole) * v + pole * s;
            v = s;
        }
        y(t) = 2.0 * (v * std::conj(osc)).real();
        osc *= rot;
        if ((t & 1023) == 1023)
            osc /= std::abs(osc); // keep the oscillator on the unit circle
    }
    return y;
}

/// Split single-channel audio into ERB-spaced gammatone subbands
/// ([n_samples x n_bands]).
inline MultichannelSignal gammatone_filterbank(const MultichannelSignal& audio, GammatoneBankSpec spec)
{
    if (audio.n_channels() != 1)
        fail(ErrorCode::Shape, "gammatone filterbank expects single-channel audio, got "
                                   + std::to_string(audio.n_channels()) + " channels");
    spec.fs = audio.fs();
    const auto centers = spec.center_frequencies();
    Matrix bands(audio.n_samples(), spec.n_bands);
    for (int k = 0; k < spec.n_bands; ++k)
        bands.col(k) = gammatone_filter(audio.channel(0), audio.fs(), centers[static_cast<std::size_t>(k)], spec.filter_order);
    return MultichannelSignal(std::move(bands), audio.fs());
}

/// Sum over subbands of |x|^exponent.
inline Envelope powerlaw_envelope(const MultichannelSignal& subbands, double exponent)
{
    if (!(exponent > 0.0) || !std::isfinite(exponent))
        fail(ErrorCode::InvalidExponent, "powerlaw exponent must be > 0, got " + std::to_string(exponent));
    Vector env = subbands.samples().array().abs().pow(exponent).rowwise().sum();
    return Envelope{MultichannelSignal::from_vector(env, subbands.fs()), exponent, std::nullopt};
}

/// Filtering/resampling settings shared by the EEG and envelope chains.
struct PreprocessConfig {
    int band_order = 4;
    double band_low_hz = 1.0;
    double band_high_hz = 9.0;
    double target_fs = 20.0;
};

/// Bandpass (zero phase), resample to the target rate, z-score. Applied
/// identically to EEG and envelopes.
inline MultichannelSignal preprocess_signal(const MultichannelSignal& x, const PreprocessConfig& cfg)
{
    const auto filter = design_butterworth_bandpass(cfg.band_order, cfg.band_low_hz, cfg.band_high_hz, x.fs());
    const auto filtered = filtfilt(filter, x);
    const auto resampled = resample_to(filtered, cfg.target_fs);
    return zscore_per_trial(resampled);
}

inline Envelope preprocess_envelope(const Envelope& env, double target_fs, PreprocessConfig cfg = {})
{
    cfg.target_fs = target_fs;
    return Envelope{preprocess_signal(env.signal, cfg), env.exponent, env.bank};
}

struct EnvelopeExtractionConfig {
    GammatoneBankSpec bank{};
    double exponent = 0.6;
    /// Reproduce the published envelopes' lineage: 1-40 Hz bandpass and
    /// resampling to 128 Hz after the subband summation.
    bool dataset_compatible = true;
    double compat_low_hz = 1.0;
    double compat_high_hz = 40.0;
    double compat_fs = 128.0;
};

/// Raw audio -> broadband envelope (before the 1-9 Hz preprocessing chain).
inline Envelope extract_envelope(const MultichannelSignal& audio, const EnvelopeExtractionConfig& cfg = {})
{
    auto bank = cfg.bank;
    bank.fs = audio.fs();
    auto env = powerlaw_envelope(gammatone_filterbank(audio, bank), cfg.exponent);
    env.bank = bank;
    if (!cfg.dataset_compatible)
        return env;
    const auto filter = design_butterworth_bandpass(4, cfg.compat_low_hz, cfg.compat_high_hz, audio.fs());
    auto shaped = resample_to(filtfilt(filter, env.signal), cfg.compat_fs);
    return Envelope{std::move(shaped), env.exponent, bank};
}

} // namespace aad
