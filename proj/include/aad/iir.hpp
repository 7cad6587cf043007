#pragma once

#include "aad/error.hpp"
#include "aad/signal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

namespace aad {

/// One biquad, a0 normalized to 1: b = {b0, b1, b2}, a = {1, a1, a2}.
struct Biquad {
    std::array<double, 3> b{};
    std::array<double, 3> a{1.0, 0.0, 0.0};
};

/// Digital Butterworth bandpass designed for a fixed sampling rate.
///
/// The cascade of second-order sections is what `filtfilt` runs; `b`/`a` hold
/// the equivalent expanded transfer function (degree 2*order).
struct IIRFilterSpec {
    int order = 0; // analog prototype order (before the bandpass transform)
    double low_hz = 0.0;
    double high_hz = 0.0;
    double fs = 0.0;
    std::vector<Biquad> sections;
    std::vector<double> b;
    std::vector<double> a;
    std::vector<std::complex<double>> poles;

    /// Order of the transformed (digital bandpass) filter.
    [[nodiscard]] int state_length() const noexcept { return 2 * order; }

    /// Complex frequency response of the section cascade at `freq_hz`.
    [[nodiscard]] std::complex<double> response(double freq_hz) const
    {
        const double w = 2.0 * std::numbers::pi * freq_hz / fs;
        const std::complex<double> zinv = std::polar(1.0, -w);
        std::complex<double> h{1.0, 0.0};
        for (const auto& s : sections) {
            const auto num = s.b[0] + zinv * (s.b[1] + zinv * s.b[2]);
            const auto den = s.a[0] + zinv * (s.a[1] + zinv * s.a[2]);
            h *= num / den;
        }
        return h;
    }
};

namespace detail {

inline std::vector<double> poly_mul(const std::vector<double>& p, const std::array<double, 3>& q)
{
    std::vector<double> out(p.size() + 2, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = 0; j < 3; ++j)
            out[i + j] += p[i] * q[j];
    return out;
}

} // namespace detail

/// Butterworth bandpass via the bilinear transform with prewarped band edges.
/// The -3 dB points land exactly on `low_hz` and `high_hz`.
inline IIRFilterSpec design_butterworth_bandpass(int order, double low_hz, double high_hz, double fs)
{
    using cd = std::complex<double>;
    using std::numbers::pi;

    if (order < 1)
        fail(ErrorCode::InvalidOrder, "filter order must be >= 1, got " + std::to_string(order));
    if (!(fs > 0.0) || !(low_hz > 0.0) || !(low_hz < high_hz) || !(high_hz < fs / 2.0))
        fail(ErrorCode::InvalidBand, "band edges must satisfy 0 < low < high < fs/2 (got " + std::to_string(low_hz) + ", "
                                         + std::to_string(high_hz) + " at fs=" + std::to_string(fs) + ")");

    const double fs2 = 2.0 * fs;
    const double w_low = fs2 * std::tan(pi * low_hz / fs);
    const double w_high = fs2 * std::tan(pi * high_hz / fs);
    const double bw = w_high - w_low;
    const double w0 = std::sqrt(w_low * w_high);

    // Analog lowpass prototype poles on the left half unit circle.
    std::vector<cd> analog;
    analog.reserve(2 * order);
    for (int k = 0; k < order; ++k) {
        const double theta = pi * (2.0 * k + order + 1) / (2.0 * order);
        const cd p = std::polar(1.0, theta);
        // Lowpass -> bandpass: each prototype pole splits in two.
        const cd half = p * (bw / 2.0);
        const cd disc = std::sqrt(half * half - w0 * w0);
        analog.push_back(half + disc);
        analog.push_back(half - disc);
    }

    // Bilinear transform. The bandpass has `order` zeros at s = 0 (-> z = 1)
    // and `order` zeros at infinity (-> z = -1).
    std::vector<cd> digital;
    digital.reserve(analog.size());
    // H(z) = k * prod(1 - z^-2) / prod(1 - p_d z^-1), k = (bw*fs2)^order / prod(fs2 - p).
    const double sqrt_num = std::sqrt(bw * fs2);
    cd k_ratio{1.0, 0.0};
    for (const auto& p : analog) {
        digital.push_back((fs2 + p) / (fs2 - p));
        k_ratio *= sqrt_num / (fs2 - p);
    }
    const double k_digital = k_ratio.real();

    // Pair poles into sections: conjugate pairs first, then leftover reals.
    std::vector<cd> complex_upper;
    std::vector<double> reals;
    for (const auto& p : digital) {
        if (std::abs(p.imag()) > 1e-12 * std::max(1.0, std::abs(p))) {
            if (p.imag() > 0.0)
                complex_upper.push_back(p);
        } else {
            reals.push_back(p.real());
        }
    }
    std::sort(reals.begin(), reals.end());
    std::sort(complex_upper.begin(), complex_upper.end(),
              [](const cd& x, const cd& y) { return std::abs(x) < std::abs(y); });

    IIRFilterSpec spec;
    spec.order = order;
    spec.low_hz = low_hz;
    spec.high_hz = high_hz;
    spec.fs = fs;
    spec.poles = digital;

    for (const auto& p : complex_upper)
        spec.sections.push_back({{1.0, 0.0, -1.0}, {1.0, -2.0 * p.real(), std::norm(p)}});
    for (std::size_t i = 0; i + 1 < reals.size(); i += 2)
        spec.sections.push_back({{1.0, 0.0, -1.0}, {1.0, -(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]}});
    if (static_cast<int>(spec.sections.size()) != order)
        fail(ErrorCode::InvalidBand, "pole pairing failed for the requested band");

    for (double& v : spec.sections.front().b)
        v *= k_digital;

    for (const auto& p : digital)
        if (!(std::abs(p) < 1.0))
            fail(ErrorCode::InvalidBand, "designed filter is unstable for the requested band");

    std::vector<double> b{1.0}, a{1.0};
    for (const auto& s : spec.sections) {
        b = detail::poly_mul(b, s.b);
        a = detail::poly_mul(a, s.a);
    }
    spec.b = std::move(b);
    spec.a = std::move(a);
    return spec;
}

namespace detail {

/// Steady-state transposed-direct-form-II states of each section for a unit
/// step input (scaled by the first input sample at run time).
inline std::vector<std::array<double, 2>> step_initial_states(const std::vector<Biquad>& sections)
{
    std::vector<std::array<double, 2>> zi;
    zi.reserve(sections.size());
    double input_level = 1.0;
    for (const auto& s : sections) {
        const double g = (s.b[0] + s.b[1] + s.b[2]) / (s.a[0] + s.a[1] + s.a[2]);
        const double z2 = s.b[2] - s.a[2] * g;
        const double z1 = s.b[1] - s.a[1] * g + z2;
        zi.push_back({z1 * input_level, z2 * input_level});
        input_level *= g;
    }
    return zi;
}

inline void sosfilt_inplace(const std::vector<Biquad>& sections, std::vector<std::array<double, 2>> zi,
                            std::vector<double>& x, double zi_scale)
{
    for (auto& z : zi) {
        z[0] *= zi_scale;
        z[1] *= zi_scale;
    }
    for (std::size_t k = 0; k < sections.size(); ++k) {
        const auto& s = sections[k];
        double z1 = zi[k][0], z2 = zi[k][1];
        for (double& v : x) {
            const double in = v;
            const double y = s.b[0] * in + z1;
            z1 = s.b[1] * in - s.a[1] * y + z2;
            z2 = s.b[2] * in - s.a[2] * y;
            v = y;
        }
    }
}

} // namespace detail

/// Number of samples mirrored on each side before forward-backward filtering.
inline Index filtfilt_pad_length(const IIRFilterSpec& filter) { return 3 * filter.state_length(); }

/// Zero-phase forward-backward filtering, applied channel-wise, with odd
/// reflection padding and steady-state initial conditions at both ends.
inline MultichannelSignal filtfilt(const IIRFilterSpec& filter, const MultichannelSignal& signal)
{
    if (filter.sections.empty())
        fail(ErrorCode::InvalidArgument, "filter has no sections");
    if (std::abs(filter.fs - signal.fs()) > 1e-9 * signal.fs())
        fail(ErrorCode::InvalidBand, "filter designed for fs=" + std::to_string(filter.fs) + " applied to fs="
                                         + std::to_string(signal.fs()));
    const Index n = signal.n_samples();
    const Index pad = filtfilt_pad_length(filter);
    if (n <= pad)
        fail(ErrorCode::InsufficientLength, "signal of " + std::to_string(n) + " samples is too short for filtfilt (needs > "
                                                + std::to_string(pad) + ")");

    const auto zi = detail::step_initial_states(filter.sections);
    Matrix out(n, signal.n_channels());
    std::vector<double> ext(static_cast<std::size_t>(n + 2 * pad));

    for (Index c = 0; c < signal.n_channels(); ++c) {
        const auto x = signal.channel(c);
        for (Index i = 0; i < pad; ++i)
            ext[static_cast<std::size_t>(i)] = 2.0 * x(0) - x(pad - i);
        for (Index i = 0; i < n; ++i)
            ext[static_cast<std::size_t>(pad + i)] = x(i);
        for (Index i = 0; i < pad; ++i)
            ext[static_cast<std::size_t>(pad + n + i)] = 2.0 * x(n - 1) - x(n - 2 - i);

        detail::sosfilt_inplace(filter.sections, zi, ext, ext.front());
        std::reverse(ext.begin(), ext.end());
        detail::sosfilt_inplace(filter.sections, zi, ext, ext.front());
        std::reverse(ext.begin(), ext.end());

        for (Index i = 0; i < n; ++i)
            out(i, c) = ext[static_cast<std::size_t>(pad + i)];
    }
    return signal.with_samples(std::move(out), signal.fs());
}

} // namespace aad
