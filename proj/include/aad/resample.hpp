#pragma once

#include "aad/error.hpp"
#include "aad/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace aad {

struct ResampleRatio {
    std::int64_t up = 1;
    std::int64_t down = 1;
};

/// Reduced rational ratio to_fs / from_fs. Rates are matched to within 1e-9
/// relative by a continued-fraction expansion with denominators <= 100000.
inline ResampleRatio rational_ratio(double from_fs, double to_fs)
{
    if (!(from_fs > 0.0) || !(to_fs > 0.0))
        fail(ErrorCode::InvalidRatio, "sampling rates must be positive");
    const double target = to_fs / from_fs;
    std::int64_t h_prev = 1, h = static_cast<std::int64_t>(std::floor(target));
    std::int64_t k_prev = 0, k = 1;
    double frac = target - std::floor(target);
    while (std::abs(static_cast<double>(h) / static_cast<double>(k) - target) > 1e-9 * target) {
        if (frac < 1e-15)
            break;
        const double inv = 1.0 / frac;
        const auto a = static_cast<std::int64_t>(std::floor(inv));
        frac = inv - std::floor(inv);
        const std::int64_t h_next = a * h + h_prev;
        const std::int64_t k_next = a * k + k_prev;
        if (k_next > 100000)
            fail(ErrorCode::InvalidRatio, "rate ratio " + std::to_string(target) + " has no small rational form");
        h_prev = std::exchange(h, h_next);
        k_prev = std::exchange(k, k_next);
    }
    if (h < 1)
        fail(ErrorCode::InvalidRatio, "rate ratio too small to represent");
    return {h, k};
}

namespace detail {

/// Kaiser-windowed sinc lowpass for the polyphase resampler: cutoff at
/// 1/max(up, down) of the upsampled Nyquist, 80 dB stopband, transition width
/// 20% of the cutoff. DC gain is `up` to compensate zero-stuffing.
inline std::vector<double> resample_kernel(std::int64_t up, std::int64_t down)
{
    using std::numbers::pi;
    constexpr double attenuation_db = 80.0;
    const double beta = 0.1102 * (attenuation_db - 8.7);
    const double cutoff = 1.0 / static_cast<double>(std::max(up, down)); // fraction of Nyquist
    const double width = 0.2 * cutoff;
    auto taps = static_cast<std::int64_t>(std::ceil((attenuation_db - 7.95) / (2.285 * pi * width))) + 1;
    if (taps % 2 == 0)
        ++taps;
    const double half = static_cast<double>(taps - 1) / 2.0;
    const double i0_beta = std::cyl_bessel_i(0.0, beta);

    std::vector<double> h(static_cast<std::size_t>(taps));
    double sum = 0.0;
    for (std::int64_t n = 0; n < taps; ++n) {
        const double m = static_cast<double>(n) - half;
        const double arg = pi * cutoff * m;
        const double sinc = m == 0.0 ? 1.0 : std::sin(arg) / arg;
        const double r = m / half;
        const double window = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
        h[static_cast<std::size_t>(n)] = cutoff * sinc * window;
        sum += h[static_cast<std::size_t>(n)];
    }
    for (double& v : h)
        v *= static_cast<double>(up) / sum;
    return h;
}

} // namespace detail

/// Rational resampling by up/down with a zero-delay polyphase FIR
/// anti-alias/anti-image filter. Output length is ceil(n * up / down) and
/// output fs is fs * up / down. Input is zero-extended at both ends.
inline MultichannelSignal resample_rational(const MultichannelSignal& signal, std::int64_t up, std::int64_t down)
{
    if (up < 1 || down < 1)
        fail(ErrorCode::InvalidRatio, "resampling factors must be >= 1 (got up=" + std::to_string(up)
                                          + ", down=" + std::to_string(down) + ")");
    const std::int64_t g = std::gcd(up, down);
    up /= g;
    down /= g;
    if (up == 1 && down == 1)
        return signal;

    const auto h = detail::resample_kernel(up, down);
    const auto taps = static_cast<std::int64_t>(h.size());
    const std::int64_t delay = (taps - 1) / 2;
    const std::int64_t n_in = signal.n_samples();
    const std::int64_t n_out = (n_in * up + down - 1) / down;

    Matrix out = Matrix::Zero(n_out, signal.n_channels());
    for (std::int64_t m = 0; m < n_out; ++m) {
        // Position on the upsampled grid whose filter output lands at sample m.
        const std::int64_t pos = m * down + delay;
        // Input index i contributes through tap k = pos - i*up, 0 <= k < taps.
        const std::int64_t i_hi = std::min(n_in - 1, pos / up);
        const std::int64_t lo_num = pos - (taps - 1);
        std::int64_t i_lo = lo_num <= 0 ? 0 : (lo_num + up - 1) / up;
        for (Index c = 0; c < signal.n_channels(); ++c) {
            const auto x = signal.channel(c);
            double acc = 0.0;
            for (std::int64_t i = i_lo; i <= i_hi; ++i)
                acc += h[static_cast<std::size_t>(pos - i * up)] * x(i);
            out(m, c) = acc;
        }
    }
    const double fs_out = signal.fs() * static_cast<double>(up) / static_cast<double>(down);
    return signal.with_samples(std::move(out), fs_out);
}

/// Resample to `target_fs` using the reduced rational ratio of the two rates.
inline MultichannelSignal resample_to(const MultichannelSignal& signal, double target_fs)
{
    const auto ratio = rational_ratio(signal.fs(), target_fs);
    auto out = resample_rational(signal, ratio.up, ratio.down);
    // Keep the nominal rate exactly.
    return out.with_samples(out.samples(), target_fs);
}

} // namespace aad
