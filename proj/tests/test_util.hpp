#pragma once

#include "oracles.hpp"

#include "aad/signal.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace testutil {

inline aad::Matrix to_eigen(const oracle::Mat& m)
{
    aad::Matrix out(static_cast<aad::Index>(m.size()), m.empty() ? 0 : static_cast<aad::Index>(m[0].size()));
    for (aad::Index r = 0; r < out.rows(); ++r)
        for (aad::Index c = 0; c < out.cols(); ++c)
            out(r, c) = m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    return out;
}

inline std::vector<double> to_std(const aad::Vector& v) { return {v.data(), v.data() + v.size()}; }

inline aad::Vector sine(aad::Index n, double f_hz, double fs, double phase = 0.0)
{
    aad::Vector x(n);
    for (aad::Index t = 0; t < n; ++t)
        x(t) = std::sin(2.0 * std::numbers::pi * f_hz * static_cast<double>(t) / fs + phase);
    return x;
}

inline aad::Vector randn(aad::Index n, std::mt19937_64& rng)
{
    std::normal_distribution<double> dist;
    aad::Vector x(n);
    for (auto& v : x)
        v = dist(rng);
    return x;
}

inline aad::Matrix randn(aad::Index rows, aad::Index cols, std::mt19937_64& rng)
{
    std::normal_distribution<double> dist;
    aad::Matrix x(rows, cols);
    for (aad::Index i = 0; i < x.size(); ++i)
        x.data()[i] = dist(rng);
    return x;
}

/// Lag (in samples) maximizing the cross-correlation sum_t a(t) b(t + k).
inline int xcorr_peak_lag(const aad::Vector& a, const aad::Vector& b, int max_lag)
{
    int best = 0;
    double best_v = -INFINITY;
    for (int k = -max_lag; k <= max_lag; ++k) {
        double s = 0.0;
        for (aad::Index t = 0; t < a.size(); ++t)
            if (t + k >= 0 && t + k < b.size())
                s += a(t) * b(t + k);
        if (s > best_v) {
            best_v = s;
            best = k;
        }
    }
    return best;
}

} // namespace testutil
