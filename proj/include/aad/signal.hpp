#pragma once

#include "aad/error.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace aad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Uniformly sampled multichannel time series, time-major
/// ([n_samples x n_channels]). Immutable once constructed; every sample is
/// finite and the rate is positive.
class MultichannelSignal {
public:
    MultichannelSignal(Matrix samples, double fs, std::vector<std::string> channel_labels = {})
        : samples_(std::move(samples)), fs_(fs), labels_(std::move(channel_labels))
    {
        if (!(fs_ > 0.0) || !std::isfinite(fs_))
            fail(ErrorCode::InvalidArgument, "sampling rate must be positive, got " + std::to_string(fs_));
        if (samples_.rows() < 1 || samples_.cols() < 1)
            fail(ErrorCode::Shape, "signal needs at least one sample and one channel");
        if (!samples_.allFinite())
            fail(ErrorCode::InvalidArgument, "signal contains NaN or Inf samples");
        if (!labels_.empty() && static_cast<Index>(labels_.size()) != samples_.cols())
            fail(ErrorCode::Shape, "channel label count does not match channel count");
    }

    /// Single-channel convenience constructor.
    static MultichannelSignal from_vector(const Vector& x, double fs)
    {
        return MultichannelSignal(Matrix(x), fs);
    }

    [[nodiscard]] const Matrix& samples() const noexcept { return samples_; }
    [[nodiscard]] double fs() const noexcept { return fs_; }
    [[nodiscard]] Index n_samples() const noexcept { return samples_.rows(); }
    [[nodiscard]] Index n_channels() const noexcept { return samples_.cols(); }
    [[nodiscard]] double duration_s() const noexcept { return static_cast<double>(n_samples()) / fs_; }
    [[nodiscard]] const std::vector<std::string>& channel_labels() const noexcept { return labels_; }
    [[nodiscard]] auto channel(Index c) const { return samples_.col(c); }

    /// Same labels, new samples/rate.
    [[nodiscard]] MultichannelSignal with_samples(Matrix samples, double fs) const
    {
        return MultichannelSignal(std::move(samples), fs, labels_);
    }

private:
    Matrix samples_;
    double fs_;
    std::vector<std::string> labels_;
};

namespace detail {

inline std::pair<double, double> mean_and_sample_std(const Eigen::Ref<const Vector>& x)
{
    const double n = static_cast<double>(x.size());
    const double mean = x.mean();
    const double ss = (x.array() - mean).square().sum();
    return {mean, n > 1.0 ? std::sqrt(ss / (n - 1.0)) : 0.0};
}

} // namespace detail

/// Normalize every channel to zero mean and unit sample standard deviation
/// (n - 1 denominator). Constant channels are rejected rather than zeroed.
inline MultichannelSignal zscore_per_trial(const MultichannelSignal& signal)
{
    Matrix out(signal.n_samples(), signal.n_channels());
    for (Index c = 0; c < signal.n_channels(); ++c) {
        const auto x = signal.channel(c);
        const auto [mean, sd] = detail::mean_and_sample_std(x);
        const double scale = x.cwiseAbs().maxCoeff();
        if (!(sd > 1e-14 * scale) || sd == 0.0)
            fail(ErrorCode::ZeroVariance, "channel " + std::to_string(c) + " has zero variance");
        out.col(c) = (x.array() - mean) / sd;
    }
    return signal.with_samples(std::move(out), signal.fs());
}

} // namespace aad
