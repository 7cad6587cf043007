#pragma once

#include "aad/error.hpp"
#include "aad/signal.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace aad {

/// Per-sample attention labels in {1, 2}, stored as runs (start, label).
class AttentionLabels {
public:
    struct Run {
        Index start = 0;
        int label = 1;
        friend bool operator==(const Run&, const Run&) = default;
    };
    struct Segment {
        Index begin = 0;
        Index end = 0; // exclusive
        int label = 1;
    };

    AttentionLabels() = default;

    AttentionLabels(std::vector<Run> runs, Index length) : runs_(std::move(runs)), length_(length)
    {
        if (length_ < 1)
            fail(ErrorCode::Shape, "attention labels need at least one sample");
        if (runs_.empty() || runs_.front().start != 0)
            fail(ErrorCode::Schema, "label runs must start at sample 0");
        for (std::size_t i = 0; i < runs_.size(); ++i) {
            if (runs_[i].label != 1 && runs_[i].label != 2)
                fail(ErrorCode::Schema, "attention label must be 1 or 2, got " + std::to_string(runs_[i].label));
            if (runs_[i].start >= length_)
                fail(ErrorCode::Schema, "label run starts beyond the trial end");
            if (i > 0 && runs_[i].start <= runs_[i - 1].start)
                fail(ErrorCode::Schema, "label runs must have strictly increasing starts");
        }
        // Merge adjacent runs carrying the same label.
        std::vector<Run> merged;
        for (const auto& r : runs_)
            if (merged.empty() || merged.back().label != r.label)
                merged.push_back(r);
        runs_ = std::move(merged);
    }

    static AttentionLabels constant(int label, Index length) { return AttentionLabels({{0, label}}, length); }

    static AttentionLabels from_samples(const std::vector<int>& y)
    {
        std::vector<Run> runs;
        for (std::size_t t = 0; t < y.size(); ++t)
            if (runs.empty() || runs.back().label != y[t])
                runs.push_back({static_cast<Index>(t), y[t]});
        return AttentionLabels(std::move(runs), static_cast<Index>(y.size()));
    }

    [[nodiscard]] Index size() const noexcept { return length_; }
    [[nodiscard]] const std::vector<Run>& runs() const noexcept { return runs_; }

    [[nodiscard]] int at(Index t) const
    {
        auto it = std::upper_bound(runs_.begin(), runs_.end(), t, [](Index v, const Run& r) { return v < r.start; });
        return std::prev(it)->label;
    }

    /// Sample indices where the label changes.
    [[nodiscard]] std::vector<Index> switch_points() const
    {
        std::vector<Index> out;
        for (std::size_t i = 1; i < runs_.size(); ++i)
            out.push_back(runs_[i].start);
        return out;
    }

    /// Maximal constant-label segments, in order.
    [[nodiscard]] std::vector<Segment> segments() const
    {
        std::vector<Segment> out;
        for (std::size_t i = 0; i < runs_.size(); ++i) {
            const Index end = i + 1 < runs_.size() ? runs_[i + 1].start : length_;
            out.push_back({runs_[i].start, end, runs_[i].label});
        }
        return out;
    }

    [[nodiscard]] std::vector<int> to_samples() const
    {
        std::vector<int> y(static_cast<std::size_t>(length_));
        for (const auto& s : segments())
            std::fill(y.begin() + s.begin, y.begin() + s.end, s.label);
        return y;
    }

    friend bool operator==(const AttentionLabels&, const AttentionLabels&) = default;

private:
    std::vector<Run> runs_;
    Index length_ = 0;
};

/// T x (C*L) zero-padded Hankel stack of time-lagged EEG. Column c*L + l
/// holds x_c(t + first_lag + l); samples past the end of the trial are 0.
struct LaggedDesignMatrix {
    Matrix data;
    Index n_channels = 0;
    Index n_lags = 0;
    Index first_lag = 0;

    [[nodiscard]] Index rows() const noexcept { return data.rows(); }
    [[nodiscard]] Index cols() const noexcept { return data.cols(); }
};

/// Number of lags spanning [min_ms, max_ms] at `fs`: floor(max*fs) - ceil(min*fs) + 1.
/// 0-400 ms at 20 Hz gives 9.
struct LagRange {
    Index first = 0;
    Index count = 1;
};

inline LagRange lags_from_ms(double min_ms, double max_ms, double fs)
{
    if (!(min_ms >= 0.0) || !(max_ms >= min_ms) || !(fs > 0.0))
        fail(ErrorCode::InvalidLag, "lag range must satisfy 0 <= min <= max");
    // The small epsilon keeps 400 ms * 20 Hz = 8 from flooring to 7.
    const auto first = static_cast<Index>(std::ceil(min_ms * fs / 1000.0 - 1e-9));
    const auto last = static_cast<Index>(std::floor(max_ms * fs / 1000.0 + 1e-9));
    if (last < first)
        fail(ErrorCode::InvalidLag, "lag range contains no sample at this rate");
    return {first, last - first + 1};
}

inline LaggedDesignMatrix build_lag_matrix(const Eigen::Ref<const Matrix>& eeg, Index n_lags, Index first_lag = 0)
{
    const Index T = eeg.rows();
    const Index C = eeg.cols();
    if (n_lags < 1 || first_lag < 0)
        fail(ErrorCode::InvalidLag, "lag count must be >= 1");
    if (first_lag + n_lags > T)
        fail(ErrorCode::InvalidLag, "lag span " + std::to_string(first_lag + n_lags) + " exceeds the "
                                        + std::to_string(T) + " available samples");
    LaggedDesignMatrix X{Matrix::Zero(T, C * n_lags), C, n_lags, first_lag};
    for (Index c = 0; c < C; ++c)
        for (Index l = 0; l < n_lags; ++l) {
            const Index shift = first_lag + l;
            X.data.col(c * n_lags + l).head(T - shift) = eeg.col(c).tail(T - shift);
        }
    return X;
}

inline LaggedDesignMatrix build_lag_matrix(const MultichannelSignal& eeg, Index n_lags, Index first_lag = 0)
{
    return build_lag_matrix(eeg.samples(), n_lags, first_lag);
}

/// s_a(t) = s1(t) where y(t) = 1, s2(t) where y(t) = 2.
inline Vector select_attended(const Eigen::Ref<const Vector>& s1, const Eigen::Ref<const Vector>& s2,
                              const AttentionLabels& labels)
{
    if (s1.size() != s2.size() || s1.size() != labels.size())
        fail(ErrorCode::Shape, "envelopes and labels must have equal lengths");
    Vector sa(s1.size());
    for (const auto& seg : labels.segments()) {
        const Index n = seg.end - seg.begin;
        sa.segment(seg.begin, n) = seg.label == 1 ? s1.segment(seg.begin, n) : s2.segment(seg.begin, n);
    }
    return sa;
}

/// Sufficient statistics of one or more trials: R_xx = X'X, r_xs = X's_a,
/// the sample count and sum_t |x_t|^4 (for the Ledoit-Wolf dispersion term).
/// Statistics of several trials combine by addition.
struct DecoderStatistics {
    Matrix Rxx;
    Vector rxs;
    Index n_samples = 0;
    double sum_fourth = 0.0;
    std::vector<double> per_trial_lambda; // filled when trials are pooled

    [[nodiscard]] Index dim() const noexcept { return Rxx.rows(); }

    DecoderStatistics& operator+=(const DecoderStatistics& other)
    {
        if (n_samples == 0 && Rxx.size() == 0) {
            *this = other;
            return *this;
        }
        if (other.Rxx.rows() != Rxx.rows())
            fail(ErrorCode::Shape, "cannot pool statistics of different dimensions");
        Rxx += other.Rxx;
        rxs += other.rxs;
        n_samples += other.n_samples;
        sum_fourth += other.sum_fourth;
        per_trial_lambda.insert(per_trial_lambda.end(), other.per_trial_lambda.begin(), other.per_trial_lambda.end());
        return *this;
    }
};

namespace detail {

/// Exactly symmetric X'X (lower triangle computed, mirrored).
inline Matrix gram(const Matrix& X)
{
    const Index p = X.cols();
    Matrix R = Matrix::Zero(p, p);
    R.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
    R.triangularView<Eigen::StrictlyUpper>() = R.transpose();
    return R;
}

inline double lw_intensity_from(const Matrix& Rxx, Index T, double sum_fourth)
{
    const double n = static_cast<double>(T);
    const Index p = Rxx.rows();
    const Matrix S = Rxx / n;
    const double nu = S.trace() / static_cast<double>(p);
    // sum_t |x_t x_t' - S|_F^2 = sum_t |x_t|^4 - T |S|_F^2  (because R_xx = T S).
    const double dispersion = std::max(0.0, sum_fourth - n * S.squaredNorm()) / (n * n);
    Matrix D = S;
    D.diagonal().array() -= nu;
    const double distance = D.squaredNorm();
    if (!(distance > 0.0))
        return 1.0;
    return std::clamp(dispersion / distance, 0.0, 1.0);
}

} // namespace detail

inline DecoderStatistics accumulate_statistics(const LaggedDesignMatrix& X, const Eigen::Ref<const Vector>& sa)
{
    if (X.rows() != sa.size())
        fail(ErrorCode::Shape, "design matrix has " + std::to_string(X.rows()) + " rows but the envelope has "
                                   + std::to_string(sa.size()) + " samples");
    DecoderStatistics st;
    st.Rxx = detail::gram(X.data);
    st.rxs = X.data.transpose() * sa;
    st.n_samples = X.rows();
    st.sum_fourth = X.data.rowwise().squaredNorm().array().square().sum();
    if (st.n_samples >= 2)
        st.per_trial_lambda.push_back(detail::lw_intensity_from(st.Rxx, st.n_samples, st.sum_fourth));
    return st;
}

/// Ledoit-Wolf intensity for shrinking S = R_xx/T toward nu*I with
/// nu = trace(S)/p:  min(1, T^-2 sum_t |x_t x_t' - S|_F^2 / |S - nu I|_F^2).
/// Returns 1 when S already equals nu*I.
inline double ledoit_wolf_intensity(const DecoderStatistics& stats)
{
    if (stats.n_samples < 2)
        fail(ErrorCode::InvalidArgument, "Ledoit-Wolf needs at least two samples");
    return detail::lw_intensity_from(stats.Rxx, stats.n_samples, stats.sum_fourth);
}

inline double ledoit_wolf_intensity(const LaggedDesignMatrix& X)
{
    if (X.rows() < 2)
        fail(ErrorCode::InvalidArgument, "Ledoit-Wolf needs at least two samples");
    DecoderStatistics st;
    st.Rxx = detail::gram(X.data);
    st.n_samples = X.rows();
    st.sum_fourth = X.data.rowwise().squaredNorm().array().square().sum();
    return ledoit_wolf_intensity(st);
}

struct DecoderModel {
    Vector d;
    Matrix Rxx;
    Vector rxs;
    Index n_samples = 0;
    double lambda = 0.0;
    double nu = 0.0;
    Index n_channels = 0;
    Index n_lags = 0;
    Index first_lag = 0;
    double fs = 0.0;
    double lag_min_ms = 0.0;
    double lag_max_ms = 0.0;
    double relative_residual = 0.0;
};

/// Solve ((1 - lambda) S + lambda nu I) d = r_xs / T with S = R_xx / T via a
/// Cholesky factorization plus iterative refinement, with residuals of the
/// unscaled system (1 - lambda) R_xx + lambda nu T I taken in long double.
inline DecoderModel solve_decoder(const Matrix& Rxx, const Vector& rxs, double lambda, Index T)
{
    const Index p = Rxx.rows();
    if (Rxx.cols() != p || rxs.size() != p || p == 0)
        fail(ErrorCode::Shape, "R_xx must be square and match r_xs");
    if (!(lambda >= 0.0 && lambda <= 1.0))
        fail(ErrorCode::InvalidArgument, "shrinkage intensity must lie in [0, 1], got " + std::to_string(lambda));
    if (T < 1)
        fail(ErrorCode::InvalidArgument, "sample count must be positive");

    const double n = static_cast<double>(T);
    const Matrix S = Rxx / n;
    const double nu = S.trace() / static_cast<double>(p);
    Matrix A = (1.0 - lambda) * S;
    A.diagonal().array() += lambda * nu;
    const Vector b = rxs / n;

    const Eigen::LLT<Matrix> llt(A);
    const bool singular = llt.info() != Eigen::Success || !(llt.rcond() > 1e-14);
    if (singular)
        fail(ErrorCode::SingularSystem,
             lambda == 0.0 ? "covariance is numerically singular; use shrinkage (lambda > 0)"
                           : "shrunk covariance is numerically singular");

    Vector d = llt.solve(b);
    using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    using LVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
    LMatrix Al = static_cast<long double>(1.0 - lambda) * Rxx.cast<long double>();
    Al.diagonal().array() += static_cast<long double>(lambda) * static_cast<long double>(nu) * static_cast<long double>(T);
    const LVector bl = rxs.cast<long double>();
    for (int step = 0; step < 3; ++step) {
        const LVector r = (bl - Al * d.cast<long double>()) / static_cast<long double>(T);
        const Vector delta = llt.solve(r.cast<double>());
        d += delta;
        if (!(delta.norm() > 1e-17 * d.norm()))
            break;
    }

    DecoderModel model;
    const double bnorm = b.norm();
    model.relative_residual = bnorm > 0.0 ? (A * d - b).norm() / bnorm : (A * d).norm();
    model.d = std::move(d);
    model.Rxx = Rxx;
    model.rxs = rxs;
    model.n_samples = T;
    model.lambda = lambda;
    model.nu = nu;
    return model;
}

inline DecoderModel solve_decoder(const DecoderStatistics& stats, double lambda)
{
    return solve_decoder(stats.Rxx, stats.rxs, lambda, stats.n_samples);
}

/// s_hat = X d.
inline Vector reconstruct(const DecoderModel& model, const LaggedDesignMatrix& X)
{
    if (X.cols() != model.d.size())
        fail(ErrorCode::Shape, "design matrix has " + std::to_string(X.cols()) + " columns, decoder has "
                                   + std::to_string(model.d.size()) + " coefficients");
    return X.data * model.d;
}

/// s_hat(t) = sum_c sum_l d_c(l) x_c(t + first_lag + l) without materializing X.
inline Vector reconstruct(const DecoderModel& model, const Eigen::Ref<const Matrix>& eeg)
{
    const Index T = eeg.rows();
    if (eeg.cols() * model.n_lags != model.d.size())
        fail(ErrorCode::Shape, "EEG channel count does not match the decoder");
    if (model.first_lag + model.n_lags > T)
        fail(ErrorCode::InvalidLag, "trial shorter than the decoder's lag span");
    Vector out = Vector::Zero(T);
    for (Index c = 0; c < eeg.cols(); ++c)
        for (Index l = 0; l < model.n_lags; ++l) {
            const Index shift = model.first_lag + l;
            out.head(T - shift) += model.d(c * model.n_lags + l) * eeg.col(c).tail(T - shift);
        }
    return out;
}

} // namespace aad
