#pragma once

#include "aad/decoder.hpp"
#include "aad/error.hpp"
#include "aad/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace aad {

/// Sample Pearson correlation of two equal-length vectors.
inline double pearson(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b)
{
    if (a.size() != b.size())
        fail(ErrorCode::Shape, "pearson: length mismatch");
    if (a.size() < 2)
        fail(ErrorCode::Shape, "pearson: need at least two samples");
    const auto da = (a.array() - a.mean()).eval();
    const auto db = (b.array() - b.mean()).eval();
    const double saa = da.square().sum();
    const double sbb = db.square().sum();
    if (!(saa > 0.0) || !(sbb > 0.0))
        fail(ErrorCode::ZeroVariance, "pearson: zero-variance input");
    const double r = (da * db).sum() / std::sqrt(saa * sbb);
    return std::clamp(r, -1.0, 1.0);
}

struct DecisionWindowConfig {
    double window_len_s = 60.0;
    double overlap = 0.0; // fraction of the window shared with the next one
    bool drop_partial = true;

    [[nodiscard]] Index window_samples(double fs) const
    {
        return static_cast<Index>(std::llround(window_len_s * fs));
    }

    void validate(double fs) const
    {
        if (!(window_len_s > 0.0))
            fail(ErrorCode::Config, "decision window length must be positive");
        if (!(overlap >= 0.0 && overlap < 1.0))
            fail(ErrorCode::Config, "window overlap must lie in [0, 1)");
        if (window_samples(fs) < 2)
            fail(ErrorCode::Config, "decision window must span at least two samples");
    }
};

struct DecisionRecord {
    Index window_index = 0;
    Index begin = 0; // sample range within the trial
    Index length = 0;
    double rho1 = 0.0;
    double rho2 = 0.0;
    int decided = 1;
    int truth = 1;
    bool correct = false;
    bool tie = false;
    bool decidable = true;
};

/// Correlate the reconstruction with both competing envelopes and pick the
/// larger; rho1 == rho2 decides speaker 1 and flags a tie. Zero-variance
/// inputs yield an undecidable record instead of throwing.
inline DecisionRecord decide_window(const Eigen::Ref<const Vector>& s_hat, const Eigen::Ref<const Vector>& s1,
                                    const Eigen::Ref<const Vector>& s2, int truth = 1)
{
    if (s_hat.size() != s1.size() || s_hat.size() != s2.size())
        fail(ErrorCode::Shape, "decide_window: length mismatch");
    DecisionRecord rec;
    rec.length = s_hat.size();
    rec.truth = truth;
    try {
        rec.rho1 = pearson(s_hat, s1);
        rec.rho2 = pearson(s_hat, s2);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ZeroVariance)
            throw;
        rec.decidable = false;
        rec.correct = false;
        rec.rho1 = rec.rho2 = std::nan("");
        return rec;
    }
    rec.tie = rec.rho1 == rec.rho2;
    rec.decided = rec.rho1 >= rec.rho2 ? 1 : 2;
    rec.correct = rec.decided == truth;
    return rec;
}

struct WindowedResult {
    std::vector<DecisionRecord> records;
    Index n_correct = 0;
    Index n_decidable = 0;
    Index n_undecidable = 0;

    [[nodiscard]] double accuracy() const
    {
        return n_decidable > 0 ? static_cast<double>(n_correct) / static_cast<double>(n_decidable) : std::nan("");
    }
};

/// Partition a trial into decision windows (never crossing a label switch)
/// and decide each one.
inline WindowedResult windowed_decisions(const Eigen::Ref<const Vector>& s_hat, const Eigen::Ref<const Vector>& s1,
                                         const Eigen::Ref<const Vector>& s2, const AttentionLabels& labels,
                                         const DecisionWindowConfig& cfg, double fs)
{
    if (s_hat.size() != s1.size() || s_hat.size() != s2.size() || s_hat.size() != labels.size())
        fail(ErrorCode::Shape, "windowed_decisions: signals and labels must have equal lengths");
    cfg.validate(fs);
    const Index win = cfg.window_samples(fs);
    const Index hop = std::max<Index>(1, static_cast<Index>(std::llround(static_cast<double>(win) * (1.0 - cfg.overlap))));

    WindowedResult out;
    Index index = 0;
    for (const auto& seg : labels.segments()) {
        for (Index start = seg.begin; start < seg.end; start += hop) {
            Index len = std::min(win, seg.end - start);
            if (len < win && (cfg.drop_partial || len < 2))
                break;
            auto rec = decide_window(s_hat.segment(start, len), s1.segment(start, len), s2.segment(start, len), seg.label);
            rec.window_index = index++;
            rec.begin = start;
            if (rec.decidable) {
                ++out.n_decidable;
                out.n_correct += rec.correct ? 1 : 0;
            } else {
                ++out.n_undecidable;
            }
            out.records.push_back(rec);
            if (start + len >= seg.end)
                break;
        }
    }
    if (out.records.empty())
        fail(ErrorCode::NoWindows, "no complete decision window of " + std::to_string(win) + " samples fits the trial");
    return out;
}

namespace detail {

inline double log_binomial_pmf_half(std::int64_t n, std::int64_t k)
{
    return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0)
           - std::lgamma(static_cast<double>(n - k) + 1.0) - static_cast<double>(n) * std::log(2.0);
}

} // namespace detail

/// Smallest k with P(X <= k) >= 1 - alpha for X ~ Binomial(n, 0.5).
inline std::int64_t binomial_critical_count(std::int64_t n, double alpha = 0.05)
{
    if (n < 1)
        fail(ErrorCode::InvalidArgument, "significance threshold needs at least one decision");
    if (!(alpha > 0.0 && alpha < 1.0))
        fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
    const double target = 1.0 - alpha;
    // Accumulate the CDF in log space: log(sum) updated via log-add-exp.
    const double log_target = std::log(target);
    double log_cdf = -INFINITY;
    for (std::int64_t k = 0; k <= n; ++k) {
        const double lp = detail::log_binomial_pmf_half(n, k);
        const double hi = std::max(log_cdf, lp);
        log_cdf = hi + std::log1p(std::exp(std::min(log_cdf, lp) - hi));
        if (log_cdf >= log_target)
            return k;
    }
    return n;
}

/// Accuracy threshold k*/n for significance at level alpha with n decisions.
inline double significance_threshold(std::int64_t n_decisions, double alpha = 0.05)
{
    return static_cast<double>(binomial_critical_count(n_decisions, alpha)) / static_cast<double>(n_decisions);
}

} // namespace aad
