#include "test_util.hpp"

#include "aad/decision.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace aad;

TEST(Pearson, Examples)
{
    std::mt19937_64 rng(1);
    const Vector x = testutil::randn(50, rng);
    EXPECT_NEAR(pearson(x, x), 1.0, 1e-15);
    EXPECT_NEAR(pearson(x, -x), -1.0, 1e-15);
    Vector a(4), b(4);
    a << 1, 2, 3, 4;
    b << 2, 4, 5, 4;
    EXPECT_NEAR(pearson(a, b), oracle::pearson({1, 2, 3, 4}, {2, 4, 5, 4}), 1e-12);
    EXPECT_NEAR(pearson(a, b), 3.5 / std::sqrt(5.0 * 4.75), 1e-12);
    EXPECT_THROW(pearson(a, Vector::Constant(4, 1.0)), Error);
    EXPECT_THROW(pearson(a, Vector::Zero(3)), Error);
}

TEST(Pearson, MatchesTextbookFormula)
{
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 100; ++rep) {
        const Vector a = testutil::randn(30, rng);
        const Vector b = testutil::randn(30, rng);
        EXPECT_NEAR(pearson(a, b), oracle::pearson(testutil::to_std(a), testutil::to_std(b)), 1e-12);
    }
}

TEST(DecideWindow, Examples)
{
    std::mt19937_64 rng(3);
    const Vector s1 = testutil::randn(100, rng);
    const Vector s2 = testutil::randn(100, rng);
    EXPECT_EQ(decide_window(s1, s1, s2).decided, 1);
    EXPECT_EQ(decide_window(s2, s1, s2).decided, 2);
    const auto tie = decide_window(s1, s2, s2, 2);
    EXPECT_TRUE(tie.tie);
    EXPECT_EQ(tie.decided, 1);
    EXPECT_FALSE(tie.correct);
    const auto flat = decide_window(Vector::Zero(100), s1, s2);
    EXPECT_FALSE(flat.decidable);
}

TEST(DecideWindow, AffineInvariance)
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> scale(0.01, 100.0), shift(-50.0, 50.0);
    for (int rep = 0; rep < 200; ++rep) {
        const Vector s1 = testutil::randn(40, rng);
        const Vector s2 = testutil::randn(40, rng);
        const Vector sh = 0.3 * s1 + testutil::randn(40, rng);
        const int base = decide_window(sh, s1, s2).decided;
        const Vector sh2 = (scale(rng) * sh.array() + shift(rng)).matrix();
        const Vector s12 = (scale(rng) * s1.array() + shift(rng)).matrix();
        const Vector s22 = (scale(rng) * s2.array() + shift(rng)).matrix();
        EXPECT_EQ(decide_window(sh2, s12, s22).decided, base);
    }
}

TEST(Windows, CountsAndSwitchSplit)
{
    std::mt19937_64 rng(5);
    const Index n = 12000;
    const Vector s1 = testutil::randn(n, rng);
    const Vector s2 = testutil::randn(n, rng);
    DecisionWindowConfig cfg;
    const auto r = windowed_decisions(s1, s1, s2, AttentionLabels::constant(1, n), cfg, 20.0);
    EXPECT_EQ(r.records.size(), 10u);
    EXPECT_EQ(r.accuracy(), 1.0);

    const AttentionLabels sw({{0, 1}, {6000, 2}}, n);
    const Vector sa = select_attended(s1, s2, sw);
    const auto r2 = windowed_decisions(sa, s1, s2, sw, cfg, 20.0);
    ASSERT_EQ(r2.records.size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) {
        EXPECT_EQ(r2.records[i].truth, i < 5 ? 1 : 2);
        EXPECT_EQ(r2.records[i].length, 1200);
        EXPECT_EQ(r2.records[i].begin, static_cast<Index>(i) * 1200);
    }
    EXPECT_EQ(r2.accuracy(), 1.0);
}

TEST(Windows, PerfectReconstructionAtEveryLength)
{
    std::mt19937_64 rng(6);
    const Index n = 12000;
    const Vector s1 = testutil::randn(n, rng);
    const Vector s2 = testutil::randn(n, rng);
    const AttentionLabels sw({{0, 2}, {6000, 1}}, n);
    const Vector sa = select_attended(s1, s2, sw);
    for (double w : {1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 60.0}) {
        const auto r = windowed_decisions(sa, s1, s2, sw, {w, 0.0, true}, 20.0);
        EXPECT_EQ(r.accuracy(), 1.0) << w;
    }
}

TEST(Windows, PartitionCoversAllButFinalPartial)
{
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 30; ++rep) {
        const Index n = std::uniform_int_distribution<Index>(100, 3000)(rng);
        const Index sw_at = std::uniform_int_distribution<Index>(1, n - 1)(rng);
        const AttentionLabels labels({{0, 1}, {sw_at, 2}}, n);
        const Vector s = testutil::randn(n, rng);
        const Vector u = testutil::randn(n, rng);
        const double w = std::uniform_real_distribution<double>(0.5, 5.0)(rng);
        const DecisionWindowConfig cfg{w, 0.0, true};
        const Index win = cfg.window_samples(20.0);
        WindowedResult r;
        try {
            r = windowed_decisions(s, s, u, labels, cfg, 20.0);
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::NoWindows);
            EXPECT_TRUE(sw_at < win && n - sw_at < win);
            continue;
        }
        Index covered = 0;
        for (const auto& rec : r.records) {
            EXPECT_EQ(rec.length, win);
            EXPECT_EQ(labels.at(rec.begin), labels.at(rec.begin + rec.length - 1));
            covered += rec.length;
        }
        EXPECT_EQ(covered, (sw_at / win + (n - sw_at) / win) * win);
        const auto kept = windowed_decisions(s, s, u, labels, {w, 0.0, false}, 20.0);
        Index all = 0;
        for (const auto& rec : kept.records)
            all += rec.length;
        // A trailing remainder of a single sample cannot be correlated.
        const Index expected = sw_at - (sw_at % win == 1 ? 1 : 0) + (n - sw_at) - ((n - sw_at) % win == 1 ? 1 : 0);
        EXPECT_EQ(all, expected);
    }
}

TEST(Windows, NoiseReconstructionIsAtChance)
{
    std::mt19937_64 rng(8);
    const Index n = 200000;
    const Vector s1 = testutil::randn(n, rng);
    const Vector s2 = testutil::randn(n, rng);
    const Vector noise = testutil::randn(n, rng);
    const auto r = windowed_decisions(noise, s1, s2, AttentionLabels::constant(1, n), {1.0, 0.0, true}, 20.0);
    ASSERT_EQ(r.n_decidable, 10000);
    const auto [lo, hi] = oracle::binomial_band(r.n_decidable, 1, 100);
    EXPECT_GE(r.n_correct, lo);
    EXPECT_LE(r.n_correct, hi);
}

TEST(Windows, UndecidableExcluded)
{
    std::mt19937_64 rng(9);
    Vector sh = testutil::randn(400, rng);
    sh.segment(100, 100).setZero();
    const Vector s1 = testutil::randn(400, rng);
    const auto r = windowed_decisions(sh, s1, testutil::randn(400, rng), AttentionLabels::constant(1, 400),
                                      {5.0, 0.0, true}, 20.0);
    EXPECT_EQ(r.records.size(), 4u);
    EXPECT_EQ(r.n_undecidable, 1);
    EXPECT_EQ(r.n_decidable, 3);
}

TEST(Windows, OverlapAndValidation)
{
    std::mt19937_64 rng(10);
    const Vector s = testutil::randn(1000, rng);
    const auto r = windowed_decisions(s, s, testutil::randn(1000, rng), AttentionLabels::constant(1, 1000),
                                      {5.0, 0.5, true}, 20.0);
    EXPECT_EQ(r.records.size(), 19u);
    EXPECT_THROW(DecisionWindowConfig({0.05, 0.0, true}).validate(20.0), Error);
    EXPECT_THROW(DecisionWindowConfig({5.0, 1.0, true}).validate(20.0), Error);
}

TEST(Significance, Examples)
{
    EXPECT_EQ(significance_threshold(1), 1.0);
    EXPECT_EQ(binomial_critical_count(20), 14);
    EXPECT_DOUBLE_EQ(significance_threshold(20), 0.70);
    EXPECT_EQ(binomial_critical_count(80), 47);
    EXPECT_DOUBLE_EQ(significance_threshold(80), 0.5875);
    EXPECT_THROW(significance_threshold(0), Error);
    EXPECT_THROW(significance_threshold(10, 0.0), Error);
}

TEST(Significance, MatchesExactCdf)
{
    for (std::int64_t n = 1; n <= 300; ++n) {
        EXPECT_EQ(binomial_critical_count(n, 0.05), oracle::binomial_critical_count(n, 5, 100)) << n;
        EXPECT_EQ(binomial_critical_count(n, 0.01), oracle::binomial_critical_count(n, 1, 100)) << n;
    }
}

TEST(Significance, LargeSampleLimit)
{
    EXPECT_LT(significance_threshold(1000000), 0.502);
    EXPECT_GT(significance_threshold(1000000), 0.5);
}

TEST(Significance, BoundedByDecreasingNormalEnvelope)
{
    // The exact threshold is not monotone in n (e.g. 5 -> 0.8, 6 -> 0.833),
    // but it stays under 0.5 + z/(2 sqrt n) + 1/n, which decreases in n.
    EXPECT_LT(significance_threshold(5), significance_threshold(6));
    const double z = 1.6448536269514722;
    double prev = std::numeric_limits<double>::infinity();
    for (std::int64_t n = 1; n <= 2000; ++n) {
        const double nd = static_cast<double>(n);
        const double envelope = 0.5 + z / (2.0 * std::sqrt(nd)) + 1.0 / nd;
        EXPECT_LE(significance_threshold(n), envelope) << n;
        EXPECT_LT(envelope, prev);
        prev = envelope;
    }
}
