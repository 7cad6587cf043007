#pragma once

#include "aad/dataset.hpp"
#include "aad/decoder.hpp"
#include "aad/envelope.hpp"
#include "aad/iir.hpp"
#include "aad/signal.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace aad {

/// Parameters of the synthetic forward-model dataset.
///
/// EEG channel c = sum_l h_c(l) s_a(t - l) + leak * sum_l g_c(l) s_u(t - l) + noise,
/// with s_a the attended envelope (switching at the trial midpoint) and s_u
/// the other one. Kernels are causal, `kernel_ms` long. Each subject's
/// kernels mix a population kernel (drawn from `population_seed`) with a
/// subject-specific one, so datasets sharing `population_seed` come from
/// the same forward-model family.
struct SyntheticConfig {
    std::string name = "synthetic";
    int n_subjects = 2;
    std::vector<Condition> conditions{all_conditions.begin(), all_conditions.end()};
    int trials_per_condition = 2;
    double duration_s = 600.0;
    double fs = 20.0;
    int n_channels = 16;
    double kernel_ms = 400.0;
    double envelope_low_hz = 1.0;
    double envelope_high_hz = 9.0;
    double envelope_exponent = 0.6;
    double snr_db = 0.0;                 // +inf: no noise
    double unattended_leak_db = -6.0;    // -inf: no unattended contribution
    double subject_variability = 0.5;    // 0: all subjects share the population kernels
    std::uint64_t seed = 1;
    std::uint64_t population_seed = 0x5eed;
    /// Cells to leave out, emulating missing recordings.
    std::vector<MissingCell> drop_cells;

    void validate() const
    {
        if (n_subjects < 1)
            fail(ErrorCode::Config, "synthetic dataset needs at least one subject");
        if (conditions.empty() || trials_per_condition < 1)
            fail(ErrorCode::Config, "synthetic dataset needs at least one condition and trial");
        if (!(fs > 0.0) || !(duration_s > 0.0) || n_channels < 1)
            fail(ErrorCode::Config, "synthetic duration, rate and channel count must be positive");
        if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
            fail(ErrorCode::Config, "snr_db must be finite or +inf");
        if (std::isnan(unattended_leak_db) || unattended_leak_db == std::numeric_limits<double>::infinity())
            fail(ErrorCode::Config, "unattended_leak_db must be finite or -inf");
        if (!(subject_variability >= 0.0 && subject_variability <= 1.0))
            fail(ErrorCode::Config, "subject_variability must lie in [0, 1]");
        if (!(kernel_ms >= 0.0))
            fail(ErrorCode::Config, "kernel length must be non-negative");
        if (static_cast<Index>(std::llround(duration_s * fs)) < 4)
            fail(ErrorCode::Config, "synthetic trials must span at least four samples");
    }

    [[nodiscard]] Index n_samples() const { return static_cast<Index>(std::llround(duration_s * fs)); }
    [[nodiscard]] Index kernel_length() const { return lags_from_ms(0.0, kernel_ms, fs).count; }
};

/// Causal multichannel FIR forward model: out(t, c) = sum_l kernels(l, c) s(t - l),
/// with s taken as zero before t = 0.
inline Matrix apply_forward_model(const Matrix& kernels, const Eigen::Ref<const Vector>& s)
{
    const Index T = s.size();
    Matrix out = Matrix::Zero(T, kernels.cols());
    for (Index c = 0; c < kernels.cols(); ++c)
        for (Index l = 0; l < kernels.rows() && l < T; ++l)
            out.col(c).tail(T - l) += kernels(l, c) * s.head(T - l);
    return out;
}

namespace detail {

inline std::mt19937_64 seeded_rng(std::initializer_list<std::uint64_t> parts)
{
    std::vector<std::uint32_t> words;
    for (auto p : parts) {
        words.push_back(static_cast<std::uint32_t>(p & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(p >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

/// Random kernels (L x C) with a smooth onset/offset taper, each column unit norm.
inline Matrix random_kernels(Index length, Index channels, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix k(length, channels);
    for (Index c = 0; c < channels; ++c) {
        for (Index l = 0; l < length; ++l) {
            const double taper = std::sin(std::numbers::pi * (static_cast<double>(l) + 0.5) / static_cast<double>(length));
            k(l, c) = normal(rng) * taper;
        }
        const double n = k.col(c).norm();
        if (n > 0.0)
            k.col(c) /= n;
    }
    return k;
}

inline Matrix mix_kernels(const Matrix& population, const Matrix& individual, double variability)
{
    Matrix k = std::sqrt(1.0 - variability) * population + std::sqrt(variability) * individual;
    for (Index c = 0; c < k.cols(); ++c) {
        const double n = k.col(c).norm();
        if (n > 0.0)
            k.col(c) /= n;
    }
    return k;
}

/// Gaussian noise, bandpassed, rectified and powerlaw-compressed.
inline Vector synthetic_envelope(Index n, const SyntheticConfig& cfg, const IIRFilterSpec& band, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector noise(n);
    for (Index t = 0; t < n; ++t)
        noise(t) = normal(rng);
    const auto filtered = filtfilt(band, MultichannelSignal::from_vector(noise, cfg.fs));
    return filtered.channel(0).array().abs().pow(cfg.envelope_exponent).matrix();
}

} // namespace detail

/// Forward kernels of one subject: attended path h and unattended path g.
struct SubjectKernels {
    Matrix attended;
    Matrix unattended;
};

inline SubjectKernels synthetic_subject_kernels(const SyntheticConfig& cfg, int subject)
{
    const Index L = cfg.kernel_length();
    auto pop_rng = detail::seeded_rng({cfg.population_seed, 0x706f70u});
    const Matrix pop_h = detail::random_kernels(L, cfg.n_channels, pop_rng);
    const Matrix pop_g = detail::random_kernels(L, cfg.n_channels, pop_rng);
    auto rng = detail::seeded_rng({cfg.seed, static_cast<std::uint64_t>(subject), 0x6b65726eu});
    const Matrix own_h = detail::random_kernels(L, cfg.n_channels, rng);
    const Matrix own_g = detail::random_kernels(L, cfg.n_channels, rng);
    return {detail::mix_kernels(pop_h, own_h, cfg.subject_variability),
            detail::mix_kernels(pop_g, own_g, cfg.subject_variability)};
}

/// Generate one trial. Envelopes are exactly z-scored over the stored range;
/// the forward model sees `L - 1` extra samples of history before t = 0.
inline Trial generate_synthetic_trial(const SyntheticConfig& cfg, const SubjectKernels& kernels, int subject,
                                      Condition condition, int trial_index)
{
    const Index T = cfg.n_samples();
    const Index L = kernels.attended.rows();
    const Index burn = L > 0 ? L - 1 : 0;
    const Index total = T + burn;

    auto rng = detail::seeded_rng({cfg.seed, static_cast<std::uint64_t>(subject),
                                   static_cast<std::uint64_t>(condition), static_cast<std::uint64_t>(trial_index)});
    const auto band = design_butterworth_bandpass(4, cfg.envelope_low_hz, cfg.envelope_high_hz, cfg.fs);

    std::array<Vector, 2> env{detail::synthetic_envelope(total, cfg, band, rng),
                              detail::synthetic_envelope(total, cfg, band, rng)};
    for (auto& e : env) {
        const auto [mean, sd] = detail::mean_and_sample_std(e.tail(T));
        e = (e.array() - mean) / sd;
    }

    const int initial = std::uniform_int_distribution<int>(1, 2)(rng);
    const Index switch_at = T / 2;
    const int other = 3 - initial;
    Vector attended(total), unattended(total);
    for (Index t = 0; t < total; ++t) {
        const int label = (t - burn) < switch_at ? initial : other;
        attended(t) = env[static_cast<std::size_t>(label - 1)](t);
        unattended(t) = env[static_cast<std::size_t>(2 - label)](t);
    }

    Matrix driven = apply_forward_model(kernels.attended, attended);
    Matrix eeg = driven;
    if (std::isfinite(cfg.unattended_leak_db))
        eeg += std::pow(10.0, cfg.unattended_leak_db / 20.0) * apply_forward_model(kernels.unattended, unattended);
    if (std::isfinite(cfg.snr_db)) {
        std::normal_distribution<double> normal(0.0, 1.0);
        const double ratio = std::pow(10.0, cfg.snr_db / 10.0);
        for (Index c = 0; c < eeg.cols(); ++c) {
            const double power = driven.col(c).tail(T).squaredNorm() / static_cast<double>(T);
            const double sd = std::sqrt(power / ratio);
            for (Index t = 0; t < total; ++t)
                eeg(t, c) += sd * normal(rng);
        }
    }
    Matrix stored = eeg.bottomRows(T);
    // Unit-variance channels; no centering, so the model stays exactly linear.
    for (Index c = 0; c < stored.cols(); ++c) {
        const double sd = detail::mean_and_sample_std(stored.col(c)).second;
        if (sd > 0.0)
            stored.col(c) /= sd;
    }

    Trial trial;
    trial.id = std::string(to_string(condition)) + "_" + std::to_string(trial_index);
    trial.condition = condition;
    trial.trial_index = trial_index;
    trial.eeg = MultichannelSignal(std::move(stored), cfg.fs);
    trial.envelope1 = env[0].tail(T);
    trial.envelope2 = env[1].tail(T);
    trial.labels = AttentionLabels(switch_at > 0 ? std::vector<AttentionLabels::Run>{{0, initial}, {switch_at, other}}
                                                 : std::vector<AttentionLabels::Run>{{0, initial}},
                                   T);
    trial.original_fs = cfg.fs;
    trial.preprocessing = "synthetic forward model";
    return trial;
}

inline nlohmann::json to_json(const SyntheticConfig& cfg)
{
    auto conds = nlohmann::json::array();
    for (auto c : cfg.conditions)
        conds.push_back(to_string(c));
    auto num = [](double v) -> nlohmann::json {
        if (std::isinf(v))
            return v > 0 ? "inf" : "-inf";
        return v;
    };
    return {{"name", cfg.name},
            {"n_subjects", cfg.n_subjects},
            {"conditions", conds},
            {"trials_per_condition", cfg.trials_per_condition},
            {"duration_s", cfg.duration_s},
            {"fs", cfg.fs},
            {"n_channels", cfg.n_channels},
            {"kernel_ms", cfg.kernel_ms},
            {"envelope_band_hz", {cfg.envelope_low_hz, cfg.envelope_high_hz}},
            {"envelope_exponent", cfg.envelope_exponent},
            {"snr_db", num(cfg.snr_db)},
            {"unattended_leak_db", num(cfg.unattended_leak_db)},
            {"subject_variability", cfg.subject_variability},
            {"seed", cfg.seed},
            {"population_seed", cfg.population_seed}};
}

inline std::string synthetic_subject_id(int subject)
{
    std::string n = std::to_string(subject + 1);
    return "S" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
}

/// Seed-deterministic synthetic dataset. Trials are generated in parallel
/// with per-trial derived seeds, so `jobs` does not affect the output.
inline Dataset generate_synthetic(const SyntheticConfig& cfg, unsigned jobs = 1)
{
    cfg.validate();
    Dataset ds;
    ds.name = cfg.name;
    ds.layout.conditions = cfg.conditions;
    ds.layout.trials_per_condition = cfg.trials_per_condition;
    ds.provenance = {{"generator", "synthetic"}, {"config", to_json(cfg)}};

    struct Cell {
        int subject;
        Condition condition;
        int trial_index;
    };
    std::vector<Cell> cells;
    for (int s = 0; s < cfg.n_subjects; ++s) {
        ds.subjects.push_back({synthetic_subject_id(s), {}});
        for (auto c : cfg.conditions)
            for (int k = 1; k <= cfg.trials_per_condition; ++k) {
                const MissingCell cell{ds.subjects.back().id, c, k};
                if (std::find(cfg.drop_cells.begin(), cfg.drop_cells.end(), cell) == cfg.drop_cells.end())
                    cells.push_back({s, c, k});
            }
    }

    std::vector<SubjectKernels> kernels(static_cast<std::size_t>(cfg.n_subjects));
    for (int s = 0; s < cfg.n_subjects; ++s)
        kernels[static_cast<std::size_t>(s)] = synthetic_subject_kernels(cfg, s);

    std::vector<Trial> trials(cells.size());
    parallel_for(cells.size(), jobs, [&](std::size_t i) {
        const auto& cell = cells[i];
        trials[i] = generate_synthetic_trial(cfg, kernels[static_cast<std::size_t>(cell.subject)], cell.subject,
                                             cell.condition, cell.trial_index);
    });
    for (std::size_t i = 0; i < cells.size(); ++i)
        ds.subjects[static_cast<std::size_t>(cells[i].subject)].trials.push_back(std::move(trials[i]));
    return ds;
}

} // namespace aad
