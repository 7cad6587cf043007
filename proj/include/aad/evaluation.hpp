#pragma once

#include "aad/dataset.hpp"
#include "aad/decision.hpp"
#include "aad/decoder.hpp"
#include "aad/error.hpp"
#include "aad/parallel.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace aad {

inline constexpr std::string_view tool_version = "1.0.0";

enum class Protocol { LotoPerCondition, LotoAllConditions, Loco, Loso, CrossDataset };

constexpr std::string_view to_string(Protocol p) noexcept
{
    switch (p) {
    case Protocol::LotoPerCondition: return "loto-per-condition";
    case Protocol::LotoAllConditions: return "loto";
    case Protocol::Loco: return "loco";
    case Protocol::Loso: return "loso";
    case Protocol::CrossDataset: return "cross-dataset";
    }
    return "unknown";
}

inline Protocol parse_protocol(std::string_view name)
{
    for (auto p : {Protocol::LotoPerCondition, Protocol::LotoAllConditions, Protocol::Loco, Protocol::Loso,
                   Protocol::CrossDataset})
        if (to_string(p) == name)
            return p;
    fail(ErrorCode::Config, "unknown protocol '" + std::string(name) + "'");
}

struct TrialRef {
    std::size_t subject = 0;
    std::size_t trial = 0;
    friend auto operator<=>(const TrialRef&, const TrialRef&) = default;
};

struct Fold {
    std::vector<TrialRef> train;
    std::vector<TrialRef> test;
    std::string subject_id;
    std::optional<Condition> condition; // held-out / scoped condition where applicable
};

struct SkippedCell {
    std::string subject_id;
    std::optional<Condition> condition;
    std::string reason;
};

struct FoldPlan {
    Protocol protocol = Protocol::LotoAllConditions;
    std::vector<Fold> folds;
    std::vector<SkippedCell> skipped;
};

namespace detail {

inline std::vector<TrialRef> subject_refs(const Dataset& ds, std::size_t s)
{
    std::vector<TrialRef> refs;
    for (std::size_t t = 0; t < ds.subjects[s].trials.size(); ++t)
        refs.push_back({s, t});
    return refs;
}

inline std::vector<Condition> conditions_present(const Dataset& ds, std::size_t s)
{
    std::vector<Condition> out;
    auto add = [&](Condition c) {
        if (std::find(out.begin(), out.end(), c) == out.end())
            out.push_back(c);
    };
    for (auto c : ds.layout.conditions)
        for (const auto& t : ds.subjects[s].trials)
            if (t.condition == c)
                add(c);
    for (const auto& t : ds.subjects[s].trials)
        add(t.condition);
    return out;
}

} // namespace detail

/// Deterministic fold enumeration for a within-dataset protocol. Cells that
/// cannot support the protocol are skipped and listed, not errors, unless no
/// fold remains at all.
inline FoldPlan plan_folds(const Dataset& ds, Protocol protocol)
{
    FoldPlan plan;
    plan.protocol = protocol;
    switch (protocol) {
    case Protocol::LotoPerCondition:
        for (std::size_t s = 0; s < ds.subjects.size(); ++s) {
            const auto& subj = ds.subjects[s];
            auto conds = ds.layout.conditions;
            for (auto c : detail::conditions_present(ds, s))
                if (std::find(conds.begin(), conds.end(), c) == conds.end())
                    conds.push_back(c);
            for (auto c : conds) {
                std::vector<TrialRef> cell;
                for (std::size_t t = 0; t < subj.trials.size(); ++t)
                    if (subj.trials[t].condition == c)
                        cell.push_back({s, t});
                if (cell.size() < 2) {
                    plan.skipped.push_back({subj.id, c, "needs >= 2 trials, found " + std::to_string(cell.size())});
                    continue;
                }
                for (std::size_t i = 0; i < cell.size(); ++i) {
                    Fold f{{}, {cell[i]}, subj.id, c};
                    for (std::size_t j = 0; j < cell.size(); ++j)
                        if (j != i)
                            f.train.push_back(cell[j]);
                    plan.folds.push_back(std::move(f));
                }
            }
        }
        break;
    case Protocol::LotoAllConditions:
        for (std::size_t s = 0; s < ds.subjects.size(); ++s) {
            const auto refs = detail::subject_refs(ds, s);
            if (refs.size() < 2) {
                plan.skipped.push_back({ds.subjects[s].id, std::nullopt, "needs >= 2 trials"});
                continue;
            }
            for (std::size_t i = 0; i < refs.size(); ++i) {
                Fold f{{}, {refs[i]}, ds.subjects[s].id, std::nullopt};
                for (std::size_t j = 0; j < refs.size(); ++j)
                    if (j != i)
                        f.train.push_back(refs[j]);
                plan.folds.push_back(std::move(f));
            }
        }
        break;
    case Protocol::Loco:
        for (std::size_t s = 0; s < ds.subjects.size(); ++s) {
            const auto& subj = ds.subjects[s];
            const auto conds = detail::conditions_present(ds, s);
            if (conds.size() < 2) {
                plan.skipped.push_back({subj.id, std::nullopt, "needs >= 2 conditions"});
                continue;
            }
            for (auto c : conds) {
                Fold f{{}, {}, subj.id, c};
                for (std::size_t t = 0; t < subj.trials.size(); ++t)
                    (subj.trials[t].condition == c ? f.test : f.train).push_back({s, t});
                plan.folds.push_back(std::move(f));
            }
        }
        break;
    case Protocol::Loso: {
        std::vector<std::size_t> with_data;
        for (std::size_t s = 0; s < ds.subjects.size(); ++s) {
            if (ds.subjects[s].trials.empty())
                plan.skipped.push_back({ds.subjects[s].id, std::nullopt, "no trials"});
            else
                with_data.push_back(s);
        }
        if (with_data.size() < 2)
            fail(ErrorCode::Plan, "LOSO needs at least two subjects with data");
        for (auto s : with_data) {
            Fold f{{}, detail::subject_refs(ds, s), ds.subjects[s].id, std::nullopt};
            for (auto o : with_data)
                if (o != s)
                    for (const auto& r : detail::subject_refs(ds, o))
                        f.train.push_back(r);
            plan.folds.push_back(std::move(f));
        }
        break;
    }
    case Protocol::CrossDataset:
        fail(ErrorCode::Plan, "cross-dataset evaluation takes separate train and test datasets");
    }
    if (plan.folds.empty())
        fail(ErrorCode::Plan, "protocol " + std::string(to_string(protocol)) + " yields no folds for dataset '" + ds.name + "'");
    return plan;
}

// ---------------------------------------------------------------------------
// Decoder configuration and training
// ---------------------------------------------------------------------------

enum class ShrinkageMode { LedoitWolf, LedoitWolfTrialMean, Fixed, None };

constexpr std::string_view to_string(ShrinkageMode m) noexcept
{
    switch (m) {
    case ShrinkageMode::LedoitWolf: return "lw";
    case ShrinkageMode::LedoitWolfTrialMean: return "lw-trial-mean";
    case ShrinkageMode::Fixed: return "fixed";
    case ShrinkageMode::None: return "none";
    }
    return "unknown";
}

inline ShrinkageMode parse_shrinkage(std::string_view name)
{
    for (auto m : {ShrinkageMode::LedoitWolf, ShrinkageMode::LedoitWolfTrialMean, ShrinkageMode::Fixed, ShrinkageMode::None})
        if (to_string(m) == name)
            return m;
    fail(ErrorCode::Config, "unknown shrinkage mode '" + std::string(name) + "'");
}

struct DecoderConfig {
    double lag_min_ms = 0.0;
    double lag_max_ms = 400.0;
    ShrinkageMode shrinkage = ShrinkageMode::LedoitWolf;
    double fixed_lambda = 0.0;
};

/// Per-trial sufficient statistics (per-trial zero padding, never across trials).
inline DecoderStatistics trial_statistics(const Trial& trial, const LagRange& lags)
{
    const auto X = build_lag_matrix(trial.eeg, lags.count, lags.first);
    return accumulate_statistics(X, select_attended(trial.envelope1, trial.envelope2, trial.labels));
}

inline double choose_lambda(const DecoderStatistics& pooled, const DecoderConfig& cfg)
{
    switch (cfg.shrinkage) {
    case ShrinkageMode::LedoitWolf: return ledoit_wolf_intensity(pooled);
    case ShrinkageMode::LedoitWolfTrialMean: {
        if (pooled.per_trial_lambda.empty())
            return ledoit_wolf_intensity(pooled);
        double sum = 0.0;
        for (double l : pooled.per_trial_lambda)
            sum += l;
        return sum / static_cast<double>(pooled.per_trial_lambda.size());
    }
    case ShrinkageMode::Fixed:
        if (!(cfg.fixed_lambda >= 0.0 && cfg.fixed_lambda <= 1.0))
            fail(ErrorCode::Config, "fixed shrinkage must lie in [0, 1]");
        return cfg.fixed_lambda;
    case ShrinkageMode::None: return 0.0;
    }
    return 0.0;
}

inline DecoderModel train_from_statistics(const DecoderStatistics& pooled, const DecoderConfig& cfg, Index n_channels,
                                          const LagRange& lags, double fs)
{
    auto model = solve_decoder(pooled, choose_lambda(pooled, cfg));
    model.n_channels = n_channels;
    model.n_lags = lags.count;
    model.first_lag = lags.first;
    model.fs = fs;
    model.lag_min_ms = cfg.lag_min_ms;
    model.lag_max_ms = cfg.lag_max_ms;
    return model;
}

/// Train one decoder on a set of trials (pooled statistics, one lambda).
inline DecoderModel train_decoder(std::span<const Trial* const> trials, const DecoderConfig& cfg)
{
    if (trials.empty())
        fail(ErrorCode::Plan, "no training trials");
    const double fs = trials.front()->fs();
    const Index C = trials.front()->eeg.n_channels();
    const auto lags = lags_from_ms(cfg.lag_min_ms, cfg.lag_max_ms, fs);
    DecoderStatistics pooled;
    for (const Trial* t : trials) {
        if (t->fs() != fs || t->eeg.n_channels() != C)
            fail(ErrorCode::Compatibility, "training trials differ in rate or channel count");
        pooled += trial_statistics(*t, lags);
    }
    return train_from_statistics(pooled, cfg, C, lags, fs);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct EvaluationConfig {
    std::vector<double> window_lengths{1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 60.0};
    double overlap = 0.0;
    bool drop_partial = true;
    double alpha = 0.05;
    DecoderConfig decoder{};
    unsigned jobs = 1;
    /// Test hook: sees each fold and exactly the trials pooled for training.
    std::function<void(const Fold&, std::span<const TrialRef>)> on_train_pool;
};

struct ScoredDecision {
    std::string subject_id;
    Condition condition = Condition::NoVisuals;
    std::string trial_id;
    std::size_t fold = 0;
    double window_len_s = 0.0;
    DecisionRecord record;
};

struct AccuracyCell {
    double accuracy = std::nan("");
    std::int64_t n_decisions = 0;
    std::int64_t n_correct = 0;
    std::optional<double> threshold; // absent for overlapping windows
};

struct FoldResult {
    std::size_t index = 0;
    std::string subject_id;
    std::optional<Condition> condition;
    std::vector<std::string> train_trials; // "subject/trial"
    std::vector<std::string> test_trials;
    double lambda = 0.0;
    Index train_samples = 0;
    std::map<double, AccuracyCell> per_window;
    std::int64_t n_undecidable = 0;
    bool flagged = false; // no decidable window at some length
};

struct GroupAccuracy {
    double mean_accuracy = std::nan("");
    std::size_t n_subjects = 0;
    std::int64_t n_decisions_per_subject = 0; // rounded mean
    std::optional<double> threshold;
};

struct EvaluationReport {
    Protocol protocol = Protocol::LotoAllConditions;
    std::string dataset_name;
    std::string train_dataset_name; // cross-dataset only
    nlohmann::json config;
    std::string config_hash;
    std::vector<FoldResult> folds;
    std::vector<ScoredDecision> decisions;
    std::vector<SkippedCell> skipped;
    std::size_t n_flagged_folds = 0;
    std::int64_t n_undecidable = 0;
    std::vector<double> window_lengths;
    // subject -> window length -> pooled accuracy
    std::map<std::string, std::map<double, AccuracyCell>> per_subject;
    // subject -> condition -> window length -> pooled accuracy
    std::map<std::string, std::map<Condition, std::map<double, AccuracyCell>>> per_subject_condition;
    // condition -> window length -> mean over subjects
    std::map<Condition, std::map<double, GroupAccuracy>> per_condition;
    // window length -> mean over subjects
    std::map<double, GroupAccuracy> overall;
    nlohmann::json provenance;
};

namespace detail {

inline std::string fnv1a_hex(std::string_view text)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string trial_key(const Dataset& ds, const TrialRef& r)
{
    return ds.subjects[r.subject].id + "/" + ds.subjects[r.subject].trials[r.trial].id;
}

inline void add_decision(AccuracyCell& cell, const DecisionRecord& rec)
{
    if (!rec.decidable)
        return;
    ++cell.n_decisions;
    cell.n_correct += rec.correct ? 1 : 0;
}

inline void finalize(AccuracyCell& cell, double alpha, bool independent)
{
    if (cell.n_decisions > 0) {
        cell.accuracy = static_cast<double>(cell.n_correct) / static_cast<double>(cell.n_decisions);
        if (independent)
            cell.threshold = significance_threshold(cell.n_decisions, alpha);
    }
}

inline GroupAccuracy mean_over(const std::vector<const AccuracyCell*>& cells, double alpha, bool independent)
{
    GroupAccuracy g;
    double sum = 0.0;
    double n_sum = 0.0;
    for (const auto* c : cells) {
        if (c->n_decisions == 0)
            continue;
        sum += c->accuracy;
        n_sum += static_cast<double>(c->n_decisions);
        ++g.n_subjects;
    }
    if (g.n_subjects > 0) {
        g.mean_accuracy = sum / static_cast<double>(g.n_subjects);
        g.n_decisions_per_subject = std::llround(n_sum / static_cast<double>(g.n_subjects));
        if (independent && g.n_decisions_per_subject > 0)
            g.threshold = significance_threshold(g.n_decisions_per_subject, alpha);
    }
    return g;
}

inline nlohmann::json config_to_json(const EvaluationConfig& cfg)
{
    return {{"window_lengths_s", cfg.window_lengths},
            {"overlap", cfg.overlap},
            {"drop_partial", cfg.drop_partial},
            {"alpha", cfg.alpha},
            {"decoder",
             {{"lags_ms", {cfg.decoder.lag_min_ms, cfg.decoder.lag_max_ms}},
              {"shrinkage", to_string(cfg.decoder.shrinkage)},
              {"fixed_lambda", cfg.decoder.fixed_lambda}}}};
}

/// Decide every test trial of one fold at every window length.
inline FoldResult evaluate_fold(const Dataset& test_ds, const Fold& fold, std::size_t index, const DecoderModel& model,
                                const EvaluationConfig& cfg, std::vector<ScoredDecision>& decisions)
{
    FoldResult fr;
    fr.index = index;
    fr.subject_id = fold.subject_id;
    fr.condition = fold.condition;
    fr.lambda = model.lambda;
    fr.train_samples = model.n_samples;
    const bool independent = cfg.overlap == 0.0;

    std::map<double, AccuracyCell> cells;
    for (const auto& ref : fold.test) {
        const Trial& trial = test_ds.subjects[ref.subject].trials[ref.trial];
        const Vector s_hat = reconstruct(model, trial.eeg.samples());
        for (double w : cfg.window_lengths) {
            const DecisionWindowConfig wcfg{w, cfg.overlap, cfg.drop_partial};
            WindowedResult res;
            try {
                res = windowed_decisions(s_hat, trial.envelope1, trial.envelope2, trial.labels, wcfg, trial.fs());
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NoWindows)
                    throw;
                fr.flagged = true;
                cells[w];
                continue;
            }
            fr.n_undecidable += res.n_undecidable;
            for (const auto& rec : res.records) {
                add_decision(cells[w], rec);
                decisions.push_back({test_ds.subjects[ref.subject].id, trial.condition, trial.id, index, w, rec});
            }
        }
    }
    for (auto& [w, cell] : cells) {
        finalize(cell, cfg.alpha, independent);
        if (cell.n_decisions == 0)
            fr.flagged = true;
    }
    fr.per_window = std::move(cells);
    return fr;
}

inline void aggregate(EvaluationReport& report, const EvaluationConfig& cfg)
{
    const bool independent = cfg.overlap == 0.0;
    std::set<std::size_t> flagged;
    for (const auto& f : report.folds)
        if (f.flagged)
            flagged.insert(f.index);
    report.n_flagged_folds = flagged.size();

    for (const auto& d : report.decisions) {
        if (flagged.count(d.fold))
            continue;
        add_decision(report.per_subject[d.subject_id][d.window_len_s], d.record);
        add_decision(report.per_subject_condition[d.subject_id][d.condition][d.window_len_s], d.record);
    }
    for (auto& [s, m] : report.per_subject)
        for (auto& [w, cell] : m)
            finalize(cell, cfg.alpha, independent);
    for (auto& [s, byc] : report.per_subject_condition)
        for (auto& [c, m] : byc)
            for (auto& [w, cell] : m)
                finalize(cell, cfg.alpha, independent);

    for (double w : report.window_lengths) {
        std::vector<const AccuracyCell*> subj_cells;
        for (const auto& [s, m] : report.per_subject)
            if (auto it = m.find(w); it != m.end())
                subj_cells.push_back(&it->second);
        report.overall[w] = mean_over(subj_cells, cfg.alpha, independent);

        std::map<Condition, std::vector<const AccuracyCell*>> by_cond;
        for (const auto& [s, byc] : report.per_subject_condition)
            for (const auto& [c, m] : byc)
                if (auto it = m.find(w); it != m.end())
                    by_cond[c].push_back(&it->second);
        for (const auto& [c, list] : by_cond)
            report.per_condition[c][w] = mean_over(list, cfg.alpha, independent);
    }
}

} // namespace detail

/// Run a within-dataset protocol: per fold, pool the training trials'
/// statistics, estimate lambda, solve, reconstruct the held-out trials,
/// split at attention switches and decide every window length.
inline EvaluationReport run_protocol(const Dataset& ds, Protocol protocol, const EvaluationConfig& cfg)
{
    if (cfg.window_lengths.empty())
        fail(ErrorCode::Config, "no decision window lengths requested");
    const FoldPlan plan = plan_folds(ds, protocol);

    // Every trial that is ever trained on gets its statistics computed once.
    std::vector<TrialRef> used;
    for (const auto& f : plan.folds)
        used.insert(used.end(), f.train.begin(), f.train.end());
    std::sort(used.begin(), used.end());
    used.erase(std::unique(used.begin(), used.end()), used.end());

    const Trial& first = ds.subjects[used.front().subject].trials[used.front().trial];
    const double fs = first.fs();
    const Index C = first.eeg.n_channels();
    for (std::size_t s = 0; s < ds.subjects.size(); ++s)
        for (const auto& t : ds.subjects[s].trials)
            if (t.fs() != fs || t.eeg.n_channels() != C)
                fail(ErrorCode::Compatibility, "trial '" + ds.subjects[s].id + "/" + t.id + "' differs in rate or channel count");
    const auto lags = lags_from_ms(cfg.decoder.lag_min_ms, cfg.decoder.lag_max_ms, fs);

    std::vector<DecoderStatistics> stats(used.size());
    parallel_for(used.size(), cfg.jobs, [&](std::size_t i) {
        stats[i] = trial_statistics(ds.subjects[used[i].subject].trials[used[i].trial], lags);
    });
    auto stats_of = [&](const TrialRef& r) -> const DecoderStatistics& {
        return stats[static_cast<std::size_t>(std::lower_bound(used.begin(), used.end(), r) - used.begin())];
    };

    std::vector<FoldResult> results(plan.folds.size());
    std::vector<std::vector<ScoredDecision>> fold_decisions(plan.folds.size());
    parallel_for(plan.folds.size(), cfg.jobs, [&](std::size_t i) {
        const Fold& fold = plan.folds[i];
        if (cfg.on_train_pool)
            cfg.on_train_pool(fold, fold.train);
        DecoderStatistics pooled;
        for (const auto& r : fold.train)
            pooled += stats_of(r);
        try {
            const auto model = train_from_statistics(pooled, cfg.decoder, C, lags, fs);
            results[i] = detail::evaluate_fold(ds, fold, i, model, cfg, fold_decisions[i]);
        } catch (const Error& e) {
            throw Error(e.code(), "fold " + std::to_string(i) + " (subject " + fold.subject_id + "): " + e.what());
        }
        for (const auto& r : fold.train)
            results[i].train_trials.push_back(detail::trial_key(ds, r));
        for (const auto& r : fold.test)
            results[i].test_trials.push_back(detail::trial_key(ds, r));
    });

    EvaluationReport report;
    report.protocol = protocol;
    report.dataset_name = ds.name;
    report.config = detail::config_to_json(cfg);
    report.config["protocol"] = to_string(protocol);
    report.config_hash = detail::fnv1a_hex(report.config.dump());
    report.window_lengths = cfg.window_lengths;
    report.skipped = plan.skipped;
    report.provenance = {{"dataset", ds.name}, {"dataset_provenance", ds.provenance}, {"tool_version", tool_version}};
    report.folds = std::move(results);
    for (auto& fd : fold_decisions)
        for (auto& d : fd)
            report.decisions.push_back(std::move(d));
    for (const auto& f : report.folds)
        report.n_undecidable += f.n_undecidable;
    detail::aggregate(report, cfg);
    return report;
}

/// Train one decoder on every trial of `train`, then evaluate it on every
/// subject of `test` (one fold per test subject).
inline EvaluationReport cross_dataset(const Dataset& train, const Dataset& test, const EvaluationConfig& cfg)
{
    if (cfg.window_lengths.empty())
        fail(ErrorCode::Config, "no decision window lengths requested");
    std::vector<const Trial*> train_trials;
    for (const auto& s : train.subjects)
        for (const auto& t : s.trials)
            train_trials.push_back(&t);
    if (train_trials.empty())
        fail(ErrorCode::Plan, "training dataset '" + train.name + "' has no trials");
    const double fs = train_trials.front()->fs();
    const Index C = train_trials.front()->eeg.n_channels();
    for (const auto& s : test.subjects)
        for (const auto& t : s.trials)
            if (t.fs() != fs || t.eeg.n_channels() != C)
                fail(ErrorCode::Compatibility,
                     "test trial '" + s.id + "/" + t.id + "' has " + std::to_string(t.eeg.n_channels()) + " channels at "
                         + std::to_string(t.fs()) + " Hz; training data has " + std::to_string(C) + " at "
                         + std::to_string(fs) + " Hz");

    const auto model = train_decoder(train_trials, cfg.decoder);

    std::vector<Fold> folds;
    std::vector<SkippedCell> skipped;
    for (std::size_t s = 0; s < test.subjects.size(); ++s) {
        if (test.subjects[s].trials.empty()) {
            skipped.push_back({test.subjects[s].id, std::nullopt, "no trials"});
            continue;
        }
        folds.push_back({{}, detail::subject_refs(test, s), test.subjects[s].id, std::nullopt});
    }
    if (folds.empty())
        fail(ErrorCode::Plan, "test dataset '" + test.name + "' has no trials");

    std::vector<FoldResult> results(folds.size());
    std::vector<std::vector<ScoredDecision>> fold_decisions(folds.size());
    parallel_for(folds.size(), cfg.jobs, [&](std::size_t i) {
        if (cfg.on_train_pool)
            cfg.on_train_pool(folds[i], {});
        results[i] = detail::evaluate_fold(test, folds[i], i, model, cfg, fold_decisions[i]);
        results[i].train_trials = {"dataset:" + train.name};
        for (const auto& r : folds[i].test)
            results[i].test_trials.push_back(detail::trial_key(test, r));
    });

    EvaluationReport report;
    report.protocol = Protocol::CrossDataset;
    report.dataset_name = test.name;
    report.train_dataset_name = train.name;
    report.config = detail::config_to_json(cfg);
    report.config["protocol"] = to_string(Protocol::CrossDataset);
    report.config_hash = detail::fnv1a_hex(report.config.dump());
    report.window_lengths = cfg.window_lengths;
    report.skipped = std::move(skipped);
    report.provenance = {{"dataset", test.name},
                         {"train_dataset", train.name},
                         {"dataset_provenance", test.provenance},
                         {"train_dataset_provenance", train.provenance},
                         {"tool_version", tool_version}};
    report.folds = std::move(results);
    for (auto& fd : fold_decisions)
        for (auto& d : fd)
            report.decisions.push_back(std::move(d));
    for (const auto& f : report.folds)
        report.n_undecidable += f.n_undecidable;
    detail::aggregate(report, cfg);
    return report;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v)
{
    if (std::isnan(v))
        return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string window_key(double w) { return fmt_double(w); }

inline nlohmann::json cell_json(const AccuracyCell& c)
{
    nlohmann::json j{{"n_decisions", c.n_decisions}, {"n_correct", c.n_correct}};
    j["accuracy"] = std::isnan(c.accuracy) ? nlohmann::json(nullptr) : nlohmann::json(c.accuracy);
    j["threshold"] = c.threshold ? nlohmann::json(*c.threshold) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json group_json(const GroupAccuracy& g)
{
    nlohmann::json j{{"n_subjects", g.n_subjects}, {"n_decisions_per_subject", g.n_decisions_per_subject}};
    j["mean_accuracy"] = std::isnan(g.mean_accuracy) ? nlohmann::json(nullptr) : nlohmann::json(g.mean_accuracy);
    j["threshold"] = g.threshold ? nlohmann::json(*g.threshold) : nlohmann::json(nullptr);
    return j;
}

} // namespace detail

inline nlohmann::json report_to_json(const EvaluationReport& r)
{
    nlohmann::json j;
    j["protocol"] = to_string(r.protocol);
    j["dataset"] = r.dataset_name;
    if (!r.train_dataset_name.empty())
        j["train_dataset"] = r.train_dataset_name;
    j["config"] = r.config;
    j["config_hash"] = r.config_hash;
    j["provenance"] = r.provenance;
    j["window_lengths_s"] = r.window_lengths;
    j["n_flagged_folds"] = r.n_flagged_folds;
    j["n_undecidable_windows"] = r.n_undecidable;

    auto folds = nlohmann::json::array();
    for (const auto& f : r.folds) {
        nlohmann::json jf{{"index", f.index},
                          {"subject", f.subject_id},
                          {"train", f.train_trials},
                          {"test", f.test_trials},
                          {"lambda", f.lambda},
                          {"train_samples", f.train_samples},
                          {"n_undecidable", f.n_undecidable},
                          {"flagged", f.flagged}};
        jf["condition"] = f.condition ? nlohmann::json(to_string(*f.condition)) : nlohmann::json(nullptr);
        nlohmann::json pw = nlohmann::json::object();
        for (const auto& [w, c] : f.per_window)
            pw[detail::window_key(w)] = detail::cell_json(c);
        jf["accuracy"] = std::move(pw);
        folds.push_back(std::move(jf));
    }
    j["folds"] = std::move(folds);

    nlohmann::json subj = nlohmann::json::object();
    for (const auto& [s, m] : r.per_subject)
        for (const auto& [w, c] : m)
            subj[s][detail::window_key(w)] = detail::cell_json(c);
    j["per_subject"] = std::move(subj);

    nlohmann::json subj_cond = nlohmann::json::object();
    for (const auto& [s, byc] : r.per_subject_condition)
        for (const auto& [c, m] : byc)
            for (const auto& [w, cell] : m)
                subj_cond[s][std::string(to_string(c))][detail::window_key(w)] = detail::cell_json(cell);
    j["per_subject_condition"] = std::move(subj_cond);

    nlohmann::json cond = nlohmann::json::object();
    for (const auto& [c, m] : r.per_condition)
        for (const auto& [w, g] : m)
            cond[std::string(to_string(c))][detail::window_key(w)] = detail::group_json(g);
    j["per_condition"] = std::move(cond);

    nlohmann::json overall = nlohmann::json::object();
    for (const auto& [w, g] : r.overall)
        overall[detail::window_key(w)] = detail::group_json(g);
    j["overall"] = std::move(overall);

    auto skipped = nlohmann::json::array();
    for (const auto& s : r.skipped) {
        nlohmann::json js{{"subject", s.subject_id}, {"reason", s.reason}};
        js["condition"] = s.condition ? nlohmann::json(to_string(*s.condition)) : nlohmann::json(nullptr);
        skipped.push_back(std::move(js));
    }
    j["skipped"] = std::move(skipped);
    return j;
}

/// One row per decision window.
inline void write_decisions_csv(const EvaluationReport& r, std::ostream& out)
{
    out << "subject,condition,trial,fold,window_index,window_len_s,rho1,rho2,decided,truth,correct,tie\n";
    for (const auto& d : r.decisions) {
        const auto& rec = d.record;
        out << d.subject_id << ',' << to_string(d.condition) << ',' << d.trial_id << ',' << d.fold << ','
            << rec.window_index << ',' << detail::fmt_double(d.window_len_s) << ',' << detail::fmt_double(rec.rho1) << ','
            << detail::fmt_double(rec.rho2) << ',' << (rec.decidable ? rec.decided : 0) << ',' << rec.truth << ','
            << (rec.correct ? 1 : 0) << ',' << (rec.tie ? 1 : 0) << '\n';
    }
}

/// Per-subject accuracy vs window length (plot-ready).
inline void write_subject_figure_csv(const EvaluationReport& r, std::ostream& out)
{
    out << "subject,window_len_s,accuracy,n_decisions,threshold\n";
    for (const auto& [s, m] : r.per_subject)
        for (const auto& [w, c] : m)
            out << s << ',' << detail::fmt_double(w) << ',' << detail::fmt_double(c.accuracy) << ',' << c.n_decisions << ','
                << (c.threshold ? detail::fmt_double(*c.threshold) : "") << '\n';
}

/// Per-subject, per-condition accuracy vs window length.
inline void write_condition_figure_csv(const EvaluationReport& r, std::ostream& out)
{
    out << "subject,condition,window_len_s,accuracy,n_decisions,threshold\n";
    for (const auto& [s, byc] : r.per_subject_condition)
        for (const auto& [c, m] : byc)
            for (const auto& [w, cell] : m)
                out << s << ',' << to_string(c) << ',' << detail::fmt_double(w) << ',' << detail::fmt_double(cell.accuracy)
                    << ',' << cell.n_decisions << ',' << (cell.threshold ? detail::fmt_double(*cell.threshold) : "")
                    << '\n';
}

/// Mean over subjects vs window length, overall and per condition.
inline void write_mean_figure_csv(const EvaluationReport& r, std::ostream& out)
{
    out << "group,window_len_s,mean_accuracy,n_subjects,n_decisions_per_subject,threshold\n";
    auto row = [&](std::string_view group, double w, const GroupAccuracy& g) {
        out << group << ',' << detail::fmt_double(w) << ',' << detail::fmt_double(g.mean_accuracy) << ',' << g.n_subjects
            << ',' << g.n_decisions_per_subject << ',' << (g.threshold ? detail::fmt_double(*g.threshold) : "") << '\n';
    };
    for (const auto& [w, g] : r.overall)
        row("all", w, g);
    for (const auto& [c, m] : r.per_condition)
        for (const auto& [w, g] : m)
            row(to_string(c), w, g);
}

/// Write report.json, decisions.csv and the figure-data CSVs into `dir`.
inline void export_report(const EvaluationReport& r, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        fail(ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());
    auto open = [&](const char* name) {
        std::ofstream out(dir / name, std::ios::trunc);
        if (!out)
            fail(ErrorCode::Io, "cannot write '" + (dir / name).string() + "'");
        return out;
    };
    {
        auto out = open("report.json");
        out << report_to_json(r).dump(2) << '\n';
    }
    {
        auto out = open("decisions.csv");
        write_decisions_csv(r, out);
    }
    {
        auto out = open("figure_subject_accuracy.csv");
        write_subject_figure_csv(r, out);
    }
    {
        auto out = open("figure_condition_accuracy.csv");
        write_condition_figure_csv(r, out);
    }
    {
        auto out = open("figure_mean_accuracy.csv");
        write_mean_figure_csv(r, out);
    }
}

} // namespace aad
