#pragma once

#include "aad/convert.hpp"
#include "aad/dataset.hpp"
#include "aad/evaluation.hpp"
#include "aad/model_io.hpp"
#include "aad/synthetic.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace aad {

inline constexpr std::string_view run_config_filename = "run_config.json";

/// Everything a CLI invocation depends on. Written next to every output as
/// run_config.json; feeding it back reproduces the outputs.
struct RunConfig {
    std::string command; // synth | convert | preprocess | train | evaluate
    std::string out;
    bool force = false;
    unsigned jobs = 1;
    std::uint64_t seed = 1;

    SyntheticConfig synth;

    std::string input; // convert: export directory
    double expected_duration_s = 600.0;
    bool preprocess = false; // convert: apply the preprocessing chain too

    std::string dataset;
    std::string train_dataset; // cross-dataset
    PreprocessConfig pre;

    std::string protocol = "loto-per-condition";
    EvaluationConfig eval;
    std::string control; // "" or "shuffled-envelopes"

    std::string subject;   // train: restrict to one subject
    std::string condition; // train: restrict to one condition
};

namespace detail {

inline nlohmann::json num_or_inf(double v)
{
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    return v;
}

inline double parse_num_or_inf(const nlohmann::json& j)
{
    if (j.is_number())
        return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf" || s == "+inf")
            return std::numeric_limits<double>::infinity();
        if (s == "-inf")
            return -std::numeric_limits<double>::infinity();
    }
    fail(ErrorCode::Config, "expected a number, \"inf\" or \"-inf\", got " + j.dump());
}

} // namespace detail

inline nlohmann::json to_json(const RunConfig& c)
{
    auto conds = nlohmann::json::array();
    for (auto k : c.synth.conditions)
        conds.push_back(to_string(k));
    return {
        {"command", c.command},
        {"out", c.out},
        {"force", c.force},
        {"jobs", c.jobs},
        {"seed", c.seed},
        {"synth",
         {{"name", c.synth.name},
          {"subjects", c.synth.n_subjects},
          {"conditions", conds},
          {"trials_per_condition", c.synth.trials_per_condition},
          {"duration_s", c.synth.duration_s},
          {"fs", c.synth.fs},
          {"channels", c.synth.n_channels},
          {"kernel_ms", c.synth.kernel_ms},
          {"snr_db", detail::num_or_inf(c.synth.snr_db)},
          {"leak_db", detail::num_or_inf(c.synth.unattended_leak_db)},
          {"subject_variability", c.synth.subject_variability},
          {"population_seed", c.synth.population_seed}}},
        {"input", c.input},
        {"expected_duration_s", c.expected_duration_s},
        {"preprocess", c.preprocess},
        {"dataset", c.dataset},
        {"train_dataset", c.train_dataset},
        {"preprocessing",
         {{"band_hz", {c.pre.band_low_hz, c.pre.band_high_hz}}, {"band_order", c.pre.band_order}, {"fs", c.pre.target_fs}}},
        {"protocol", c.protocol},
        {"windows_s", c.eval.window_lengths},
        {"overlap", c.eval.overlap},
        {"drop_partial", c.eval.drop_partial},
        {"alpha", c.eval.alpha},
        {"lags_ms", {c.eval.decoder.lag_min_ms, c.eval.decoder.lag_max_ms}},
        {"shrinkage", to_string(c.eval.decoder.shrinkage)},
        {"fixed_lambda", c.eval.decoder.fixed_lambda},
        {"control", c.control},
        {"subject", c.subject},
        {"condition", c.condition},
    };
}

inline RunConfig run_config_from_json(const nlohmann::json& j)
{
    RunConfig c;
    try {
        c.command = j.at("command").get<std::string>();
        c.out = j.value("out", c.out);
        c.force = j.value("force", c.force);
        c.jobs = j.value("jobs", c.jobs);
        c.seed = j.value("seed", c.seed);
        if (j.contains("synth")) {
            const auto& s = j["synth"];
            c.synth.name = s.value("name", c.synth.name);
            c.synth.n_subjects = s.value("subjects", c.synth.n_subjects);
            if (s.contains("conditions")) {
                c.synth.conditions.clear();
                for (const auto& name : s["conditions"])
                    c.synth.conditions.push_back(parse_condition(name.get<std::string>()));
            }
            c.synth.trials_per_condition = s.value("trials_per_condition", c.synth.trials_per_condition);
            c.synth.duration_s = s.value("duration_s", c.synth.duration_s);
            c.synth.fs = s.value("fs", c.synth.fs);
            c.synth.n_channels = s.value("channels", c.synth.n_channels);
            c.synth.kernel_ms = s.value("kernel_ms", c.synth.kernel_ms);
            if (s.contains("snr_db"))
                c.synth.snr_db = detail::parse_num_or_inf(s["snr_db"]);
            if (s.contains("leak_db"))
                c.synth.unattended_leak_db = detail::parse_num_or_inf(s["leak_db"]);
            c.synth.subject_variability = s.value("subject_variability", c.synth.subject_variability);
            c.synth.population_seed = s.value("population_seed", c.synth.population_seed);
        }
        c.input = j.value("input", c.input);
        c.expected_duration_s = j.value("expected_duration_s", c.expected_duration_s);
        c.preprocess = j.value("preprocess", c.preprocess);
        c.dataset = j.value("dataset", c.dataset);
        c.train_dataset = j.value("train_dataset", c.train_dataset);
        if (j.contains("preprocessing")) {
            const auto& p = j["preprocessing"];
            if (p.contains("band_hz")) {
                c.pre.band_low_hz = p["band_hz"].at(0).get<double>();
                c.pre.band_high_hz = p["band_hz"].at(1).get<double>();
            }
            c.pre.band_order = p.value("band_order", c.pre.band_order);
            c.pre.target_fs = p.value("fs", c.pre.target_fs);
        }
        c.protocol = j.value("protocol", c.protocol);
        if (j.contains("windows_s"))
            c.eval.window_lengths = j["windows_s"].get<std::vector<double>>();
        c.eval.overlap = j.value("overlap", c.eval.overlap);
        c.eval.drop_partial = j.value("drop_partial", c.eval.drop_partial);
        c.eval.alpha = j.value("alpha", c.eval.alpha);
        if (j.contains("lags_ms")) {
            c.eval.decoder.lag_min_ms = j["lags_ms"].at(0).get<double>();
            c.eval.decoder.lag_max_ms = j["lags_ms"].at(1).get<double>();
        }
        if (j.contains("shrinkage"))
            c.eval.decoder.shrinkage = parse_shrinkage(j["shrinkage"].get<std::string>());
        c.eval.decoder.fixed_lambda = j.value("fixed_lambda", c.eval.decoder.fixed_lambda);
        c.control = j.value("control", c.control);
        c.subject = j.value("subject", c.subject);
        c.condition = j.value("condition", c.condition);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Config, std::string("run config: ") + e.what());
    }
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path)
{
    const auto p = std::filesystem::is_directory(path) ? path / run_config_filename : path;
    std::ifstream in(p);
    if (!in)
        fail(ErrorCode::Config, "cannot read run config '" + p.string() + "'");
    try {
        return run_config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::Config, p.string() + ": invalid JSON (" + e.what() + ")");
    }
}

namespace detail {

inline std::filesystem::path resolve_out(RunConfig& c)
{
    if (c.out.empty()) {
        const char* root = std::getenv("AAD_OUTPUT_ROOT");
        if (root == nullptr || *root == '\0')
            fail(ErrorCode::Config, "no output directory: pass --out or set AAD_OUTPUT_ROOT");
        c.out = (std::filesystem::path(root) / c.command).string();
    }
    return c.out;
}

inline void prepare_out(const std::filesystem::path& dir, bool force, std::string_view marker)
{
    std::error_code ec;
    if (std::filesystem::exists(dir / marker, ec) && !force)
        fail(ErrorCode::Io, "'" + (dir / marker).string() + "' already exists (use --force to overwrite)");
    std::filesystem::create_directories(dir, ec);
    if (ec)
        fail(ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());
}

inline void stamp(const std::filesystem::path& dir, const RunConfig& c)
{
    {
        std::ofstream out(dir / run_config_filename, std::ios::trunc);
        if (!out)
            fail(ErrorCode::Io, "cannot write '" + (dir / run_config_filename).string() + "'");
        out << to_json(c).dump(2) << '\n';
    }
    std::ofstream version(dir / "VERSION", std::ios::trunc);
    if (!version)
        fail(ErrorCode::Io, "cannot write '" + (dir / "VERSION").string() + "'");
    version << "aad " << tool_version << '\n';
}

inline std::string pct(double v)
{
    if (std::isnan(v))
        return "   n/a";
    char buf[16];
    std::snprintf(buf, sizeof buf, "%5.1f%%", 100.0 * v);
    return buf;
}

inline void print_summary(const EvaluationReport& r, std::ostream& os)
{
    double w = r.window_lengths.front();
    for (double x : r.window_lengths)
        if (x == 60.0 || (w != 60.0 && x > w))
            w = x;
    char line[160];
    os << "protocol " << to_string(r.protocol) << ", dataset " << r.dataset_name;
    if (!r.train_dataset_name.empty())
        os << " (trained on " << r.train_dataset_name << ")";
    os << ", window " << fmt_double(w) << " s\n";
    std::snprintf(line, sizeof line, "%-22s %9s %9s %10s %10s\n", "condition", "subjects", "accuracy", "decisions",
                  "threshold");
    os << line;
    auto row = [&](std::string_view name, const GroupAccuracy& g) {
        std::snprintf(line, sizeof line, "%-22.*s %9zu %9s %10lld %10s\n", static_cast<int>(name.size()), name.data(),
                      g.n_subjects, pct(g.mean_accuracy).c_str(), static_cast<long long>(g.n_decisions_per_subject),
                      g.threshold ? pct(*g.threshold).c_str() : "   -");
        os << line;
    };
    for (const auto& [c, m] : r.per_condition)
        if (auto it = m.find(w); it != m.end())
            row(to_string(c), it->second);
    if (auto it = r.overall.find(w); it != r.overall.end())
        row("all", it->second);
    if (r.n_flagged_folds > 0)
        os << r.n_flagged_folds << " fold(s) without decidable windows excluded from means\n";
    if (r.n_undecidable > 0)
        os << r.n_undecidable << " undecidable window(s) excluded\n";
    for (const auto& s : r.skipped)
        os << "skipped " << s.subject_id << (s.condition ? "/" + std::string(to_string(*s.condition)) : std::string{})
           << ": " << s.reason << '\n';
}

inline void report_warnings(const Dataset& ds, std::ostream& log)
{
    for (const auto& w : ds.warnings)
        log << "warning: " << w << '\n';
}

} // namespace detail

/// Execute one command. Errors propagate as aad::Error; `log` receives the
/// human-readable summary.
inline void run_command(RunConfig c, std::ostream& log)
{
    const auto out = detail::resolve_out(c);
    if (c.jobs < 1)
        fail(ErrorCode::Config, "--jobs must be at least 1");

    if (c.command == "synth") {
        c.synth.seed = c.seed;
        c.synth.validate();
        detail::prepare_out(out, c.force, manifest_filename);
        const auto ds = generate_synthetic(c.synth, c.jobs);
        save_dataset(ds, out, {c.force});
        detail::stamp(out, c);
        log << "wrote " << ds.n_trials() << " trials for " << ds.subjects.size() << " subjects to " << out.string() << '\n';
    } else if (c.command == "convert") {
        if (c.input.empty())
            fail(ErrorCode::Config, "convert needs --input");
        auto ds = convert_export(c.input, {c.expected_duration_s});
        detail::report_warnings(ds, log);
        if (c.preprocess)
            ds = preprocess_dataset(ds, c.pre, c.jobs);
        detail::prepare_out(out, c.force, manifest_filename);
        save_dataset(ds, out, {c.force});
        detail::stamp(out, c);
        log << "converted " << ds.n_trials() << " trials for " << ds.subjects.size() << " subjects to " << out.string()
            << '\n';
    } else if (c.command == "preprocess") {
        if (c.dataset.empty())
            fail(ErrorCode::Config, "preprocess needs --dataset");
        const auto in = load_dataset(c.dataset);
        detail::report_warnings(in, log);
        const auto ds = preprocess_dataset(in, c.pre, c.jobs);
        detail::prepare_out(out, c.force, manifest_filename);
        save_dataset(ds, out, {c.force});
        detail::stamp(out, c);
        log << "preprocessed " << ds.n_trials() << " trials to " << out.string() << '\n';
    } else if (c.command == "train") {
        if (c.dataset.empty())
            fail(ErrorCode::Config, "train needs --dataset");
        const auto ds = load_dataset(c.dataset);
        detail::report_warnings(ds, log);
        std::optional<Condition> cond;
        if (!c.condition.empty())
            cond = parse_condition(c.condition);
        std::vector<const Trial*> trials;
        for (const auto& s : ds.subjects)
            if (c.subject.empty() || s.id == c.subject)
                for (const auto& t : s.trials)
                    if (!cond || t.condition == *cond)
                        trials.push_back(&t);
        if (trials.empty())
            fail(ErrorCode::Plan, "no trials match the requested subject/condition");
        const auto model = train_decoder(trials, c.eval.decoder);
        detail::prepare_out(out, c.force, "decoder.json");
        save_decoder(model, out, {{"dataset", ds.name}, {"n_trials", trials.size()}, {"tool_version", tool_version}});
        detail::stamp(out, c);
        log << "trained on " << trials.size() << " trials (" << model.n_samples << " samples), lambda "
            << detail::fmt_double(model.lambda) << '\n';
    } else if (c.command == "evaluate") {
        if (c.dataset.empty())
            fail(ErrorCode::Config, "evaluate needs --dataset");
        const auto protocol = parse_protocol(c.protocol);
        if (!c.control.empty() && c.control != "shuffled-envelopes")
            fail(ErrorCode::Config, "unknown control '" + c.control + "'");
        if (protocol == Protocol::CrossDataset && c.train_dataset.empty())
            fail(ErrorCode::Config, "cross-dataset evaluation needs --train-dataset");
        auto test = load_dataset(c.dataset);
        detail::report_warnings(test, log);
        if (!c.control.empty())
            test = shuffle_envelopes(test, c.seed);
        auto cfg = c.eval;
        cfg.jobs = c.jobs;
        detail::prepare_out(out, c.force, "report.json");
        EvaluationReport report;
        if (protocol == Protocol::CrossDataset) {
            const auto train = load_dataset(c.train_dataset);
            detail::report_warnings(train, log);
            report = cross_dataset(train, test, cfg);
        } else {
            report = run_protocol(test, protocol, cfg);
        }
        if (!c.control.empty())
            report.provenance["control"] = {{"kind", c.control}, {"seed", c.seed}};
        export_report(report, out);
        detail::stamp(out, c);
        detail::print_summary(report, log);
    } else {
        fail(ErrorCode::Config, "unknown command '" + c.command + "'");
    }
}

/// CLI exit-code contract: 0 success, 2 config error, 3 data error, 4 internal.
inline int exit_code_for(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::Config:
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidBand:
    case ErrorCode::InvalidOrder:
    case ErrorCode::InvalidRatio:
    case ErrorCode::InvalidExponent:
    case ErrorCode::InvalidLag:
        return 2;
    case ErrorCode::MissingFile:
    case ErrorCode::CorruptDataset:
    case ErrorCode::Schema:
    case ErrorCode::Compatibility:
    case ErrorCode::Plan:
    case ErrorCode::ZeroVariance:
    case ErrorCode::InsufficientLength:
    case ErrorCode::Shape:
    case ErrorCode::NoWindows:
    case ErrorCode::SingularSystem:
    case ErrorCode::Io:
        return 3;
    }
    return 4;
}

} // namespace aad
