#include "aad/run.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace {

double parse_level(const std::string& text, const char* flag)
{
    if (text == "inf" || text == "+inf")
        return std::numeric_limits<double>::infinity();
    if (text == "-inf")
        return -std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size())
            return v;
    } catch (const std::exception&) {
    }
    aad::fail(aad::ErrorCode::Config, std::string(flag) + ": expected a number, inf or -inf, got '" + text + "'");
}

// "a:b" -> (a, b)
std::pair<double, double> parse_range(const std::string& text, const char* flag)
{
    const auto colon = text.find(':');
    try {
        if (colon != std::string::npos) {
            std::size_t u1 = 0, u2 = 0;
            const auto lo = text.substr(0, colon);
            const auto hi = text.substr(colon + 1);
            const double a = std::stod(lo, &u1);
            const double b = std::stod(hi, &u2);
            if (u1 == lo.size() && u2 == hi.size())
                return {a, b};
        }
    } catch (const std::exception&) {
    }
    aad::fail(aad::ErrorCode::Config, std::string(flag) + ": expected LOW:HIGH, got '" + text + "'");
}

std::vector<double> parse_list(const std::string& text, const char* flag)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size())
                throw std::invalid_argument(item);
        } catch (const std::exception&) {
            aad::fail(aad::ErrorCode::Config, std::string(flag) + ": bad number '" + item + "'");
        }
    }
    if (out.empty())
        aad::fail(aad::ErrorCode::Config, std::string(flag) + ": empty list");
    return out;
}

std::string one_line(std::string s)
{
    for (char& ch : s)
        if (ch == '\n' || ch == '\r')
            ch = ' ';
    return s;
}

struct Flags {
    std::string snr_db = "0";
    std::string leak_db = "-6";
    std::string conditions;
    std::string band_hz = "1:9";
    std::string lags_ms = "0:400";
    std::string windows = "1,2,5,10,20,30,60";
    std::string shrinkage = "lw";
    bool keep_partial = false;
};

} // namespace

int main(int argc, char** argv)
{
    aad::RunConfig cfg;
    Flags f;
    std::string snapshot;

    CLI::App app{"Linear stimulus-reconstruction auditory attention decoding"};
    app.set_version_flag("--version", "aad " + std::string(aad::tool_version));
    app.require_subcommand(1);

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out", cfg.out, "Output directory (default: $AAD_OUTPUT_ROOT/<command>)");
        sub->add_flag("--force", cfg.force, "Overwrite existing outputs");
        sub->add_option("--jobs", cfg.jobs, "Worker threads")->check(CLI::PositiveNumber);
    };
    auto add_preprocessing = [&](CLI::App* sub) {
        sub->add_option("--band-hz", f.band_hz, "Bandpass edges LOW:HIGH in Hz")->capture_default_str();
        sub->add_option("--band-order", cfg.pre.band_order, "Butterworth prototype order")->capture_default_str();
        sub->add_option("--fs", cfg.pre.target_fs, "Target sampling rate in Hz")->capture_default_str();
    };
    auto add_decoder = [&](CLI::App* sub) {
        sub->add_option("--lags-ms", f.lags_ms, "Decoder lag range MIN:MAX in ms")->capture_default_str();
        sub->add_option("--shrinkage", f.shrinkage, "lw | lw-trial-mean (experimental) | fixed | none")
            ->capture_default_str();
        sub->add_option("--lambda", cfg.eval.decoder.fixed_lambda, "Shrinkage intensity for --shrinkage fixed");
    };

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    add_common(synth);
    synth->add_option("--subjects", cfg.synth.n_subjects, "Number of subjects")->capture_default_str();
    synth->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    synth->add_option("--snr-db", f.snr_db, "Attended-response to noise power ratio in dB (inf: no noise)")
        ->capture_default_str();
    synth->add_option("--leak-db", f.leak_db, "Unattended contribution level in dB (-inf: none)")->capture_default_str();
    synth->add_option("--channels", cfg.synth.n_channels, "EEG channels")->capture_default_str();
    synth->add_option("--duration-s", cfg.synth.duration_s, "Trial duration in seconds")->capture_default_str();
    synth->add_option("--fs", cfg.synth.fs, "Sampling rate in Hz")->capture_default_str();
    synth->add_option("--trials", cfg.synth.trials_per_condition, "Trials per condition")->capture_default_str();
    synth->add_option("--conditions", f.conditions, "Comma-separated condition names (default: all four)");
    synth->add_option("--kernel-ms", cfg.synth.kernel_ms, "Forward kernel length in ms")->capture_default_str();
    synth->add_option("--variability", cfg.synth.subject_variability, "Subject-specific kernel share in [0, 1]")
        ->capture_default_str();
    synth->add_option("--population-seed", cfg.synth.population_seed, "Seed of the shared population kernels");
    synth->add_option("--name", cfg.synth.name, "Dataset name")->capture_default_str();

    auto* convert = app.add_subcommand("convert", "Convert an intermediate export into a dataset container");
    add_common(convert);
    add_preprocessing(convert);
    convert->add_option("--input", cfg.input, "Export directory or export.json")->required();
    convert->add_option("--expect-duration-s", cfg.expected_duration_s, "Expected trial duration (0: unchecked)")
        ->capture_default_str();
    convert->add_flag("--preprocess", cfg.preprocess, "Also bandpass, resample and z-score");

    auto* preprocess = app.add_subcommand("preprocess", "Bandpass, resample and z-score a dataset");
    add_common(preprocess);
    add_preprocessing(preprocess);
    preprocess->add_option("--dataset", cfg.dataset, "Input dataset")->required();

    auto* train = app.add_subcommand("train", "Train one decoder on a dataset");
    add_common(train);
    add_decoder(train);
    train->add_option("--dataset", cfg.dataset, "Training dataset")->required();
    train->add_option("--subject", cfg.subject, "Restrict to one subject");
    train->add_option("--condition", cfg.condition, "Restrict to one condition");

    auto* evaluate = app.add_subcommand("evaluate", "Run a cross-validation protocol and export reports");
    add_common(evaluate);
    add_decoder(evaluate);
    evaluate->add_option("--protocol", cfg.protocol, "loto-per-condition | loto | loco | loso | cross-dataset")
        ->capture_default_str();
    evaluate->add_option("--dataset", cfg.dataset, "Test dataset")->required();
    evaluate->add_option("--train-dataset", cfg.train_dataset, "Training dataset (cross-dataset)");
    evaluate->add_option("--windows", f.windows, "Decision window lengths in s, comma-separated")->capture_default_str();
    evaluate->add_option("--overlap", cfg.eval.overlap, "Window overlap fraction (no thresholds when > 0)");
    evaluate->add_flag("--keep-partial", f.keep_partial, "Score the final partial window of each segment");
    evaluate->add_option("--alpha", cfg.eval.alpha, "Significance level")->capture_default_str();
    evaluate->add_option("--control", cfg.control, "Negative control: shuffled-envelopes");
    evaluate->add_option("--seed", cfg.seed, "Seed for the negative control")->capture_default_str();

    auto* rerun = app.add_subcommand("rerun", "Re-execute a run_config.json snapshot");
    rerun->add_option("config", snapshot, "Snapshot file or output directory")->required();
    std::string rerun_out;
    bool rerun_force = false;
    unsigned rerun_jobs = 0;
    rerun->add_option("--out", rerun_out, "Override the output directory");
    rerun->add_flag("--force", rerun_force, "Overwrite existing outputs");
    rerun->add_option("--jobs", rerun_jobs, "Override worker threads")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (rerun->parsed()) {
            cfg = aad::load_run_config(snapshot);
            if (!rerun_out.empty())
                cfg.out = rerun_out;
            cfg.force = cfg.force || rerun_force;
            if (rerun_jobs > 0)
                cfg.jobs = rerun_jobs;
        } else {
            cfg.command = app.get_subcommands().front()->get_name();
            cfg.synth.snr_db = parse_level(f.snr_db, "--snr-db");
            cfg.synth.unattended_leak_db = parse_level(f.leak_db, "--leak-db");
            if (!f.conditions.empty()) {
                cfg.synth.conditions.clear();
                std::stringstream ss(f.conditions);
                std::string name;
                while (std::getline(ss, name, ',')) {
                    try {
                        cfg.synth.conditions.push_back(aad::parse_condition(name));
                    } catch (const aad::Error& e) {
                        aad::fail(aad::ErrorCode::Config, std::string("--conditions: ") + e.what());
                    }
                }
            }
            std::tie(cfg.pre.band_low_hz, cfg.pre.band_high_hz) = parse_range(f.band_hz, "--band-hz");
            std::tie(cfg.eval.decoder.lag_min_ms, cfg.eval.decoder.lag_max_ms) = parse_range(f.lags_ms, "--lags-ms");
            cfg.eval.window_lengths = parse_list(f.windows, "--windows");
            cfg.eval.decoder.shrinkage = aad::parse_shrinkage(f.shrinkage);
            cfg.eval.drop_partial = !f.keep_partial;
        }
        aad::run_command(cfg, std::cout);
        return 0;
    } catch (const aad::Error& e) {
        std::cerr << "aad: error[" << aad::to_string(e.code()) << "]: " << one_line(e.what()) << '\n';
        return aad::exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "aad: error[internal]: " << one_line(e.what()) << '\n';
        return 4;
    }
}
