#pragma once

#include "aad/decoder.hpp"
#include "aad/envelope.hpp"
#include "aad/error.hpp"
#include "aad/parallel.hpp"
#include "aad/signal.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace aad {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Conditions
// ---------------------------------------------------------------------------

enum class Condition { NoVisuals, StaticVideo, MovingVideo, MovingTargetNoise };

inline constexpr std::array<Condition, 4> all_conditions{Condition::NoVisuals, Condition::StaticVideo,
                                                         Condition::MovingVideo, Condition::MovingTargetNoise};

constexpr std::string_view to_string(Condition c) noexcept
{
    switch (c) {
    case Condition::NoVisuals: return "no_visuals";
    case Condition::StaticVideo: return "static_video";
    case Condition::MovingVideo: return "moving_video";
    case Condition::MovingTargetNoise: return "moving_target_noise";
    }
    return "unknown";
}

/// Gaze instruction agrees with the attended side only for the static video.
constexpr bool is_congruent(Condition c) noexcept { return c == Condition::StaticVideo; }

constexpr std::string_view describe(Condition c) noexcept
{
    switch (c) {
    case Condition::NoVisuals: return "fixate a central point on a black screen";
    case Condition::StaticVideo: return "fixate a static video of the attended speaker on the attended side";
    case Condition::MovingVideo: return "follow a video of the attended speaker moving randomly";
    case Condition::MovingTargetNoise: return "follow a moving crosshair with background babble noise";
    }
    return "";
}

inline Condition parse_condition(std::string_view name)
{
    for (auto c : all_conditions)
        if (to_string(c) == name)
            return c;
    fail(ErrorCode::Schema, "unknown condition '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Data model
// ---------------------------------------------------------------------------

struct Trial {
    std::string id;
    Condition condition = Condition::NoVisuals;
    int trial_index = 1; // 1-based within (subject, condition)
    MultichannelSignal eeg{Matrix::Zero(1, 1), 1.0};
    Vector envelope1;
    Vector envelope2;
    AttentionLabels labels;
    double original_fs = 0.0;
    std::string preprocessing;

    [[nodiscard]] double fs() const noexcept { return eeg.fs(); }
    [[nodiscard]] Index n_samples() const noexcept { return eeg.n_samples(); }
    [[nodiscard]] double duration_s() const noexcept { return eeg.duration_s(); }

    void validate() const
    {
        const Index n = eeg.n_samples();
        if (envelope1.size() != n || envelope2.size() != n || labels.size() != n)
            fail(ErrorCode::CorruptDataset, "trial '" + id + "': EEG, envelopes and labels differ in length");
        if (!envelope1.allFinite() || !envelope2.allFinite())
            fail(ErrorCode::CorruptDataset, "trial '" + id + "': non-finite envelope samples");
    }
};

struct Subject {
    std::string id;
    std::vector<Trial> trials;
};

/// Expected (condition, trial) grid; absent cells are reported, not errors.
struct Layout {
    std::vector<Condition> conditions{all_conditions.begin(), all_conditions.end()};
    int trials_per_condition = 2;
};

struct MissingCell {
    std::string subject_id;
    Condition condition = Condition::NoVisuals;
    int trial_index = 1;
    friend bool operator==(const MissingCell&, const MissingCell&) = default;
};

struct Dataset {
    std::string name;
    Layout layout;
    std::vector<Subject> subjects;
    nlohmann::json provenance = nlohmann::json::object();
    std::vector<std::string> warnings; // non-fatal findings while loading

    [[nodiscard]] std::size_t n_trials() const
    {
        std::size_t n = 0;
        for (const auto& s : subjects)
            n += s.trials.size();
        return n;
    }

    /// Cells of the layout grid that have no trial.
    [[nodiscard]] std::vector<MissingCell> completeness() const
    {
        std::vector<MissingCell> missing;
        for (const auto& s : subjects)
            for (auto c : layout.conditions)
                for (int k = 1; k <= layout.trials_per_condition; ++k) {
                    const bool present = std::any_of(s.trials.begin(), s.trials.end(), [&](const Trial& t) {
                        return t.condition == c && t.trial_index == k;
                    });
                    if (!present)
                        missing.push_back({s.id, c, k});
                }
        return missing;
    }
};

// ---------------------------------------------------------------------------
// Container format: manifest.json + float64 little-endian, time-major blobs.
// ---------------------------------------------------------------------------

inline constexpr std::string_view dataset_format_tag = "aad-dataset";
inline constexpr int dataset_format_version = 1;
inline constexpr std::string_view manifest_filename = "manifest.json";

namespace detail {

inline std::uint64_t to_little_endian(std::uint64_t v)
{
    if constexpr (std::endian::native == std::endian::big)
        return __builtin_bswap64(v);
    return v;
}

} // namespace detail

/// Write `rows x cols` samples row by row (time-major) as float64 LE.
inline void write_blob(const fs::path& path, const Eigen::Ref<const Matrix>& m)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
    std::vector<char> buffer(static_cast<std::size_t>(m.size()) * 8);
    std::size_t pos = 0;
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) {
            const auto bits = detail::to_little_endian(std::bit_cast<std::uint64_t>(m(r, c)));
            std::memcpy(buffer.data() + pos, &bits, 8);
            pos += 8;
        }
    out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    if (!out)
        fail(ErrorCode::Io, "failed writing '" + path.string() + "'");
}

inline Matrix read_blob(const fs::path& path, Index rows, Index cols)
{
    if (!fs::exists(path))
        fail(ErrorCode::MissingFile, "missing blob '" + path.string() + "'");
    const auto expected = static_cast<std::uintmax_t>(rows) * static_cast<std::uintmax_t>(cols) * 8u;
    const auto actual = fs::file_size(path);
    if (actual != expected)
        fail(ErrorCode::CorruptDataset, "blob '" + path.string() + "' has " + std::to_string(actual) + " bytes, manifest implies "
                                            + std::to_string(expected));
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
    std::vector<char> buffer(static_cast<std::size_t>(expected));
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    if (!in)
        fail(ErrorCode::Io, "failed reading '" + path.string() + "'");
    Matrix m(rows, cols);
    std::size_t pos = 0;
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) {
            std::uint64_t bits = 0;
            std::memcpy(&bits, buffer.data() + pos, 8);
            pos += 8;
            m(r, c) = std::bit_cast<double>(detail::to_little_endian(bits));
        }
    return m;
}

namespace detail {

inline nlohmann::json labels_to_json(const AttentionLabels& labels)
{
    auto runs = nlohmann::json::array();
    for (const auto& r : labels.runs())
        runs.push_back({r.start, r.label});
    return runs;
}

inline AttentionLabels labels_from_json(const nlohmann::json& j, Index length, const std::string& where)
{
    if (!j.is_array())
        fail(ErrorCode::Schema, where + ": 'labels' must be an array of [start_sample, label] pairs");
    std::vector<AttentionLabels::Run> runs;
    for (const auto& r : j) {
        if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() || !r[1].is_number_integer())
            fail(ErrorCode::Schema, where + ": label run must be [start_sample, label]");
        runs.push_back({r[0].get<Index>(), r[1].get<int>()});
    }
    return AttentionLabels(std::move(runs), length);
}

template <class T>
T require(const nlohmann::json& j, const char* key, const std::string& where)
{
    if (!j.contains(key))
        fail(ErrorCode::Schema, where + ": missing required field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorCode::Schema, where + ": field '" + key + "' has the wrong type");
    }
}

inline void warn_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known, const std::string& where,
                         std::vector<std::string>& warnings)
{
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            warnings.push_back(where + ": ignoring unknown field '" + it.key() + "'");
}

inline std::string sanitize(std::string s)
{
    for (char& ch : s)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.'))
            ch = '_';
    return s;
}

} // namespace detail

struct SaveOptions {
    bool force = false; // overwrite an existing manifest
};

/// Write the dataset as <dir>/manifest.json plus one blob per signal.
/// Returns the manifest path.
inline fs::path save_dataset(const Dataset& ds, const fs::path& dir, SaveOptions opts = {})
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        fail(ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());
    const fs::path manifest_path = dir / manifest_filename;
    if (fs::exists(manifest_path) && !opts.force)
        fail(ErrorCode::Io, "'" + manifest_path.string() + "' already exists (use force to overwrite)");

    nlohmann::json m;
    m["format"] = dataset_format_tag;
    m["version"] = dataset_format_version;
    m["name"] = ds.name;
    m["provenance"] = ds.provenance;
    auto conds = nlohmann::json::array();
    for (auto c : ds.layout.conditions)
        conds.push_back(to_string(c));
    m["layout"] = {{"conditions", conds}, {"trials_per_condition", ds.layout.trials_per_condition}};

    auto subjects = nlohmann::json::array();
    for (const auto& s : ds.subjects) {
        const fs::path subdir = detail::sanitize(s.id);
        fs::create_directories(dir / subdir, ec);
        if (ec)
            fail(ErrorCode::Io, "cannot create '" + (dir / subdir).string() + "': " + ec.message());
        auto trials = nlohmann::json::array();
        for (const auto& t : s.trials) {
            t.validate();
            const std::string stem = detail::sanitize(t.id);
            const auto eeg_rel = (subdir / (stem + ".eeg.f64")).generic_string();
            const auto e1_rel = (subdir / (stem + ".env1.f64")).generic_string();
            const auto e2_rel = (subdir / (stem + ".env2.f64")).generic_string();
            write_blob(dir / eeg_rel, t.eeg.samples());
            write_blob(dir / e1_rel, t.envelope1);
            write_blob(dir / e2_rel, t.envelope2);
            nlohmann::json jt;
            jt["id"] = t.id;
            jt["condition"] = to_string(t.condition);
            jt["trial_index"] = t.trial_index;
            jt["fs"] = t.fs();
            jt["n_samples"] = t.n_samples();
            jt["n_channels"] = t.eeg.n_channels();
            if (!t.eeg.channel_labels().empty())
                jt["channel_labels"] = t.eeg.channel_labels();
            jt["eeg"] = eeg_rel;
            jt["envelope_1"] = e1_rel;
            jt["envelope_2"] = e2_rel;
            jt["labels"] = detail::labels_to_json(t.labels);
            if (t.original_fs > 0.0)
                jt["original_fs"] = t.original_fs;
            if (!t.preprocessing.empty())
                jt["preprocessing"] = t.preprocessing;
            trials.push_back(std::move(jt));
        }
        subjects.push_back({{"id", s.id}, {"trials", std::move(trials)}});
    }
    m["subjects"] = std::move(subjects);

    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out)
        fail(ErrorCode::Io, "cannot write '" + manifest_path.string() + "'");
    out << m.dump(2) << '\n';
    if (!out)
        fail(ErrorCode::Io, "failed writing '" + manifest_path.string() + "'");
    return manifest_path;
}

/// Load a container. `path` may be the manifest itself or its directory.
inline Dataset load_dataset(const fs::path& path)
{
    const fs::path manifest_path = fs::is_directory(path) ? path / manifest_filename : path;
    if (!fs::exists(manifest_path))
        fail(ErrorCode::MissingFile, "manifest '" + manifest_path.string() + "' not found");
    const fs::path root = manifest_path.parent_path();

    nlohmann::json m;
    {
        std::ifstream in(manifest_path);
        try {
            m = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorCode::Schema, manifest_path.string() + ": invalid JSON (" + e.what() + ")");
        }
    }
    const std::string where = manifest_path.string();
    if (detail::require<std::string>(m, "format", where) != dataset_format_tag)
        fail(ErrorCode::Schema, where + ": not an aad-dataset manifest");
    if (detail::require<int>(m, "version", where) != dataset_format_version)
        fail(ErrorCode::Schema, where + ": unsupported manifest version");

    Dataset ds;
    detail::warn_unknown(m, {"format", "version", "name", "provenance", "layout", "subjects"}, where, ds.warnings);
    ds.name = detail::require<std::string>(m, "name", where);
    if (m.contains("provenance"))
        ds.provenance = m["provenance"];
    if (m.contains("layout")) {
        const auto& jl = m["layout"];
        ds.layout.conditions.clear();
        for (const auto& c : detail::require<std::vector<std::string>>(jl, "conditions", where + " layout"))
            ds.layout.conditions.push_back(parse_condition(c));
        ds.layout.trials_per_condition = detail::require<int>(jl, "trials_per_condition", where + " layout");
    }

    for (const auto& js : detail::require<nlohmann::json>(m, "subjects", where)) {
        Subject s;
        s.id = detail::require<std::string>(js, "id", where + " subject");
        detail::warn_unknown(js, {"id", "trials"}, where + " subject " + s.id, ds.warnings);
        for (const auto& jt : detail::require<nlohmann::json>(js, "trials", where + " subject " + s.id)) {
            const std::string tw = where + " subject " + s.id + " trial";
            detail::warn_unknown(jt, {"id", "condition", "trial_index", "fs", "n_samples", "n_channels", "channel_labels",
                                      "eeg", "envelope_1", "envelope_2", "labels", "original_fs", "preprocessing"},
                                 tw, ds.warnings);
            Trial t;
            t.id = detail::require<std::string>(jt, "id", tw);
            t.condition = parse_condition(detail::require<std::string>(jt, "condition", tw + " " + t.id));
            t.trial_index = detail::require<int>(jt, "trial_index", tw + " " + t.id);
            const auto n = detail::require<Index>(jt, "n_samples", tw + " " + t.id);
            const auto c = detail::require<Index>(jt, "n_channels", tw + " " + t.id);
            const auto fs_hz = detail::require<double>(jt, "fs", tw + " " + t.id);
            if (n < 1 || c < 1)
                fail(ErrorCode::CorruptDataset, tw + " " + t.id + ": non-positive shape");
            std::vector<std::string> labels;
            if (jt.contains("channel_labels"))
                labels = jt["channel_labels"].get<std::vector<std::string>>();
            t.eeg = MultichannelSignal(read_blob(root / detail::require<std::string>(jt, "eeg", tw), n, c), fs_hz,
                                       std::move(labels));
            t.envelope1 = read_blob(root / detail::require<std::string>(jt, "envelope_1", tw), n, 1).col(0);
            t.envelope2 = read_blob(root / detail::require<std::string>(jt, "envelope_2", tw), n, 1).col(0);
            t.labels = detail::labels_from_json(detail::require<nlohmann::json>(jt, "labels", tw), n, tw + " " + t.id);
            t.original_fs = jt.value("original_fs", 0.0);
            t.preprocessing = jt.value("preprocessing", std::string{});
            t.validate();
            s.trials.push_back(std::move(t));
        }
        ds.subjects.push_back(std::move(s));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Dataset-level preprocessing
// ---------------------------------------------------------------------------

/// Apply the bandpass / resample / z-score chain to every trial's EEG and
/// both envelopes; label runs are mapped to the new rate.
inline Dataset preprocess_dataset(const Dataset& in, const PreprocessConfig& cfg, unsigned jobs = 1)
{
    Dataset out = in;
    std::vector<std::pair<std::size_t, std::size_t>> refs;
    for (std::size_t s = 0; s < in.subjects.size(); ++s)
        for (std::size_t t = 0; t < in.subjects[s].trials.size(); ++t)
            refs.emplace_back(s, t);

    parallel_for(refs.size(), jobs, [&](std::size_t i) {
        const auto [s, k] = refs[i];
        const Trial& src = in.subjects[s].trials[k];
        Trial& dst = out.subjects[s].trials[k];
        const double fs_in = src.fs();
        dst.eeg = preprocess_signal(src.eeg, cfg);
        dst.envelope1 = preprocess_signal(MultichannelSignal::from_vector(src.envelope1, fs_in), cfg).channel(0);
        dst.envelope2 = preprocess_signal(MultichannelSignal::from_vector(src.envelope2, fs_in), cfg).channel(0);
        const Index n_out = dst.eeg.n_samples();
        std::vector<AttentionLabels::Run> runs;
        for (const auto& r : src.labels.runs()) {
            const auto start = static_cast<Index>(std::llround(static_cast<double>(r.start) * cfg.target_fs / fs_in));
            if (!runs.empty() && start <= runs.back().start)
                continue;
            runs.push_back({std::min(start, n_out - 1), r.label});
        }
        dst.labels = AttentionLabels(std::move(runs), n_out);
        if (dst.original_fs <= 0.0)
            dst.original_fs = fs_in;
        const std::string step = "bandpass " + std::to_string(cfg.band_low_hz) + "-" + std::to_string(cfg.band_high_hz)
                                 + " Hz (order " + std::to_string(cfg.band_order) + ", zero-phase); resample to "
                                 + std::to_string(cfg.target_fs) + " Hz; z-score per trial";
        dst.preprocessing = dst.preprocessing.empty() ? step : dst.preprocessing + "; " + step;
    });
    return out;
}

/// Negative control: reassign every trial's envelope pair to a different
/// trial (a seeded derangement over the whole dataset), keeping EEG and
/// labels. Envelopes are truncated/wrapped to each trial's length.
inline Dataset shuffle_envelopes(const Dataset& in, std::uint64_t seed)
{
    std::vector<std::pair<std::size_t, std::size_t>> refs;
    for (std::size_t s = 0; s < in.subjects.size(); ++s)
        for (std::size_t t = 0; t < in.subjects[s].trials.size(); ++t)
            refs.emplace_back(s, t);
    if (refs.size() < 2)
        fail(ErrorCode::Config, "envelope shuffling needs at least two trials");

    std::vector<std::size_t> perm(refs.size());
    for (std::size_t i = 0; i < perm.size(); ++i)
        perm[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    // Cyclic successor in a random order is a derangement.
    std::vector<std::size_t> source(refs.size());
    for (std::size_t i = 0; i < perm.size(); ++i)
        source[perm[i]] = perm[(i + 1) % perm.size()];

    Dataset out = in;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const Trial& from = in.subjects[refs[source[i]].first].trials[refs[source[i]].second];
        Trial& to = out.subjects[refs[i].first].trials[refs[i].second];
        const Index n = to.n_samples();
        Vector e1(n), e2(n);
        for (Index t = 0; t < n; ++t) {
            e1(t) = from.envelope1(t % from.envelope1.size());
            e2(t) = from.envelope2(t % from.envelope2.size());
        }
        to.envelope1 = std::move(e1);
        to.envelope2 = std::move(e2);
    }
    out.name = in.name + "+shuffled-envelopes";
    out.provenance["control"] = {{"kind", "shuffled-envelopes"}, {"seed", seed}};
    return out;
}

} // namespace aad
