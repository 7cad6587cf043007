#pragma once

#include "aad/dataset.hpp"
#include "aad/error.hpp"

#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

namespace aad {

// Intermediate export layout, written by external scripts from the public
// recordings (see README):
//
//   <dir>/export.json
//   {
//     "name": "...", "provenance": {...},             (provenance optional)
//     "subjects": [{"id": "S01", "trials": [{
//         "id": "...", "condition": "no_visuals", "trial_index": 1,
//         "fs": 128, "n_samples": 76800, "n_channels": 64,
//         "channel_labels": [...],                     (optional)
//         "eeg": "S01/t1_eeg.f64",                     (n_samples x n_channels)
//         "envelope_1": "...", "envelope_2": "...",    (n_samples)
//         "initial_label": 1,                          (optional, default 1)
//         "switch_sample": 38400,
//         "original_fs": 8192                          (optional)
//     }]}]
//   }
//
// Blobs use the container encoding (float64 LE, time-major).

inline constexpr std::string_view export_filename = "export.json";

struct ConvertOptions {
    double expected_duration_s = 600.0; // 0 disables the duration check
};

inline Dataset convert_export(const std::filesystem::path& path, const ConvertOptions& opts = {})
{
    namespace fs = std::filesystem;
    const fs::path json_path = fs::is_directory(path) ? path / export_filename : path;
    if (!fs::exists(json_path))
        fail(ErrorCode::MissingFile, "export '" + json_path.string() + "' not found");
    const fs::path root = json_path.parent_path();
    const std::string where = json_path.string();

    nlohmann::json m;
    try {
        std::ifstream in(json_path);
        m = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::Schema, where + ": invalid JSON (" + e.what() + ")");
    }

    Dataset ds;
    detail::warn_unknown(m, {"name", "provenance", "subjects"}, where, ds.warnings);
    ds.name = detail::require<std::string>(m, "name", where);
    ds.provenance = {{"converted_from", "intermediate export"}};
    if (m.contains("provenance"))
        ds.provenance["export_provenance"] = m["provenance"];

    for (const auto& js : detail::require<nlohmann::json>(m, "subjects", where)) {
        Subject s;
        s.id = detail::require<std::string>(js, "id", where + " subject");
        detail::warn_unknown(js, {"id", "trials"}, where + " subject " + s.id, ds.warnings);
        for (const auto& jt : detail::require<nlohmann::json>(js, "trials", where + " subject " + s.id)) {
            Trial t;
            t.id = detail::require<std::string>(jt, "id", where + " subject " + s.id + " trial");
            const std::string tw = where + " subject " + s.id + " trial " + t.id;
            detail::warn_unknown(jt, {"id", "condition", "trial_index", "fs", "n_samples", "n_channels", "channel_labels",
                                      "eeg", "envelope_1", "envelope_2", "initial_label", "switch_sample", "original_fs"},
                                 tw, ds.warnings);
            t.condition = parse_condition(detail::require<std::string>(jt, "condition", tw));
            t.trial_index = detail::require<int>(jt, "trial_index", tw);
            const auto n = detail::require<Index>(jt, "n_samples", tw);
            const auto c = detail::require<Index>(jt, "n_channels", tw);
            const auto fs_hz = detail::require<double>(jt, "fs", tw);
            if (n < 2 || c < 1 || !(fs_hz > 0.0))
                fail(ErrorCode::Schema, tw + ": invalid shape or rate");
            if (opts.expected_duration_s > 0.0
                && std::abs(static_cast<double>(n) - opts.expected_duration_s * fs_hz) > 1.0)
                fail(ErrorCode::Schema, tw + ": field 'n_samples' gives " + std::to_string(static_cast<double>(n) / fs_hz)
                                            + " s, expected " + std::to_string(opts.expected_duration_s) + " s");
            if (!jt.contains("switch_sample"))
                fail(ErrorCode::Schema, tw + ": missing required field 'switch_sample' (attention switch at the midpoint)");
            const auto sw = detail::require<Index>(jt, "switch_sample", tw);
            if (std::abs(2 * sw - n) > 1)
                fail(ErrorCode::Schema, tw + ": field 'switch_sample' = " + std::to_string(sw)
                                            + " is not the trial midpoint (" + std::to_string(n / 2) + ")");
            const int first = jt.value("initial_label", 1);
            if (first != 1 && first != 2)
                fail(ErrorCode::Schema, tw + ": field 'initial_label' must be 1 or 2");

            std::vector<std::string> labels;
            if (jt.contains("channel_labels"))
                labels = detail::require<std::vector<std::string>>(jt, "channel_labels", tw);
            if (!labels.empty() && static_cast<Index>(labels.size()) != c)
                fail(ErrorCode::Schema, tw + ": field 'channel_labels' has " + std::to_string(labels.size()) + " entries");
            t.eeg = MultichannelSignal(read_blob(root / detail::require<std::string>(jt, "eeg", tw), n, c), fs_hz,
                                       std::move(labels));
            t.envelope1 = read_blob(root / detail::require<std::string>(jt, "envelope_1", tw), n, 1).col(0);
            t.envelope2 = read_blob(root / detail::require<std::string>(jt, "envelope_2", tw), n, 1).col(0);
            t.labels = AttentionLabels({{0, first}, {sw, 3 - first}}, n);
            t.original_fs = jt.value("original_fs", fs_hz);
            t.preprocessing = "converted from intermediate export";
            t.validate();
            s.trials.push_back(std::move(t));
        }
        ds.subjects.push_back(std::move(s));
    }
    return ds;
}

} // namespace aad
