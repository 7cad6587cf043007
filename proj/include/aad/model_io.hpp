#pragma once

#include "aad/dataset.hpp"
#include "aad/decoder.hpp"
#include "aad/error.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <string>

namespace aad {

inline constexpr std::string_view decoder_format_tag = "aad-decoder";

/// <dir>/decoder.json plus d.f64 (p x 1), rxx.f64 (p x p), rxs.f64 (p x 1).
inline std::filesystem::path save_decoder(const DecoderModel& model, const std::filesystem::path& dir,
                                          const nlohmann::json& provenance = nlohmann::json::object())
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        fail(ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());
    write_blob(dir / "d.f64", model.d);
    write_blob(dir / "rxx.f64", model.Rxx);
    write_blob(dir / "rxs.f64", model.rxs);
    const nlohmann::json j{{"format", decoder_format_tag},
                           {"version", 1},
                           {"n_coefficients", model.d.size()},
                           {"n_channels", model.n_channels},
                           {"n_lags", model.n_lags},
                           {"first_lag", model.first_lag},
                           {"fs", model.fs},
                           {"lags_ms", {model.lag_min_ms, model.lag_max_ms}},
                           {"n_samples", model.n_samples},
                           {"lambda", model.lambda},
                           {"nu", model.nu},
                           {"relative_residual", model.relative_residual},
                           {"layout", "channel-major, lag-minor: index c*n_lags + l"},
                           {"provenance", provenance}};
    const auto path = dir / "decoder.json";
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
    return path;
}

inline DecoderModel load_decoder(const std::filesystem::path& path)
{
    const auto json_path = std::filesystem::is_directory(path) ? path / "decoder.json" : path;
    if (!std::filesystem::exists(json_path))
        fail(ErrorCode::MissingFile, "decoder '" + json_path.string() + "' not found");
    nlohmann::json j;
    try {
        std::ifstream in(json_path);
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::Schema, json_path.string() + ": invalid JSON (" + e.what() + ")");
    }
    const auto where = json_path.string();
    if (j.value("format", "") != decoder_format_tag)
        fail(ErrorCode::Schema, where + ": not an aad-decoder file");
    DecoderModel m;
    try {
        const auto p = j.at("n_coefficients").get<Index>();
        m.n_channels = j.at("n_channels").get<Index>();
        m.n_lags = j.at("n_lags").get<Index>();
        m.first_lag = j.at("first_lag").get<Index>();
        m.fs = j.at("fs").get<double>();
        m.lag_min_ms = j.at("lags_ms").at(0).get<double>();
        m.lag_max_ms = j.at("lags_ms").at(1).get<double>();
        m.n_samples = j.at("n_samples").get<Index>();
        m.lambda = j.at("lambda").get<double>();
        m.nu = j.at("nu").get<double>();
        m.relative_residual = j.at("relative_residual").get<double>();
        if (p != m.n_channels * m.n_lags)
            fail(ErrorCode::CorruptDataset, where + ": n_coefficients != n_channels * n_lags");
        const auto root = json_path.parent_path();
        m.d = read_blob(root / "d.f64", p, 1);
        m.Rxx = read_blob(root / "rxx.f64", p, p);
        m.rxs = read_blob(root / "rxs.f64", p, 1);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Schema, where + ": " + e.what());
    }
    return m;
}

} // namespace aad
