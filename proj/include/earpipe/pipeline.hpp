#pragma once

// End-to-end processing of one session and the report writers shared with
// the command-line tool.

#include "earpipe/analysis.hpp"
#include "earpipe/cardiac.hpp"
#include "earpipe/config.hpp"
#include "earpipe/ingest.hpp"
#include "earpipe/spectral.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace earpipe::pipeline {

struct BandRow {
    std::string participant;
    std::string condition;
    std::string channel;
    std::string band;
    double power_db = 0.0;
};

std::vector<BandRow> band_rows(const std::string& participant, const std::string& condition,
                               const std::vector<std::string>& channels, const Eigen::MatrixXd& power_db,
                               const std::vector<spectral::BandDefinition>& bands);
void write_bands_csv(const std::filesystem::path& path, const std::vector<BandRow>& rows);

/// Welch over the parts of x not masked out; windows from every usable run
/// are averaged with equal weight. Returns nullopt when no window fits.
std::optional<spectral::PsdEstimate> masked_welch(const Recording& rec, const std::vector<bool>& usable,
                                                  const spectral::WelchConfig& cfg);

/// One beat time per line; an optional header line is skipped.
cardiac::BeatSeries read_beats_csv(const std::filesystem::path& path);
void write_beats_csv(const std::filesystem::path& path, const cardiac::BeatSeries& beats);

/// beat_time_s,rr_ms,flag with flag "ok" or "outlier"; beat_time_s is the
/// first beat of each interval.
void write_rr_csv(const std::filesystem::path& path, const std::vector<cardiac::RrSeries>& parts,
                  const cardiac::RrFilterConfig& cfg);

nlohmann::json integrity_json(const ingest::IntegrityReport& r);
/// Field layout shared by every agreement report.
nlohmann::json agreement_json(const stats::BlandAltmanReport& r);
nlohmann::json bland_altman_json(const cardiac::BeatSeries& ref, const cardiac::BeatSeries& alt, double tolerance);
nlohmann::json fit_json(const stats::RegressionFit& fit);
nlohmann::json contrast_json(const stats::ContrastTable& t);
nlohmann::json analysis_json(const analysis::Report& r);

/// Pretty-printed with a trailing newline; non-finite numbers become null.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

std::string format_number(double v);

struct RunSummary {
    std::vector<std::filesystem::path> written;
    std::vector<std::string> notes;
};

/// Runs the configured stages and writes bands.csv, qc.json, rr.csv,
/// bland_altman.json, regression.json and run_meta.json into output_dir.
/// Everything except run_meta.json is a pure function of config and inputs.
RunSummary run(const config::PipelineConfig& cfg, const std::filesystem::path& config_path = {});

} // namespace earpipe::pipeline
