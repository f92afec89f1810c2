#pragma once

// Participant-level analysis over a band-power table with survey scores.

#include "earpipe/config.hpp"
#include "earpipe/stats.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace earpipe::analysis {

struct TableRow {
    std::string participant;
    std::string condition;
    std::string channel;
    std::string band;
    double power_db = 0.0;
    std::optional<double> tlx_total;
    std::optional<double> flow_mean;
};

/// Columns participant,condition,channel,band,power_db are required;
/// tlx_total and flow_mean are optional (empty cell = missing). Other
/// columns are ignored.
std::vector<TableRow> read_table(const std::filesystem::path& path);

struct RegressionResult {
    std::string response;
    std::string predictor;
    std::optional<stats::RegressionFit> fit;
    std::string note; ///< why the fit is absent
};

struct BandResult {
    std::string band;
    std::optional<stats::ContrastTable> contrasts;
    RegressionResult workload; ///< z(tlx) ~ z(power), linear
    RegressionResult flow;     ///< z(flow) ~ z(power), orthogonal quadratic
};

struct Report {
    std::vector<BandResult> bands;
    std::optional<stats::ContrastTable> tlx_contrasts;
    std::optional<stats::ContrastTable> flow_contrasts;
    std::vector<std::string> notes;
};

Report run(const std::vector<TableRow>& rows, const config::AnalysisConfig& cfg);

} // namespace earpipe::analysis
