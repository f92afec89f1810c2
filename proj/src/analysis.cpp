#include "earpipe/analysis.hpp"

#include "earpipe/recording.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace earpipe::analysis {

namespace {

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ','))
        out.push_back(cell);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    for (auto& c : out) {
        while (!c.empty() && (c.back() == '\r' || c.back() == ' '))
            c.pop_back();
        while (!c.empty() && c.front() == ' ')
            c.erase(c.begin());
    }
    return out;
}

std::optional<double> parse_cell(const std::string& s, const std::string& where)
{
    if (s.empty() || s == "NA" || s == "nan")
        return std::nullopt;
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw DataError(where + ": non-numeric value '" + s + "'");
    return v;
}

struct Cell {
    std::string participant;
    std::string condition;
    double power = 0.0;
    std::optional<double> tlx;
    std::optional<double> flow;
};

// One value per (participant, condition[, channel]) in first-appearance order.
std::vector<Cell> cells_for_band(const std::vector<TableRow>& rows, const std::string& band, config::ChannelMode mode)
{
    std::vector<Cell> out;
    std::map<std::pair<std::string, std::string>, std::pair<std::size_t, int>> index;
    for (const auto& r : rows) {
        if (r.band != band)
            continue;
        if (mode == config::ChannelMode::Pooled) {
            out.push_back({r.participant, r.condition, r.power_db, r.tlx_total, r.flow_mean});
            continue;
        }
        auto key = std::make_pair(r.participant, r.condition);
        auto it = index.find(key);
        if (it == index.end()) {
            index[key] = {out.size(), 1};
            out.push_back({r.participant, r.condition, r.power_db, r.tlx_total, r.flow_mean});
        } else {
            auto& c = out[it->second.first];
            c.power += r.power_db;
            it->second.second += 1;
            if (!c.tlx)
                c.tlx = r.tlx_total;
            if (!c.flow)
                c.flow = r.flow_mean;
        }
    }
    if (mode == config::ChannelMode::Mean)
        for (const auto& [key, v] : index)
            out[v.first].power /= v.second;
    return out;
}

RegressionResult regress(const std::vector<Cell>& cells, bool workload, const config::AnalysisConfig& cfg)
{
    RegressionResult res;
    res.response = workload ? "tlx_total" : "flow_mean";
    res.predictor = "power_db";
    std::vector<std::string> groups;
    std::vector<double> x;
    std::vector<double> y;
    for (const auto& c : cells) {
        const auto& score = workload ? c.tlx : c.flow;
        if (!score)
            continue;
        if (workload && cfg.workload_exclude.count(c.condition))
            continue;
        if (!workload && !cfg.flow_conditions.empty() && !cfg.flow_conditions.count(c.condition))
            continue;
        groups.push_back(c.participant);
        x.push_back(c.power);
        y.push_back(*score);
    }
    if (x.empty()) {
        res.note = "no rows with " + res.response;
        return res;
    }
    try {
        const auto zx = stats::z_standardize(groups, x);
        const auto zy = stats::z_standardize(groups, y);
        res.fit = workload ? stats::fit_linear(zx, zy) : stats::fit_quadratic_orthogonal(zx, zy);
    } catch (const DataError& e) {
        res.note = e.what();
    }
    return res;
}

std::optional<stats::ContrastTable> contrasts(const std::vector<stats::Observation>& obs, std::vector<std::string>& notes,
                                              const std::string& what)
{
    if (obs.empty())
        return std::nullopt;
    try {
        return stats::pairwise_contrasts(obs);
    } catch (const DataError& e) {
        notes.push_back(what + ": " + e.what());
        return std::nullopt;
    }
}

} // namespace

std::vector<TableRow> read_table(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open analysis table: " + path.string());
    std::string line;
    if (!std::getline(in, line))
        throw DataError("analysis table is empty: " + path.string());
    const auto header = split_csv(line);
    auto col = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name)
                return i;
        return std::nullopt;
    };
    const auto participant = col("participant");
    const auto condition = col("condition");
    const auto channel = col("channel");
    const auto band = col("band");
    const auto power = col("power_db");
    if (!participant || !condition || !channel || !band || !power)
        throw DataError(path.string() + ": header must contain participant,condition,channel,band,power_db");
    const auto tlx = col("tlx_total");
    const auto flow = col("flow_mean");

    std::vector<TableRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r")
            continue;
        const auto cells = split_csv(line);
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (cells.size() < header.size())
            throw DataError(where + ": expected " + std::to_string(header.size()) + " columns");
        TableRow r;
        r.participant = cells[*participant];
        r.condition = cells[*condition];
        r.channel = cells[*channel];
        r.band = cells[*band];
        const auto p = parse_cell(cells[*power], where);
        if (!p)
            throw DataError(where + ": power_db is missing");
        r.power_db = *p;
        if (tlx)
            r.tlx_total = parse_cell(cells[*tlx], where);
        if (flow)
            r.flow_mean = parse_cell(cells[*flow], where);
        rows.push_back(std::move(r));
    }
    return rows;
}

Report run(const std::vector<TableRow>& rows, const config::AnalysisConfig& cfg)
{
    Report report;
    std::vector<std::string> bands;
    for (const auto& r : rows)
        if (std::find(bands.begin(), bands.end(), r.band) == bands.end())
            bands.push_back(r.band);
    if (bands.empty())
        throw DataError("analysis table has no rows");

    for (const auto& band : bands) {
        BandResult br;
        br.band = band;
        const auto cells = cells_for_band(rows, band, cfg.channel_mode);
        std::vector<stats::Observation> obs;
        for (const auto& c : cells)
            obs.push_back({c.participant, c.condition, c.power});
        br.contrasts = contrasts(obs, report.notes, band);
        br.workload = regress(cells, true, cfg);
        br.flow = regress(cells, false, cfg);
        report.bands.push_back(std::move(br));
    }

    // survey scores are per participant-condition; take them from the first band
    const auto cells = cells_for_band(rows, bands.front(), config::ChannelMode::Mean);
    std::vector<stats::Observation> tlx;
    std::vector<stats::Observation> flow;
    for (const auto& c : cells) {
        if (c.tlx)
            tlx.push_back({c.participant, c.condition, *c.tlx});
        if (c.flow && (cfg.flow_conditions.empty() || cfg.flow_conditions.count(c.condition)))
            flow.push_back({c.participant, c.condition, *c.flow});
    }
    report.tlx_contrasts = contrasts(tlx, report.notes, "tlx_total");
    report.flow_contrasts = contrasts(flow, report.notes, "flow_mean");
    return report;
}

} // namespace earpipe::analysis
