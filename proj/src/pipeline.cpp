#include "earpipe/pipeline.hpp"

#include "earpipe/artifact.hpp"
#include "earpipe/filters.hpp"
#include "earpipe/montage.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace earpipe::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_number(double v)
{
    if (std::isnan(v))
        return "nan";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

namespace {

json number(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

json optional_number(const std::optional<double>& v)
{
    return v ? number(*v) : json(nullptr);
}

std::ofstream open_out(const fs::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    return out;
}

Recording concat(const std::vector<Recording>& parts)
{
    Recording out = parts.front();
    Eigen::Index total = 0;
    for (const auto& p : parts)
        total += p.samples();
    out.data.resize(parts.front().channels(), total);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.data.middleCols(at, p.samples()) = p.data;
        at += p.samples();
    }
    out.events.clear();
    out.edge_samples = 0;
    return out;
}

std::string utc_now()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

} // namespace

std::vector<BandRow> band_rows(const std::string& participant, const std::string& condition,
                               const std::vector<std::string>& channels, const Eigen::MatrixXd& power_db,
                               const std::vector<spectral::BandDefinition>& bands)
{
    std::vector<BandRow> rows;
    for (Eigen::Index c = 0; c < power_db.rows(); ++c)
        for (std::size_t b = 0; b < bands.size(); ++b)
            rows.push_back({participant, condition, channels.at(static_cast<std::size_t>(c)), bands[b].name,
                            power_db(c, static_cast<Eigen::Index>(b))});
    return rows;
}

void write_bands_csv(const fs::path& path, const std::vector<BandRow>& rows)
{
    auto out = open_out(path);
    out << "participant,condition,channel,band,power_db\n";
    for (const auto& r : rows)
        out << r.participant << ',' << r.condition << ',' << r.channel << ',' << r.band << ','
            << format_number(r.power_db) << '\n';
}

std::optional<spectral::PsdEstimate> masked_welch(const Recording& rec, const std::vector<bool>& usable,
                                                  const spectral::WelchConfig& cfg)
{
    std::optional<spectral::PsdEstimate> acc;
    const Eigen::Index n = rec.samples();
    Eigen::Index i = 0;
    while (i < n) {
        if (!usable[static_cast<std::size_t>(i)]) {
            ++i;
            continue;
        }
        Eigen::Index j = i;
        while (j < n && usable[static_cast<std::size_t>(j)])
            ++j;
        if (j - i >= cfg.segment) {
            auto part = spectral::welch_psd(rec.with_data(rec.data.middleCols(i, j - i)), cfg);
            part.power *= static_cast<double>(part.window_count);
            if (!acc) {
                acc = std::move(part);
            } else {
                acc->power += part.power;
                acc->window_count += part.window_count;
            }
        }
        i = j;
    }
    if (acc)
        acc->power /= static_cast<double>(acc->window_count);
    return acc;
}

cardiac::BeatSeries read_beats_csv(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open beats file: " + path.string());
    cardiac::BeatSeries beats;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto comma = line.find(',');
        std::string cell = line.substr(0, comma);
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' '))
            cell.pop_back();
        if (cell.empty())
            continue;
        double v = 0.0;
        auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc{} || p != cell.data() + cell.size()) {
            if (lineno == 1)
                continue;
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-numeric beat time");
        }
        if (!beats.beat_times.empty() && v <= beats.beat_times.back())
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": beat times must increase");
        beats.beat_times.push_back(v);
    }
    return beats;
}

void write_beats_csv(const fs::path& path, const cardiac::BeatSeries& beats)
{
    auto out = open_out(path);
    out << "beat_time_s\n";
    for (double t : beats.beat_times)
        out << format_number(t) << '\n';
}

void write_rr_csv(const fs::path& path, const std::vector<cardiac::RrSeries>& parts, const cardiac::RrFilterConfig& cfg)
{
    auto out = open_out(path);
    out << "beat_time_s,rr_ms,flag\n";
    for (const auto& rr : parts) {
        if (rr.intervals_ms.empty())
            continue;
        const auto filtered = cardiac::rr_outlier_filter(rr, cfg);
        for (std::size_t i = 0; i < rr.intervals_ms.size(); ++i)
            out << format_number(rr.anchored_at[i]) << ',' << format_number(rr.intervals_ms[i]) << ','
                << (filtered.dropped[i] ? "outlier" : "ok") << '\n';
    }
}

json integrity_json(const ingest::IntegrityReport& r)
{
    return json{{"expected_samples", r.expected_samples},
                {"actual_samples", r.actual_samples},
                {"first_t", number(r.first_t)},
                {"last_t", number(r.last_t)},
                {"dropped_packets", r.dropped_packets},
                {"resyncs", r.resyncs},
                {"discarded_packets", r.discarded_packets},
                {"flagged", r.flagged},
                {"flag_reason", r.flag_reason}};
}

json bland_altman_json(const cardiac::BeatSeries& ref, const cardiac::BeatSeries& alt, double tolerance)
{
    const auto match = cardiac::match_beats(ref, alt, tolerance);
    const auto paired = cardiac::matched_intervals(ref, alt, match);
    json j{{"reference_beats", ref.beat_times.size()},
           {"detected_beats", alt.beat_times.size()},
           {"matched_beats", match.pairs.size()},
           {"unmatched_reference", match.unmatched_ref},
           {"unmatched_detected", match.unmatched_alt},
           {"tolerance_s", tolerance},
           {"paired_intervals", paired.ref_ms.size()}};
    if (paired.ref_ms.size() < 3) {
        j["status"] = "insufficient_pairs";
        return j;
    }
    j["status"] = "ok";
    j.update(agreement_json(stats::bland_altman(paired.ref_ms, paired.alt_ms)));
    return j;
}

json agreement_json(const stats::BlandAltmanReport& ba)
{
    return json{{"n", ba.n},
                {"mean_abs_diff_ms", number(ba.mean_abs_diff)},
                {"mean_diff_ms", number(ba.mean_diff)},
                {"sd_diff_ms", number(ba.sd_diff)},
                {"gaussian_loa_ms", number(ba.gaussian_loa)},
                {"iqr_diff_ms", number(ba.iqr_diff)},
                {"nonparametric_loa_ms", number(ba.nonparametric_loa)},
                {"percentile_2_5_ms", number(ba.percentile_2_5)},
                {"percentile_97_5_ms", number(ba.percentile_97_5)},
                {"pearson_r", optional_number(ba.pearson_r)}};
}

json fit_json(const stats::RegressionFit& fit)
{
    json coefs = json::array();
    for (const auto& c : fit.coefficients)
        coefs.push_back({{"name", c.name}, {"estimate", number(c.estimate)}, {"se", number(c.se)}, {"t", number(c.t)},
                         {"p", number(c.p)}});
    json j{{"model", fit.model == stats::Model::Linear ? "linear" : "quadratic_orthogonal"},
           {"n", fit.n},
           {"dof", fit.dof},
           {"r_squared", number(fit.r_squared)},
           {"residual_sd", number(fit.residual_sd)},
           {"coefficients", coefs}};
    if (fit.model == stats::Model::QuadraticOrthogonal)
        j["basis"] = {{"mean", fit.basis.mean}, {"sq_offset", fit.basis.sq_offset}, {"slope", fit.basis.slope}};
    return j;
}

json contrast_json(const stats::ContrastTable& t)
{
    json rows = json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"a", r.condition_a},
                        {"b", r.condition_b},
                        {"n", r.n},
                        {"mean_diff", number(r.mean_diff)},
                        {"t", number(r.t)},
                        {"raw_p", number(r.raw_p)},
                        {"adjusted_p", number(r.adjusted_p)}});
    return json{{"conditions", t.conditions},   {"f", number(t.f)}, {"df_condition", number(t.df_condition)},
                {"df_error", number(t.df_error)}, {"p", number(t.p)}, {"balanced", t.balanced},
                {"pairwise", rows}};
}

json analysis_json(const analysis::Report& r)
{
    auto reg = [](const analysis::RegressionResult& res) {
        json j{{"response", res.response}, {"predictor", res.predictor}};
        if (res.fit) {
            j["fit"] = fit_json(*res.fit);
        } else {
            j["fit"] = nullptr;
            j["note"] = res.note;
        }
        return j;
    };
    json bands = json::array();
    for (const auto& b : r.bands)
        bands.push_back({{"band", b.band},
                         {"contrasts", b.contrasts ? contrast_json(*b.contrasts) : json(nullptr)},
                         {"workload", reg(b.workload)},
                         {"flow", reg(b.flow)}});
    return json{{"status", "ok"},
                {"bands", bands},
                {"tlx_contrasts", r.tlx_contrasts ? contrast_json(*r.tlx_contrasts) : json(nullptr)},
                {"flow_contrasts", r.flow_contrasts ? contrast_json(*r.flow_contrasts) : json(nullptr)},
                {"notes", r.notes}};
}

void write_json(const fs::path& path, const json& j)
{
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

namespace {

struct SegmentState {
    std::string condition;
    ingest::IntegrityReport report;
    Recording rec;
    std::vector<bool> usable;
    std::optional<artifact::AsrOutput> asr;
    std::size_t psd_windows = 0;
};

void run_ica(const config::PipelineConfig& cfg, std::vector<SegmentState>& segs, json& qc,
             std::vector<cardiac::RrSeries>& rr_parts, cardiac::BeatSeries& detected, RunSummary& sum)
{
    std::vector<Recording> parts;
    for (const auto& s : segs)
        parts.push_back(s.rec);
    const Recording all = concat(parts);
    const Eigen::Index k = cfg.ica_components > 0 ? std::min<Eigen::Index>(cfg.ica_components, all.channels())
                                                  : all.channels();
    const auto ica = artifact::ica_decompose(all, k, *cfg.ica_seed, cfg.ica);
    json info{{"components", ica.components()},
              {"iterations", ica.iterations},
              {"converged", ica.converged},
              {"warnings", ica.warnings},
              {"ecg_component", nullptr}};

    const auto pick = artifact::select_ecg_ic(ica, all.rate, cfg.ecg_min_score);
    if (!pick) {
        sum.notes.push_back("no independent component passed the ECG score threshold");
        qc["ica"] = info;
        return;
    }
    info["ecg_component"] = {{"index", pick->index},
                             {"score", number(pick->score)},
                             {"inverted", pick->inverted},
                             {"kurtosis", number(pick->kurtosis)}};
    Eigen::VectorXd source = ica.sources.row(pick->index).transpose();
    if (pick->inverted)
        source = -source;

    detected.rate = all.rate;
    Eigen::Index at = 0;
    for (const auto& s : segs) {
        const Eigen::Index n = s.rec.samples();
        try {
            auto beats = cardiac::pan_tompkins(source.segment(at, n), all.rate);
            for (double& t : beats.beat_times)
                t += s.rec.start_s;
            rr_parts.push_back(cardiac::rr_periods(beats));
            detected.beat_times.insert(detected.beat_times.end(), beats.beat_times.begin(), beats.beat_times.end());
        } catch (const DataError& e) {
            sum.notes.push_back("ECG detection skipped for segment '" + s.condition + "': " + e.what());
        }
        at += n;
    }
    std::sort(detected.beat_times.begin(), detected.beat_times.end());
    detected.beat_times.erase(std::unique(detected.beat_times.begin(), detected.beat_times.end()),
                              detected.beat_times.end());
    qc["ica"] = info;
}

void run_asr(const config::PipelineConfig& cfg, std::vector<SegmentState>& segs)
{
    std::vector<Recording> parts;
    for (const auto& s : segs)
        parts.push_back(s.rec);
    const auto model = artifact::asr_calibrate(concat(parts), cfg.asr);
    for (auto& s : segs) {
        auto out = artifact::asr_process(s.rec, model, cfg.asr);
        const auto edge = s.rec.edge_samples;
        s.rec = out.cleaned;
        s.rec.edge_samples = edge;
        for (std::size_t w = 0; w < out.flagged_windows.size(); ++w) {
            if (!out.flagged_windows[w])
                continue;
            const Eigen::Index b = out.window_starts[w];
            const Eigen::Index e = std::min(b + out.window_length, s.rec.samples());
            for (Eigen::Index i = b; i < e; ++i)
                s.usable[static_cast<std::size_t>(i)] = false;
        }
        s.asr = std::move(out);
    }
}

} // namespace

RunSummary run(const config::PipelineConfig& cfg_in, const fs::path& config_path)
{
    const std::string started = utc_now();
    config::validate(cfg_in);
    RunSummary sum;

    if (!fs::exists(cfg_in.session))
        throw DataError("session file not found: " + cfg_in.session.string());
    const Recording rec = ingest::read_session_csv(cfg_in.session, cfg_in.rate);
    config::PipelineConfig cfg = cfg_in;
    if (rec.rate != cfg.rate) {
        cfg.rate = rec.rate;
        config::validate(cfg);
    }

    const auto mont = cfg.montage ? montage::read_montage_csv(*cfg.montage) : montage::default_montage();
    if (const auto problems = montage::validate(mont); !problems.empty()) {
        std::string msg = "montage violates:";
        for (const auto& p : problems)
            msg += " " + p;
        throw ConfigError(msg);
    }

    std::vector<ingest::Segment> cut;
    if (cfg.enabled(config::Stage::Cut)) {
        if (!cfg.events)
            throw ConfigError("the cut stage needs an 'events' file");
        if (!fs::exists(*cfg.events))
            throw DataError("events file not found: " + cfg.events->string());
        cut = ingest::cut_segments(rec, ingest::read_events_csv(*cfg.events));
    } else {
        ingest::Segment whole;
        whole.condition = "all";
        whole.rec = rec;
        whole.report.expected_samples = whole.report.actual_samples = static_cast<std::size_t>(rec.samples());
        whole.report.first_t = rec.start_s;
        whole.report.last_t = rec.start_s + static_cast<double>(std::max<Eigen::Index>(0, rec.samples() - 1)) / rec.rate;
        cut.push_back(std::move(whole));
    }

    json qc{{"participant", cfg.participant}, {"rate", cfg.rate}, {"channels", rec.labels}};
    json stages = json::array();
    for (auto s : cfg.stages)
        stages.push_back(config::stage_name(s));
    qc["stages"] = stages;

    std::vector<SegmentState> segs;
    json seg_json = json::array();
    for (auto& c : cut) {
        if (c.rec.samples() == 0) {
            sum.notes.push_back("segment '" + c.condition + "' is empty: " + c.report.flag_reason);
            continue;
        }
        SegmentState s;
        s.condition = c.condition;
        s.report = c.report;
        Recording work = c.rec;
        if (cfg.enabled(config::Stage::Baseline))
            work = filters::baseline_correct(work);
        if (cfg.enabled(config::Stage::Reref))
            work = montage::rereference_linked_mastoid(work, mont);
        if (cfg.enabled(config::Stage::LineNoise))
            work = filters::remove_line_noise(work, cfg.line_noise);
        if (cfg.enabled(config::Stage::Highpass))
            work = filters::apply_zero_phase(work, filters::design_fir(cfg.highpass, work.rate));
        if (cfg.enabled(config::Stage::Lowpass))
            work = filters::apply_zero_phase(work, filters::design_fir(cfg.lowpass, work.rate));
        s.rec = std::move(work);
        s.usable.assign(static_cast<std::size_t>(s.rec.samples()), true);
        segs.push_back(std::move(s));
    }
    if (segs.empty())
        throw DataError("no non-empty segments to process");

    std::vector<cardiac::RrSeries> rr_parts;
    cardiac::BeatSeries detected;
    detected.rate = cfg.rate;
    for (auto s : cfg.stages) {
        if (s == config::Stage::Ica)
            run_ica(cfg, segs, qc, rr_parts, detected, sum);
        else if (s == config::Stage::Asr)
            run_asr(cfg, segs);
    }

    std::vector<BandRow> rows;
    json cond_json = json::array();
    if (cfg.enabled(config::Stage::Psd)) {
        std::vector<std::string> conditions;
        for (const auto& s : segs)
            if (std::find(conditions.begin(), conditions.end(), s.condition) == conditions.end())
                conditions.push_back(s.condition);
        for (auto& s : segs) {
            if (cfg.psd_exclude_edges) {
                const auto n = s.usable.size();
                const auto e = std::min(n, s.rec.edge_samples);
                std::fill(s.usable.begin(), s.usable.begin() + static_cast<std::ptrdiff_t>(e), false);
                std::fill(s.usable.end() - static_cast<std::ptrdiff_t>(e), s.usable.end(), false);
            }
        }
        for (const auto& cond : conditions) {
            std::vector<spectral::PsdEstimate> parts;
            std::vector<Recording> data;
            for (auto& s : segs) {
                if (s.condition != cond)
                    continue;
                data.push_back(s.rec);
                auto p = masked_welch(s.rec, s.usable, cfg.welch);
                if (!p) {
                    sum.notes.push_back("segment '" + cond + "' has no artifact-free Welch window");
                    continue;
                }
                s.psd_windows = static_cast<std::size_t>(p->window_count);
                parts.push_back(std::move(*p));
            }
            if (parts.empty())
                continue;
            spectral::PsdEstimate psd;
            if (cfg.psd_concatenate) {
                psd = parts.front();
                psd.power.setZero();
                psd.window_count = 0;
                for (const auto& p : parts) {
                    psd.power += p.power * static_cast<double>(p.window_count);
                    psd.window_count += p.window_count;
                }
                psd.power /= static_cast<double>(psd.window_count);
            } else {
                psd = spectral::mean_psd(parts);
            }
            json cj{{"condition", cond}, {"segments", parts.size()}, {"psd_windows", psd.window_count}};
            if (cfg.enabled(config::Stage::Bands)) {
                const auto bp = spectral::band_power(spectral::to_db(psd), cfg.bands);
                auto r = band_rows(cfg.participant, cond, rec.labels, bp, cfg.bands);
                rows.insert(rows.end(), r.begin(), r.end());
            }
            if (cfg.enabled(config::Stage::Qc)) {
                const auto q = spectral::qc_report(concat(data), psd, cfg.qc);
                json ch = json::array();
                for (std::size_t c = 0; c < q.channels.size(); ++c)
                    ch.push_back({{"label", rec.labels.at(c)},
                                  {"rms_uv", number(q.channels[c].rms_uv)},
                                  {"amplitude_typical", q.channels[c].amplitude_typical},
                                  {"hf_ratio", number(q.channels[c].hf_ratio)},
                                  {"line_ratio", number(q.channels[c].line_ratio)}});
                cj["channels"] = ch;
            }
            cond_json.push_back(cj);
        }
    }

    for (const auto& s : segs) {
        json j{{"condition", s.condition}, {"integrity", integrity_json(s.report)}, {"psd_windows", s.psd_windows},
               {"edge_samples", s.rec.edge_samples}};
        if (s.asr)
            j["asr"] = {{"windows", s.asr->flagged_windows.size()},
                        {"flagged_windows", s.asr->flagged_count()},
                        {"reconstructed_windows", s.asr->reconstructed_windows}};
        seg_json.push_back(j);
    }
    qc["segments"] = seg_json;
    qc["conditions"] = cond_json;

    json ba{{"status", "skipped"}, {"reason", "no reference_beats configured"}};
    if (cfg.reference_beats) {
        if (!fs::exists(*cfg.reference_beats))
            throw DataError("reference beats file not found: " + cfg.reference_beats->string());
        const auto ref = read_beats_csv(*cfg.reference_beats);
        if (detected.beat_times.empty())
            ba = json{{"status", "skipped"}, {"reason", "no beats detected"}};
        else
            ba = bland_altman_json(ref, detected, cfg.beat_tolerance_s);
    }

    json regression{{"status", "skipped"}, {"reason", "no analysis_table configured"}};
    if (cfg.analysis.table) {
        if (!fs::exists(*cfg.analysis.table))
            throw DataError("analysis table not found: " + cfg.analysis.table->string());
        regression = analysis_json(analysis::run(analysis::read_table(*cfg.analysis.table), cfg.analysis));
    }
    qc["notes"] = sum.notes;

    fs::create_directories(cfg.output_dir);
    auto emit = [&](const std::string& name) {
        const auto p = cfg.output_dir / name;
        sum.written.push_back(p);
        return p;
    };
    if (cfg.enabled(config::Stage::Bands))
        write_bands_csv(emit("bands.csv"), rows);
    write_json(emit("qc.json"), qc);
    write_rr_csv(emit("rr.csv"), rr_parts, cfg.rr_filter);
    write_json(emit("bland_altman.json"), ba);
    write_json(emit("regression.json"), regression);
    write_json(emit("run_meta.json"), json{{"started_utc", started},
                                           {"finished_utc", utc_now()},
                                           {"config", config_path.string()},
                                           {"session", cfg.session.string()}});
    return sum;
}

} // namespace earpipe::pipeline
