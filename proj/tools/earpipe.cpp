// earpipe: command-line front end for the around-ear EEG pipeline.

#include "earpipe/analysis.hpp"
#include "earpipe/artifact.hpp"
#include "earpipe/cardiac.hpp"
#include "earpipe/config.hpp"
#include "earpipe/ingest.hpp"
#include "earpipe/montage.hpp"
#include "earpipe/pipeline.hpp"
#include "earpipe/spectral.hpp"
#include "earpipe/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace earpipe;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<double> line_freq;
};

int diagnose(const std::string& kind, const std::string& message, int code)
{
    std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
    return code;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int cmd_parse(const std::string& raw, const std::string& out, const std::string& report, bool single, double rate)
{
    ingest::StreamOptions opts;
    opts.daisy = !single;
    opts.rate = rate;
    const auto bytes = read_bytes(raw);
    const auto parsed = ingest::parse_stream(bytes, opts);
    Recording rec;
    if (parsed.frames.empty()) {
        rec.rate = rate;
        rec.labels = default_labels(single ? ingest::kChannelsPerPacket : 2 * ingest::kChannelsPerPacket);
        rec.data.resize(static_cast<Eigen::Index>(rec.labels.size()), 0);
    } else {
        rec = ingest::frames_to_recording(parsed.frames, rate);
    }
    ingest::write_session_csv(out, rec);
    const auto rep = pipeline::integrity_json(parsed.report);
    if (report.empty())
        std::cout << rep.dump(2) << '\n';
    else
        pipeline::write_json(report, rep);
    return 0;
}

synth::Sinusoid sine(const std::pair<double, double>& p)
{
    return {p.first, p.second};
}

int cmd_synth(const std::string& spec_path, const Globals& g, const std::string& out_override)
{
    auto spec = config::load_synth_spec(spec_path);
    if (g.seed)
        spec.seed = g.seed;
    if (!spec.seed)
        throw ConfigError("synth spec needs a 'seed' (or pass --seed)");
    const fs::path dir = out_override.empty() ? spec.output_dir : fs::path(out_override);
    fs::create_directories(dir);
    json truth{{"seed", *spec.seed}, {"rate", spec.rate}};

    Recording rec;
    std::optional<cardiac::BeatSeries> beats;
    switch (spec.kind) {
    case config::SynthKind::Eeg: {
        synth::EegSynthSpec s;
        s.rate = spec.rate;
        s.duration_s = spec.duration_s;
        s.seed = *spec.seed;
        s.channels = spec.channels;
        s.pink_noise_rms = spec.pink_noise_rms;
        for (const auto& c : spec.components)
            s.band_components.push_back(sine(c));
        if (spec.line_noise)
            s.line_noise = sine(*spec.line_noise);
        auto out = synth::gen_eeg(s);
        rec = std::move(out.rec);
        json comps = json::array();
        for (const auto& c : out.truth.components)
            comps.push_back({{"freq_hz", c.freq_hz}, {"amplitude_uv", c.amplitude_uv}});
        truth["kind"] = "eeg";
        truth["components"] = comps;
        truth["pink_noise_rms"] = out.truth.pink_noise_rms;
        truth["predicted_rms"] = out.truth.predicted_rms;
        break;
    }
    case config::SynthKind::Ecg: {
        synth::EcgSynthSpec s;
        s.rate = spec.rate;
        s.duration_s = spec.duration_s;
        s.bpm = spec.bpm;
        s.rr_jitter_ms = spec.rr_jitter_ms;
        s.r_amplitude = spec.r_amplitude;
        s.noise_snr_db = spec.snr_db;
        s.seed = *spec.seed;
        auto out = synth::gen_ecg(s);
        rec = std::move(out.rec);
        beats = out.true_beats;
        truth["kind"] = "ecg";
        truth["bpm"] = spec.bpm;
        break;
    }
    case config::SynthKind::Berger: {
        synth::BergerSpec s;
        s.rate = spec.rate;
        s.segment_s = spec.duration_s;
        s.channels = spec.channels;
        s.alpha_uv = spec.alpha_uv;
        s.closed_ratio = spec.closed_ratio;
        s.pink_noise_rms = spec.pink_noise_rms;
        if (spec.line_noise)
            s.line_noise = sine(*spec.line_noise);
        s.seed = *spec.seed;
        rec = synth::berger_session(s);
        truth["kind"] = "berger";
        truth["alpha_uv"] = spec.alpha_uv;
        truth["closed_ratio"] = spec.closed_ratio;
        truth["alpha_freqs"] = s.alpha_freqs;
        break;
    }
    case config::SynthKind::EcgInEeg: {
        synth::EcgInEegSpec s;
        s.rate = spec.rate;
        s.duration_s = spec.duration_s;
        s.channels = spec.channels;
        s.bpm = spec.bpm;
        s.rr_jitter_ms = spec.rr_jitter_ms;
        s.relative_db = spec.relative_db;
        s.pink_noise_rms = spec.pink_noise_rms;
        s.seed = *spec.seed;
        auto out = synth::ecg_in_eeg(s);
        rec = std::move(out.rec);
        beats = out.true_beats;
        truth["kind"] = "ecg_in_eeg";
        truth["ecg_weights"] = std::vector<double>(out.ecg_weights.data(), out.ecg_weights.data() + out.ecg_weights.size());
        break;
    }
    }
    ingest::write_session_csv(dir / "session.csv", rec);
    if (!rec.events.empty())
        ingest::write_events_csv(dir / "events.csv", rec.events);
    if (beats) {
        pipeline::write_beats_csv(dir / "beats.csv", *beats);
        truth["beats"] = beats->beat_times.size();
    }
    pipeline::write_json(dir / "truth.json", truth);
    return 0;
}

int cmd_run(const std::string& path, const Globals& g)
{
    if (path.empty())
        throw ConfigError("run needs --config <path>");
    auto cfg = config::load_pipeline_config(path);
    if (g.seed)
        cfg.ica_seed = g.seed;
    if (g.line_freq) {
        cfg.line_noise.f0_hz = *g.line_freq;
        cfg.qc.line_hz = *g.line_freq;
    }
    const auto sum = pipeline::run(cfg, path);
    json j{{"status", "ok"}, {"written", json::array()}, {"notes", sum.notes}};
    for (const auto& p : sum.written)
        j["written"].push_back(p.string());
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_bands(const std::string& session, const std::string& events, const std::string& out,
              const std::string& participant, std::optional<double> rate)
{
    const auto rec = ingest::read_session_csv(session, rate);
    std::vector<ingest::Segment> segs;
    if (!events.empty()) {
        segs = ingest::cut_segments(rec, ingest::read_events_csv(events));
    } else {
        segs.push_back({"all", rec, {}});
    }
    std::vector<std::string> conditions;
    for (const auto& s : segs)
        if (std::find(conditions.begin(), conditions.end(), s.condition) == conditions.end())
            conditions.push_back(s.condition);
    std::vector<pipeline::BandRow> rows;
    const auto bands = spectral::default_bands();
    for (const auto& c : conditions) {
        std::vector<spectral::PsdEstimate> parts;
        for (const auto& s : segs)
            if (s.condition == c && s.rec.samples() > 0)
                parts.push_back(spectral::welch_psd(s.rec));
        if (parts.empty())
            continue;
        const auto bp = spectral::band_power(spectral::to_db(spectral::mean_psd(parts)), bands);
        auto r = pipeline::band_rows(participant, c, rec.labels, bp, bands);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    pipeline::write_bands_csv(out, rows);
    return 0;
}

int cmd_ecg(const std::string& session, const std::string& channel, bool use_ica, const Globals& g,
            const std::string& out, const std::string& rr_out, std::optional<double> rate)
{
    const auto rec = ingest::read_session_csv(session, rate);
    Eigen::VectorXd x;
    json info;
    if (use_ica) {
        if (!g.seed)
            throw ConfigError("ecg --ica needs --seed");
        const auto ica = artifact::ica_decompose(rec, rec.channels(), *g.seed);
        const auto pick = artifact::select_ecg_ic(ica, rec.rate);
        if (!pick)
            throw DataError("no independent component looks like an ECG");
        x = ica.sources.row(pick->index).transpose();
        if (pick->inverted)
            x = -x;
        info = {{"component", pick->index}, {"score", pick->score}, {"inverted", pick->inverted}};
    } else {
        Eigen::Index row = 0;
        if (!channel.empty()) {
            const auto it = std::find(rec.labels.begin(), rec.labels.end(), channel);
            if (it == rec.labels.end())
                throw ConfigError("no channel named '" + channel + "'");
            row = it - rec.labels.begin();
        }
        x = rec.data.row(row).transpose();
        info = {{"channel", rec.labels.at(static_cast<std::size_t>(row))}};
    }
    auto beats = cardiac::pan_tompkins(x, rec.rate);
    for (double& t : beats.beat_times)
        t += rec.start_s;
    pipeline::write_beats_csv(out, beats);
    if (!rr_out.empty())
        pipeline::write_rr_csv(rr_out, {cardiac::rr_periods(beats)}, {});
    info["beats"] = beats.beat_times.size();
    std::cout << info.dump(2) << '\n';
    return 0;
}

int cmd_agree(const std::string& ref, const std::string& alt, double tol, const std::string& out)
{
    const auto j = pipeline::bland_altman_json(pipeline::read_beats_csv(ref), pipeline::read_beats_csv(alt), tol);
    if (out.empty())
        std::cout << j.dump(2) << '\n';
    else
        pipeline::write_json(out, j);
    return 0;
}

int cmd_analyze(const std::string& table, const std::vector<std::string>& exclude, const std::vector<std::string>& flow,
                const std::string& mode, const std::string& out)
{
    config::AnalysisConfig cfg;
    cfg.workload_exclude = {exclude.begin(), exclude.end()};
    cfg.flow_conditions = {flow.begin(), flow.end()};
    if (mode == "pooled")
        cfg.channel_mode = config::ChannelMode::Pooled;
    else if (mode != "mean")
        throw ConfigError("--channel-mode must be mean or pooled");
    const auto j = pipeline::analysis_json(analysis::run(analysis::read_table(table), cfg));
    if (out.empty())
        std::cout << j.dump(2) << '\n';
    else
        pipeline::write_json(out, j);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Around-ear EEG processing pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    std::uint64_t seed = 0;
    double line = 50.0;
    app.add_option("--config", g.config, "Pipeline config file");
    auto* seed_opt = app.add_option("--seed", seed, "Seed for randomized stages");
    auto* line_opt = app.add_option("--line-freq", line, "Mains frequency")->check(CLI::IsMember({50.0, 60.0}));

    auto* parse = app.add_subcommand("parse", "Decode a raw Cyton(+Daisy) byte stream");
    std::string raw, parse_out = "session.csv", report;
    bool single = false;
    double parse_rate = 125.0;
    parse->add_option("raw", raw, "Raw byte file")->required();
    parse->add_option("-o,--output", parse_out, "Session CSV");
    parse->add_option("--report", report, "Integrity report JSON (stdout when omitted)");
    parse->add_flag("--single-board", single, "No Daisy board: 8 channels per sample");
    parse->add_option("--rate", parse_rate, "Sampling rate in Hz");

    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic session from a spec file");
    std::string spec, synth_out;
    synth_cmd->add_option("spec", spec, "Synth spec file")->required();
    synth_cmd->add_option("-o,--output-dir", synth_out, "Override output_dir");

    auto* run = app.add_subcommand("run", "Run the configured pipeline");
    std::string run_config;
    run->add_option("config", run_config, "Pipeline config (or --config)");

    auto* bands = app.add_subcommand("bands", "Welch band powers of a session");
    std::string bands_session, bands_events, bands_out = "bands.csv", participant = "P01";
    std::optional<double> rate;
    bands->add_option("session", bands_session, "Session CSV")->required();
    bands->add_option("--events", bands_events, "Events CSV");
    bands->add_option("-o,--output", bands_out, "Band CSV");
    bands->add_option("--participant", participant, "Participant id");
    bands->add_option("--rate", rate, "Sampling rate when the file lacks one");

    auto* ecg = app.add_subcommand("ecg", "Detect R peaks in a channel or in the ECG-like component");
    std::string ecg_session, ecg_channel, ecg_out = "beats.csv", rr_out;
    bool use_ica = false;
    ecg->add_option("session", ecg_session, "Session CSV")->required();
    ecg->add_option("--channel", ecg_channel, "Channel label (default: first)");
    ecg->add_flag("--ica", use_ica, "Pick the most ECG-like independent component");
    ecg->add_option("-o,--output", ecg_out, "Beat times CSV");
    ecg->add_option("--rr", rr_out, "R-R CSV");
    ecg->add_option("--rate", rate, "Sampling rate when the file lacks one");

    auto* agree = app.add_subcommand("agree", "Bland-Altman agreement of two beat series");
    std::string ref, alt, agree_out;
    double tol = 0.15;
    agree->add_option("reference", ref, "Reference beat times")->required();
    agree->add_option("alternative", alt, "Alternative beat times")->required();
    agree->add_option("--tolerance", tol, "Matching tolerance in seconds");
    agree->add_option("-o,--output", agree_out, "Report JSON (stdout when omitted)");

    auto* analyze = app.add_subcommand("analyze", "Condition contrasts and survey regressions");
    std::string table, analyze_out, mode = "mean";
    std::vector<std::string> exclude{"closed"}, flow;
    analyze->add_option("table", table, "Analysis CSV")->required();
    analyze->add_option("--exclude", exclude, "Conditions left out of workload regressions")->delimiter(',');
    analyze->add_option("--flow-conditions", flow, "Conditions used for flow regressions")->delimiter(',');
    analyze->add_option("--channel-mode", mode, "mean or pooled");
    analyze->add_option("-o,--output", analyze_out, "Report JSON (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return diagnose("usage_error", e.what(), 2);
    }
    if (*seed_opt)
        g.seed = seed;
    if (*line_opt)
        g.line_freq = line;

    try {
        if (*parse)
            return cmd_parse(raw, parse_out, report, single, parse_rate);
        if (*synth_cmd)
            return cmd_synth(spec, g, synth_out);
        if (*run)
            return cmd_run(run_config.empty() ? g.config : run_config, g);
        if (*bands)
            return cmd_bands(bands_session, bands_events, bands_out, participant, rate);
        if (*ecg)
            return cmd_ecg(ecg_session, ecg_channel, use_ica, g, ecg_out, rr_out, rate);
        if (*agree)
            return cmd_agree(ref, alt, tol, agree_out);
        if (*analyze)
            return cmd_analyze(table, exclude, flow, mode, analyze_out);
    } catch (const ConfigError& e) {
        return diagnose("config_error", e.what(), 2);
    } catch (const DataError& e) {
        return diagnose("data_error", e.what(), 3);
    } catch (const fs::filesystem_error& e) {
        return diagnose("data_error", e.what(), 3);
    } catch (const std::exception& e) {
        return diagnose("internal_error", e.what(), 1);
    }
    return 0;
}
