#include "earpipe/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace earpipe::config {

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
        auto t = trim(cur);
        if (!t.empty())
            out.push_back(std::move(t));
    }
    return out;
}

double parse_double(const std::string& s, bool& ok)
{
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    ok = ec == std::errc{} && p == end && std::isfinite(v);
    return v;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p)
{
    std::filesystem::path path(p);
    if (path.is_absolute() || base.empty())
        return path;
    return base / path;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

KeyValues KeyValues::parse(const std::string& text)
{
    KeyValues kv;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (key.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        if (kv.entries_.count(key))
            throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        kv.entries_[key] = Entry{trim(line.substr(eq + 1)), section, line_no};
    }
    return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path)
{
    return parse(read_file(path));
}

const Entry* KeyValues::take(const std::string& key)
{
    auto it = entries_.find(key);
    if (it == entries_.end())
        return nullptr;
    used_.insert(key);
    return &it->second;
}

void KeyValues::bad_value(const std::string& key, const std::string& why) const
{
    const auto& e = entries_.at(key);
    throw ConfigError("line " + std::to_string(e.line) + ": " + key + " = '" + e.value + "': " + why);
}

std::optional<std::string> KeyValues::str(const std::string& key)
{
    const auto* e = take(key);
    if (!e)
        return std::nullopt;
    return e->value;
}

std::optional<double> KeyValues::number(const std::string& key)
{
    const auto* e = take(key);
    if (!e)
        return std::nullopt;
    bool ok = false;
    const double v = parse_double(e->value, ok);
    if (!ok)
        bad_value(key, "not a number");
    return v;
}

std::optional<long long> KeyValues::integer(const std::string& key)
{
    const auto* e = take(key);
    if (!e)
        return std::nullopt;
    long long v = 0;
    const auto* end = e->value.data() + e->value.size();
    auto [p, ec] = std::from_chars(e->value.data(), end, v);
    if (ec != std::errc{} || p != end)
        bad_value(key, "not an integer");
    return v;
}

std::optional<bool> KeyValues::boolean(const std::string& key)
{
    const auto* e = take(key);
    if (!e)
        return std::nullopt;
    const auto v = lower(e->value);
    if (v == "true" || v == "on" || v == "yes" || v == "1")
        return true;
    if (v == "false" || v == "off" || v == "no" || v == "0")
        return false;
    bad_value(key, "expected true/false");
}

std::optional<std::vector<std::string>> KeyValues::list(const std::string& key)
{
    const auto* e = take(key);
    if (!e)
        return std::nullopt;
    return split(e->value, ',');
}

void KeyValues::reject_unused() const
{
    for (const auto& [key, e] : entries_)
        if (!used_.count(key))
            throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + key + "'" +
                              (e.section.empty() ? "" : " in [" + e.section + "]"));
}

std::string stage_name(Stage s)
{
    switch (s) {
    case Stage::Cut: return "cut";
    case Stage::Baseline: return "baseline";
    case Stage::Reref: return "reref";
    case Stage::LineNoise: return "line_noise";
    case Stage::Highpass: return "highpass";
    case Stage::Lowpass: return "lowpass";
    case Stage::Ica: return "ica";
    case Stage::Asr: return "asr";
    case Stage::Psd: return "psd";
    case Stage::Bands: return "bands";
    case Stage::Qc: return "qc";
    }
    return "?";
}

const std::vector<Stage>& canonical_stages()
{
    static const std::vector<Stage> all{Stage::Cut,     Stage::Baseline, Stage::Reref, Stage::LineNoise,
                                        Stage::Highpass, Stage::Lowpass, Stage::Ica,   Stage::Asr,
                                        Stage::Psd,     Stage::Bands,    Stage::Qc};
    return all;
}

Stage parse_stage(const std::string& name)
{
    for (Stage s : canonical_stages())
        if (stage_name(s) == lower(name))
            return s;
    throw ConfigError("unknown stage '" + name + "'");
}

bool PipelineConfig::enabled(Stage s) const
{
    return std::find(stages.begin(), stages.end(), s) != stages.end();
}

namespace {

filters::Window parse_window(const std::string& v)
{
    const auto w = lower(v);
    if (w == "hann")
        return filters::Window::Hann;
    if (w == "hamming")
        return filters::Window::Hamming;
    throw ConfigError("filter_window must be hann or hamming, got '" + v + "'");
}

std::vector<spectral::BandDefinition> parse_bands(const std::vector<std::string>& items)
{
    std::vector<spectral::BandDefinition> out;
    for (const auto& item : items) {
        const auto parts = split(item, ':');
        bool ok_lo = false;
        bool ok_hi = false;
        if (parts.size() != 3)
            throw ConfigError("band '" + item + "' must look like Name:lo:hi");
        const double lo = parse_double(parts[1], ok_lo);
        const double hi = parse_double(parts[2], ok_hi);
        if (!ok_lo || !ok_hi)
            throw ConfigError("band '" + item + "' has non-numeric edges");
        out.push_back({parts[0], lo, hi});
    }
    return out;
}

std::uint64_t parse_seed(KeyValues& kv, const std::string& key)
{
    const auto v = kv.integer(key);
    if (*v < 0)
        throw ConfigError(key + " must be non-negative");
    return static_cast<std::uint64_t>(*v);
}

template <class T>
void set(std::optional<T> v, T& target)
{
    if (v)
        target = *v;
}

int to_int(std::optional<long long> v, int fallback)
{
    return v ? static_cast<int>(*v) : fallback;
}

} // namespace

PipelineConfig parse_pipeline_config(const std::string& text, const std::filesystem::path& base_dir)
{
    auto kv = KeyValues::parse(text);
    PipelineConfig c;

    const auto session = kv.str("session");
    if (!session)
        throw ConfigError("missing required key 'session'");
    c.session = resolve(base_dir, *session);
    if (auto v = kv.str("events"))
        c.events = resolve(base_dir, *v);
    if (auto v = kv.str("montage"))
        c.montage = resolve(base_dir, *v);
    if (auto v = kv.str("reference_beats"))
        c.reference_beats = resolve(base_dir, *v);
    if (auto v = kv.str("output_dir"))
        c.output_dir = resolve(base_dir, *v);
    else
        c.output_dir = resolve(base_dir, c.output_dir.string());
    set(kv.str("participant"), c.participant);
    set(kv.number("rate"), c.rate);

    if (auto v = kv.list("stages")) {
        c.stages.clear();
        for (const auto& s : *v)
            c.stages.push_back(parse_stage(s));
    }
    set(kv.boolean("allow_unfiltered_psd"), c.allow_unfiltered_psd);

    set(kv.number("hp_cutoff_hz"), c.highpass.cutoff_hz);
    c.highpass.order = to_int(kv.integer("hp_order"), c.highpass.order);
    set(kv.number("lp_cutoff_hz"), c.lowpass.cutoff_hz);
    c.lowpass.order = to_int(kv.integer("lp_order"), c.lowpass.order);
    if (auto v = kv.str("filter_window"))
        c.highpass.window = c.lowpass.window = parse_window(*v);

    set(kv.number("line_freq_hz"), c.line_noise.f0_hz);
    set(kv.number("line_win_s"), c.line_noise.win_s);
    set(kv.number("line_step_s"), c.line_noise.step_s);
    c.line_noise.harmonics = to_int(kv.integer("line_harmonics"), c.line_noise.harmonics);

    if (kv.has("ica_seed"))
        c.ica_seed = parse_seed(kv, "ica_seed");
    c.ica.max_iter = to_int(kv.integer("ica_max_iter"), c.ica.max_iter);
    set(kv.number("ica_tolerance"), c.ica.tolerance);
    set(kv.number("ica_learning_rate"), c.ica.learning_rate);
    if (auto v = kv.integer("ica_components"))
        c.ica_components = static_cast<Eigen::Index>(*v);
    set(kv.number("ecg_min_score"), c.ecg_min_score);

    set(kv.number("asr_burst_k"), c.asr.burst_k);
    set(kv.number("asr_window_criterion"), c.asr.window_criterion);
    set(kv.number("asr_calib_win_s"), c.asr.calib_win_s);
    set(kv.number("asr_proc_win_s"), c.asr.proc_win_s);
    set(kv.number("asr_max_dims"), c.asr.max_dims);

    if (auto v = kv.integer("psd_segment"))
        c.welch.segment = static_cast<Eigen::Index>(*v);
    if (auto v = kv.integer("psd_overlap"))
        c.welch.overlap = static_cast<Eigen::Index>(*v);
    set(kv.boolean("psd_exclude_edges"), c.psd_exclude_edges);
    set(kv.boolean("psd_concatenate"), c.psd_concatenate);
    if (auto v = kv.list("bands"))
        c.bands = parse_bands(*v);
    set(kv.number("qc_typical_lo_uv"), c.qc.typical_lo_uv);
    set(kv.number("qc_typical_hi_uv"), c.qc.typical_hi_uv);

    set(kv.number("beat_tolerance_s"), c.beat_tolerance_s);
    set(kv.number("rr_min_ms"), c.rr_filter.min_ms);
    set(kv.number("rr_max_ms"), c.rr_filter.max_ms);
    if (auto v = kv.integer("rr_median_window"))
        c.rr_filter.median_window = static_cast<std::size_t>(std::max(1LL, *v));
    set(kv.number("rr_mad_limit"), c.rr_filter.mad_limit);

    if (auto v = kv.str("analysis_table"))
        c.analysis.table = resolve(base_dir, *v);
    if (auto v = kv.list("workload_exclude"))
        c.analysis.workload_exclude = {v->begin(), v->end()};
    if (auto v = kv.list("flow_conditions"))
        c.analysis.flow_conditions = {v->begin(), v->end()};
    if (auto v = kv.str("channel_mode")) {
        const auto m = lower(*v);
        if (m == "mean")
            c.analysis.channel_mode = ChannelMode::Mean;
        else if (m == "pooled")
            c.analysis.channel_mode = ChannelMode::Pooled;
        else
            throw ConfigError("channel_mode must be mean or pooled, got '" + *v + "'");
    }

    kv.reject_unused();
    c.qc.line_hz = c.line_noise.f0_hz;
    return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path)
{
    return parse_pipeline_config(read_file(path), path.parent_path());
}

namespace {

int stage_rank(Stage s)
{
    // ICA and ASR may run in either order.
    if (s == Stage::Asr)
        return static_cast<int>(Stage::Ica);
    return static_cast<int>(s);
}

} // namespace

void validate(const PipelineConfig& c)
{
    if (!(c.rate > 0.0))
        throw ConfigError("rate must be positive");
    const double nyquist = c.rate / 2.0;

    std::set<Stage> seen;
    int last_rank = -1;
    for (Stage s : c.stages) {
        if (!seen.insert(s).second)
            throw ConfigError("stage '" + stage_name(s) + "' listed twice");
        if (stage_rank(s) < last_rank)
            throw ConfigError("stage '" + stage_name(s) + "' is out of order");
        last_rank = stage_rank(s);
    }
    if (c.enabled(Stage::Psd) && !c.allow_unfiltered_psd &&
        !(c.enabled(Stage::Highpass) && c.enabled(Stage::Lowpass)))
        throw ConfigError("psd requires the highpass and lowpass stages (set allow_unfiltered_psd to override)");
    if (c.enabled(Stage::Bands) && !c.enabled(Stage::Psd))
        throw ConfigError("bands requires the psd stage");
    if (c.enabled(Stage::Qc) && !c.enabled(Stage::Psd))
        throw ConfigError("qc requires the psd stage");
    if (c.enabled(Stage::Ica) && !c.ica_seed)
        throw ConfigError("ica is enabled but ica_seed is not set");

    auto check_fir = [&](Stage s, const filters::FirSpec& spec, const char* key) {
        if (!c.enabled(s))
            return;
        try {
            filters::design_fir(spec, c.rate);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string(key) + ": " + e.what());
        }
    };
    check_fir(Stage::Highpass, c.highpass, "hp_cutoff_hz");
    check_fir(Stage::Lowpass, c.lowpass, "lp_cutoff_hz");
    if (c.enabled(Stage::LineNoise)) {
        if (!(c.line_noise.f0_hz > 0.0) || c.line_noise.f0_hz >= nyquist)
            throw ConfigError("line_freq_hz must lie in (0, Nyquist)");
        if (!(c.line_noise.win_s > 0.0) || !(c.line_noise.step_s > 0.0))
            throw ConfigError("line_win_s and line_step_s must be positive");
        if (c.line_noise.harmonics < 1)
            throw ConfigError("line_harmonics must be at least 1");
    }
    if (c.ica.max_iter < 1 || !(c.ica.tolerance > 0.0) || c.ica_components < 0)
        throw ConfigError("ica_max_iter >= 1, ica_tolerance > 0 and ica_components >= 0 required");
    if (!(c.ecg_min_score >= 0.0 && c.ecg_min_score <= 1.0))
        throw ConfigError("ecg_min_score must lie in [0, 1]");
    if (!(c.asr.burst_k > 0.0))
        throw ConfigError("asr_burst_k must be positive");
    if (!(c.asr.window_criterion >= 0.0 && c.asr.window_criterion <= 1.0))
        throw ConfigError("asr_window_criterion must lie in [0, 1]");
    if (!(c.asr.calib_win_s > 0.0) || !(c.asr.proc_win_s > 0.0))
        throw ConfigError("asr window lengths must be positive");
    if (!(c.asr.max_dims > 0.0 && c.asr.max_dims <= 1.0))
        throw ConfigError("asr_max_dims must lie in (0, 1]");
    if (c.welch.segment < 2 || c.welch.overlap < 0 || c.welch.overlap >= c.welch.segment)
        throw ConfigError("psd_segment >= 2 and 0 <= psd_overlap < psd_segment required");
    for (const auto& b : c.bands)
        if (!(b.lo_hz >= 0.0 && b.lo_hz < b.hi_hz && b.hi_hz <= nyquist))
            throw ConfigError("band " + b.name + " must satisfy 0 <= lo < hi <= Nyquist");
    if (!(c.beat_tolerance_s > 0.0))
        throw ConfigError("beat_tolerance_s must be positive");
    if (!(c.rr_filter.min_ms < c.rr_filter.max_ms))
        throw ConfigError("rr_min_ms must be below rr_max_ms");
}

SynthFileSpec parse_synth_spec(const std::string& text, const std::filesystem::path& base_dir)
{
    auto kv = KeyValues::parse(text);
    SynthFileSpec s;
    if (auto v = kv.str("kind")) {
        const auto k = lower(*v);
        if (k == "eeg")
            s.kind = SynthKind::Eeg;
        else if (k == "ecg")
            s.kind = SynthKind::Ecg;
        else if (k == "berger")
            s.kind = SynthKind::Berger;
        else if (k == "ecg_in_eeg")
            s.kind = SynthKind::EcgInEeg;
        else
            throw ConfigError("kind must be eeg, ecg, berger or ecg_in_eeg, got '" + *v + "'");
    }
    if (kv.has("seed"))
        s.seed = parse_seed(kv, "seed");
    if (s.kind == SynthKind::Ecg)
        s.rate = 1000.0;
    if (s.kind == SynthKind::EcgInEeg)
        s.channels = 8;
    set(kv.number("rate"), s.rate);
    set(kv.number("duration_s"), s.duration_s);
    s.channels = to_int(kv.integer("channels"), s.channels);
    set(kv.number("pink_noise_rms"), s.pink_noise_rms);
    if (auto v = kv.list("components")) {
        for (const auto& item : *v) {
            const auto parts = split(item, ':');
            bool a = false;
            bool b = false;
            if (parts.size() != 2)
                throw ConfigError("component '" + item + "' must look like freq:amplitude");
            const double f = parse_double(parts[0], a);
            const double amp = parse_double(parts[1], b);
            if (!a || !b)
                throw ConfigError("component '" + item + "' is not numeric");
            s.components.emplace_back(f, amp);
        }
    }
    const auto lf = kv.number("line_freq_hz");
    const auto la = kv.number("line_amplitude_uv");
    if (lf || la)
        s.line_noise = std::make_pair(lf.value_or(50.0), la.value_or(0.0));
    set(kv.number("alpha_uv"), s.alpha_uv);
    set(kv.number("closed_ratio"), s.closed_ratio);
    set(kv.number("bpm"), s.bpm);
    set(kv.number("rr_jitter_ms"), s.rr_jitter_ms);
    set(kv.number("r_amplitude"), s.r_amplitude);
    set(kv.number("snr_db"), s.snr_db);
    set(kv.number("relative_db"), s.relative_db);
    if (auto v = kv.str("output_dir"))
        s.output_dir = resolve(base_dir, *v);
    else
        s.output_dir = resolve(base_dir, s.output_dir.string());
    kv.reject_unused();
    if (!(s.rate > 0.0) || !(s.duration_s > 0.0) || s.channels < 1)
        throw ConfigError("rate, duration_s and channels must be positive");
    return s;
}

SynthFileSpec load_synth_spec(const std::filesystem::path& path)
{
    return parse_synth_spec(read_file(path), path.parent_path());
}

} // namespace earpipe::config
