#pragma once

// Key-value configuration files:
//
//   # comment
//   [section]
//   key = value
//
// Keys are unique across the whole file; section headers only group them.
// Unknown keys, duplicates and malformed values raise ConfigError.

#include "earpipe/artifact.hpp"
#include "earpipe/cardiac.hpp"
#include "earpipe/filters.hpp"
#include "earpipe/spectral.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace earpipe::config {

struct Entry {
    std::string value;
    std::string section;
    int line = 0;
};

/// Parsed file. Typed getters consume keys so leftovers can be reported.
class KeyValues {
public:
    static KeyValues parse(const std::string& text);
    static KeyValues load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    std::optional<std::string> str(const std::string& key);
    std::optional<double> number(const std::string& key);
    std::optional<long long> integer(const std::string& key);
    std::optional<bool> boolean(const std::string& key);
    std::optional<std::vector<std::string>> list(const std::string& key);

    /// Throws ConfigError naming the first key never read.
    void reject_unused() const;

private:
    const Entry* take(const std::string& key);
    [[noreturn]] void bad_value(const std::string& key, const std::string& why) const;

    std::map<std::string, Entry> entries_;
    std::set<std::string> used_;
};

enum class Stage { Cut, Baseline, Reref, LineNoise, Highpass, Lowpass, Ica, Asr, Psd, Bands, Qc };

std::string stage_name(Stage s);
Stage parse_stage(const std::string& name);
const std::vector<Stage>& canonical_stages();

enum class ChannelMode { Mean, Pooled };

struct AnalysisConfig {
    std::optional<std::filesystem::path> table;
    std::set<std::string> workload_exclude{"closed"};
    std::set<std::string> flow_conditions; ///< empty = every condition with a flow score
    ChannelMode channel_mode = ChannelMode::Mean;
};

struct PipelineConfig {
    std::filesystem::path session;
    std::optional<std::filesystem::path> events;
    std::optional<std::filesystem::path> montage;
    std::optional<std::filesystem::path> reference_beats;
    std::filesystem::path output_dir = "out";
    std::string participant = "P01";
    double rate = 125.0;

    std::vector<Stage> stages = canonical_stages();
    bool allow_unfiltered_psd = false;

    filters::FirSpec highpass{filters::FirKind::Highpass, 1.0, 500, filters::Window::Hann};
    filters::FirSpec lowpass{filters::FirKind::Lowpass, 45.0, 100, filters::Window::Hann};
    filters::LineNoiseConfig line_noise;

    artifact::IcaConfig ica;
    std::optional<std::uint64_t> ica_seed;
    Eigen::Index ica_components = 0; ///< 0 = as many as channels
    double ecg_min_score = 0.5;

    artifact::AsrConfig asr;

    spectral::WelchConfig welch;
    bool psd_exclude_edges = true;
    bool psd_concatenate = false; ///< pool repeated conditions before Welch
    std::vector<spectral::BandDefinition> bands = spectral::default_bands();
    spectral::QcConfig qc;

    cardiac::RrFilterConfig rr_filter;
    double beat_tolerance_s = 0.15;

    AnalysisConfig analysis;

    bool enabled(Stage s) const;
};

/// Relative paths resolve against base_dir.
PipelineConfig parse_pipeline_config(const std::string& text, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Range, ordering and filter-design checks; throws ConfigError.
void validate(const PipelineConfig& cfg);

enum class SynthKind { Eeg, Ecg, Berger, EcgInEeg };

struct SynthFileSpec {
    SynthKind kind = SynthKind::Berger;
    std::optional<std::uint64_t> seed;
    double rate = 125.0;
    double duration_s = 60.0;
    int channels = 16;
    double pink_noise_rms = 5.0;
    std::vector<std::pair<double, double>> components; ///< (Hz, µV)
    std::optional<std::pair<double, double>> line_noise;
    double alpha_uv = 2.0;
    double closed_ratio = 3.0;
    double bpm = 60.0;
    double rr_jitter_ms = 0.0;
    double r_amplitude = 1000.0;
    double snr_db = std::numeric_limits<double>::infinity();
    double relative_db = -10.0;
    std::filesystem::path output_dir = "synth";
};

SynthFileSpec parse_synth_spec(const std::string& text, const std::filesystem::path& base_dir = {});
SynthFileSpec load_synth_spec(const std::filesystem::path& path);

} // namespace earpipe::config
