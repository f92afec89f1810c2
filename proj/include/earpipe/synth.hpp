#pragma once

// Deterministic synthetic EEG/ECG with known ground truth.

#include "earpipe/cardiac.hpp"
#include "earpipe/recording.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace earpipe::synth {

struct Sinusoid {
    double freq_hz = 10.0;
    double amplitude_uv = 0.0;
};

struct EegSynthSpec {
    double rate = 125.0;
    double duration_s = 60.0;
    std::uint64_t seed = 1;
    int channels = 16;
    double pink_noise_rms = 5.0;
    std::vector<Sinusoid> band_components;
    std::optional<Sinusoid> line_noise;
};

struct EegTruth {
    std::vector<Sinusoid> components;
    double pink_noise_rms = 0.0;
    std::optional<Sinusoid> line_noise;
    /// sqrt(pink^2 + sum A^2 / 2) per channel
    double predicted_rms = 0.0;
};

struct SynthEeg {
    Recording rec;
    EegTruth truth;
};

/// 1/f noise by spectral shaping (random phases, amplitude ~ 1/sqrt(f)),
/// scaled to the requested RMS, plus sinusoids with random per-channel phase.
SynthEeg gen_eeg(const EegSynthSpec& spec);

/// One row of zero-mean 1/f noise with exact RMS.
Eigen::VectorXd pink_noise(Eigen::Index n, double rms, std::uint64_t seed);

struct EcgSynthSpec {
    double rate = 1000.0;
    double duration_s = 60.0;
    double bpm = 60.0;
    double r_amplitude = 1000.0; ///< µV
    double rr_jitter_ms = 0.0;   ///< SD of per-beat timing jitter
    double r_width_s = 0.010;    ///< Gaussian standard deviation
    double noise_snr_db = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 1;
};

struct SynthEcg {
    Recording rec; ///< one channel
    cardiac::BeatSeries true_beats;
};

/// Gaussian R waves at 60/bpm spacing with per-beat jitter. Optional white
/// noise at the given SNR (signal power over noise power).
SynthEcg gen_ecg(const EcgSynthSpec& spec);

struct MixResult {
    Recording rec;
    Eigen::MatrixXd mixing;
    Eigen::MatrixXd sources;
};

/// channels = mixing * sources (+ optional white noise of noise_rms).
/// Throws ConfigError unless mixing has full column rank.
MixResult mix_sources(const Eigen::MatrixXd& sources, const Eigen::MatrixXd& mixing, double rate,
                      std::uint64_t seed, double noise_rms = 0.0);

/// Unit-variance Laplacian sources, rows x samples.
Eigen::MatrixXd laplacian_sources(Eigen::Index rows, Eigen::Index samples, std::uint64_t seed);
/// Standard-normal random matrix.
Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed);

struct BergerSpec {
    double rate = 125.0;
    double segment_s = 60.0;
    int channels = 16;
    double alpha_uv = 2.0;  ///< eyes-open amplitude per alpha component
    double closed_ratio = 3.0;
    std::vector<double> alpha_freqs{9.0, 10.0, 11.0};
    double pink_noise_rms = 5.0;
    std::optional<Sinusoid> line_noise = Sinusoid{50.0, 2.0};
    std::uint64_t seed = 7;
};

/// Two segments, "open" then "closed", over identical pink noise; alpha
/// amplitude differs by closed_ratio. Events cover each segment.
Recording berger_session(const BergerSpec& spec);

struct EcgInEegSpec {
    double rate = 125.0;
    double duration_s = 60.0;
    int channels = 8;
    double bpm = 72.0;
    double rr_jitter_ms = 20.0;
    double relative_db = -10.0; ///< ECG RMS relative to EEG RMS per channel
    double pink_noise_rms = 5.0;
    std::uint64_t seed = 11;
};

struct EcgInEeg {
    Recording rec;
    cardiac::BeatSeries true_beats;
    Eigen::VectorXd ecg_weights; ///< per-channel ECG gain
};

/// Independent pink-noise channels plus one shared ECG source.
EcgInEeg ecg_in_eeg(const EcgInEegSpec& spec);

} // namespace earpipe::synth
