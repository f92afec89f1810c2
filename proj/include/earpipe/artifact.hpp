#pragma once

// Independent component decomposition and artifact subspace reconstruction.

#include "earpipe/recording.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace earpipe::artifact {

struct IcaConfig {
    int max_iter = 2000;
    double tolerance = 1e-6;
    /// Eigenvalues below this fraction of the largest are treated as rank loss.
    double rank_tolerance = 1e-10;
    /// Carried for configuration compatibility; the fixed-point update has no step size.
    double learning_rate = 0.1;
};

struct IcaResult {
    Eigen::MatrixXd unmixing; ///< components x channels
    Eigen::MatrixXd mixing;   ///< channels x components
    Eigen::MatrixXd sources;  ///< components x samples, unit variance
    Eigen::VectorXd channel_means;
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> warnings;

    Eigen::Index components() const { return unmixing.rows(); }
};

/// PCA whitening followed by symmetric fixed-point iteration with a
/// log-cosh contrast. Deterministic for a given seed.
IcaResult ica_decompose(const Recording& rec, Eigen::Index n_components, std::uint64_t seed,
                        const IcaConfig& cfg = {});

struct EcgComponent {
    Eigen::Index index = 0;
    double score = 0.0;
    bool inverted = false; ///< detection ran on the negated source
    double kurtosis = 0.0; ///< excess kurtosis of the source
};

/// Sources flatter than this (Gaussian noise is 0) cannot be cardiac.
inline constexpr double kMinEcgKurtosis = 3.0;

/// Highest-scoring source whose detected beat train looks cardiac, or none
/// if the best score is below min_score.
std::optional<EcgComponent> select_ecg_ic(const IcaResult& ica, double rate, double min_score = 0.5);

/// Scores each source row (both polarities): R-R plausibility times
/// regularity, zeroed for sources below kMinEcgKurtosis.
std::vector<EcgComponent> score_ecg_sources(const Eigen::MatrixXd& sources, double rate);

struct AsrConfig {
    double burst_k = 12.0;
    double window_criterion = 0.15;
    double calib_win_s = 1.0;
    double proc_win_s = 0.5;
    double calib_z_lo = -3.5;
    double calib_z_hi = 5.0;
    /// Largest fraction of dimensions that may be reconstructed in one window.
    double max_dims = 0.66;
    std::size_t min_calib_windows = 10;
};

struct AsrModel {
    Eigen::MatrixXd basis;       ///< channels x channels, orthonormal columns
    Eigen::VectorXd thresholds;  ///< per component RMS threshold
    Eigen::VectorXd channel_means;
    Eigen::VectorXd channel_rms_mean;
    Eigen::VectorXd channel_rms_sd;
    std::size_t calibration_windows = 0;
    std::size_t total_windows = 0;
};

/// Throws DataError when fewer than min_calib_windows clean windows exist.
AsrModel asr_calibrate(const Recording& rec, const AsrConfig& cfg = {});

struct AsrOutput {
    Recording cleaned;
    std::vector<bool> flagged_windows;
    std::vector<Eigen::Index> window_starts;
    Eigen::Index window_length = 0;
    std::size_t reconstructed_windows = 0;

    std::size_t flagged_count() const;
};

/// Sliding windows with 50% overlap. Each window's principal directions whose
/// RMS exceeds the calibration threshold (mapped onto that direction) are
/// projected out; the per-window projections are cross-faded with a raised
/// cosine between window centres. Windows with no exceedance are copied.
/// A channel is still bad after reconstruction when its window RMS exceeds
/// its calibration mean by more than burst_k standard deviations.
AsrOutput asr_process(const Recording& rec, const AsrModel& model, const AsrConfig& cfg = {});

/// True when more than criterion of the channels are bad.
bool exceeds_window_criterion(std::size_t bad_channels, std::size_t channels, double criterion);

} // namespace earpipe::artifact
