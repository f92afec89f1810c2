#pragma once

// Welch PSD, band aggregation and signal-quality metrics.

#include "earpipe/recording.hpp"

#include <string>
#include <vector>

namespace earpipe::spectral {

enum class Scale { Linear, Decibel };

inline constexpr double kPowerFloor = 1e-15; ///< µV²/Hz, i.e. -150 dB

struct WelchConfig {
    Eigen::Index segment = 256;
    Eigen::Index overlap = 64;
};

struct PsdEstimate {
    Eigen::VectorXd freqs;
    Eigen::MatrixXd power; ///< channels x bins
    Eigen::Index window_count = 0;
    Scale scale = Scale::Linear;

    double bin_width() const { return freqs.size() > 1 ? freqs[1] - freqs[0] : 0.0; }
};

/// Hamming-windowed, mean-detrended segments hopping by segment - overlap,
/// one-sided density scaled by 1 / (rate * sum w^2), averaged over segments.
PsdEstimate welch_psd(const Eigen::Ref<const Eigen::VectorXd>& x, double rate, const WelchConfig& cfg = {});
PsdEstimate welch_psd(const Recording& rec, const WelchConfig& cfg = {});

/// Element-wise mean of same-shaped estimates; window counts add.
PsdEstimate mean_psd(const std::vector<PsdEstimate>& parts);

PsdEstimate to_db(const PsdEstimate& psd);
PsdEstimate to_linear(const PsdEstimate& psd);

struct BandDefinition {
    std::string name;
    double lo_hz = 0.0;
    double hi_hz = 0.0;
};

/// Theta 4-7, Alpha 8-12, Beta 13-30, Gamma 31-40 Hz.
std::vector<BandDefinition> default_bands();

/// Bin indices with lo <= f <= hi.
std::vector<Eigen::Index> band_bins(const Eigen::VectorXd& freqs, const BandDefinition& band);

/// channels x bands matrix of the median dB value inside each band.
Eigen::MatrixXd band_power(const PsdEstimate& psd_db, const std::vector<BandDefinition>& bands);

struct QcConfig {
    double typical_lo_uv = 1.0;
    double typical_hi_uv = 20.0;
    double hf_lo_hz = 31.0;
    double hf_hi_hz = 62.0;
    double line_hz = 50.0;
    double line_halfwidth_hz = 1.0;
};

struct ChannelQc {
    double rms_uv = 0.0;
    bool amplitude_typical = false;
    double hf_ratio = 0.0;
    double line_ratio = 0.0;
};

struct QcReport {
    std::vector<ChannelQc> channels;
};

/// psd must be linear scale and have one row per channel of rec.
QcReport qc_report(const Recording& rec, const PsdEstimate& psd, const QcConfig& cfg = {});

} // namespace earpipe::spectral
