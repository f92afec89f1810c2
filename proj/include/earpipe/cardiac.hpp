#pragma once

// QRS detection, R-R intervals, outlier rejection and beat matching.

#include "earpipe/recording.hpp"

#include <cstddef>
#include <vector>

namespace earpipe::cardiac {

struct BeatSeries {
    std::vector<double> beat_times; ///< seconds, strictly increasing
    double rate = 0.0;
};

struct RrSeries {
    std::vector<double> intervals_ms;
    std::vector<double> anchored_at; ///< time of the first beat of each pair
};

/// Classic detector constants, all times in seconds.
struct PanTompkinsConfig {
    double band_lo_hz = 5.0;
    double band_hi_hz = 15.0;
    double bandpass_span_s = 0.5; ///< FIR order ~ span * rate
    double integration_s = 0.150;
    double refractory_s = 0.200;
    double threshold_mix = 0.25;
    double searchback_factor = 1.66;
    double refine_s = 0.075;
    double learning_s = 2.0;
};

/// Throws DataError when rate < 100 Hz or fewer than 5 s of samples.
BeatSeries pan_tompkins(const Eigen::Ref<const Eigen::VectorXd>& x, double rate, const PanTompkinsConfig& cfg = {});

RrSeries rr_periods(const BeatSeries& beats);

/// Plausibility of a beat train as a heartbeat: fraction of intervals in
/// [lo, hi] ms times (1 - coefficient of variation), floored at 0.
double ecg_likeness(const RrSeries& rr, double lo_ms = 300.0, double hi_ms = 1500.0);

struct RrFilterConfig {
    double min_ms = 300.0;
    double max_ms = 2000.0;
    std::size_t median_window = 11;
    double mad_limit = 3.0;
};

struct RrFilterResult {
    RrSeries kept;
    std::vector<bool> dropped; ///< per input interval
    std::size_t dropped_count = 0;
};

/// Range rule, then deviation from a centred rolling median measured in
/// units of the series-wide scaled MAD of those deviations.
RrFilterResult rr_outlier_filter(const RrSeries& rr, const RrFilterConfig& cfg = {});

struct BeatPair {
    std::size_t ref = 0;
    std::size_t alt = 0;
};

struct BeatMatch {
    std::vector<BeatPair> pairs; ///< ordered by reference time
    std::size_t unmatched_ref = 0;
    std::size_t unmatched_alt = 0;
    double tolerance = 0.0;
};

/// Closest-first greedy one-to-one pairing within tol seconds.
BeatMatch match_beats(const BeatSeries& ref, const BeatSeries& alt, double tol = 0.15);

struct PairedRr {
    std::vector<double> ref_ms;
    std::vector<double> alt_ms;
    std::vector<double> anchored_at;
};

/// R-R intervals from consecutive pairs whose members are consecutive beats
/// in both series.
PairedRr matched_intervals(const BeatSeries& ref, const BeatSeries& alt, const BeatMatch& match);

} // namespace earpipe::cardiac
