#pragma once

// Baseline correction, sinusoidal line-noise regression and windowed-sinc FIR filtering.

#include "earpipe/recording.hpp"

#include <complex>

namespace earpipe::filters {

enum class FirKind { Highpass, Lowpass };
enum class Window { Hann, Hamming };

struct FirSpec {
    FirKind kind = FirKind::Lowpass;
    double cutoff_hz = 45.0;
    int order = 100; ///< even; taps = order + 1
    Window window = Window::Hann;
};

struct FirFilter {
    Eigen::VectorXd taps;
    int group_delay = 0; ///< order / 2

    /// H(f) = sum_k taps[k] exp(-i 2 pi f k / rate), delay not removed.
    std::complex<double> response(double freq_hz, double rate) const;
};

/// Subtracts each channel's mean.
Recording baseline_correct(const Recording& rec);

/// Throws ConfigError on odd/negative order or cutoff outside (0, rate/2).
FirFilter design_fir(const FirSpec& spec, double rate);

/// Bandpass as the difference of two lowpass designs of the same order.
FirFilter design_bandpass(double lo_hz, double hi_hz, int order, double rate, Window window = Window::Hann);

/// Symmetric window of length n (endpoints included).
Eigen::VectorXd make_window(Window w, Eigen::Index n);

/// Linear convolution, shifted back by the group delay, zero-padded edges.
/// Output has the input length. Requires samples > taps.
Recording apply_zero_phase(const Recording& rec, const FirFilter& f);
Eigen::VectorXd apply_zero_phase(const Eigen::Ref<const Eigen::VectorXd>& x, const FirFilter& f);

struct LineNoiseConfig {
    double f0_hz = 50.0;
    double win_s = 4.0;
    double step_s = 1.0;
    int harmonics = 1; ///< fit f0, 2 f0, ... up to this many (below Nyquist)
};

/// Sliding-window least-squares fit of sin/cos at the line frequency (and
/// harmonics), cross-faded between windows and subtracted.
Recording remove_line_noise(const Recording& rec, const LineNoiseConfig& cfg = {});
Eigen::VectorXd remove_line_noise(const Eigen::Ref<const Eigen::VectorXd>& x, double rate,
                                  const LineNoiseConfig& cfg = {});

} // namespace earpipe::filters
