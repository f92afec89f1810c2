#include "earpipe/synth.hpp"

#include "earpipe/montage.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

namespace earpipe::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    std::uint64_t out = 0;
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    out = (std::uint64_t{words[0]} << 32) | words[1];
    return out;
}

void check_rate(double rate, double duration)
{
    if (!(rate > 0.0))
        throw ConfigError("synthetic sampling rate must be positive");
    if (!(duration > 0.0))
        throw ConfigError("synthetic duration must be positive");
}

} // namespace

Eigen::VectorXd pink_noise(Eigen::Index n, double rms, std::uint64_t seed)
{
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    if (n < 2 || rms == 0.0)
        return out;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    std::vector<std::complex<double>> spec(static_cast<std::size_t>(n), {0.0, 0.0});
    for (Eigen::Index k = 1; k <= n / 2; ++k) {
        const double amp = 1.0 / std::sqrt(static_cast<double>(k));
        const auto ku = static_cast<std::size_t>(k);
        if (2 * k == n) {
            spec[ku] = {amp * (phase(rng) < std::numbers::pi ? 1.0 : -1.0), 0.0};
        } else {
            spec[ku] = std::polar(amp, phase(rng));
            spec[static_cast<std::size_t>(n - k)] = std::conj(spec[ku]);
        }
    }
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> time;
    fft.inv(time, spec);
    for (Eigen::Index i = 0; i < n; ++i)
        out[i] = time[static_cast<std::size_t>(i)].real();
    out.array() -= out.mean();
    out *= rms / std::sqrt(out.squaredNorm() / static_cast<double>(n));
    return out;
}

SynthEeg gen_eeg(const EegSynthSpec& spec)
{
    check_rate(spec.rate, spec.duration_s);
    if (spec.channels < 1)
        throw ConfigError("synthetic EEG needs at least one channel");
    if (spec.pink_noise_rms < 0.0)
        throw ConfigError("amplitudes must be non-negative");
    auto check_sine = [&](const Sinusoid& s) {
        if (s.amplitude_uv < 0.0)
            throw ConfigError("amplitudes must be non-negative");
        if (!(s.freq_hz > 0.0) || s.freq_hz >= spec.rate / 2.0)
            throw ConfigError("component frequency must lie in (0, Nyquist)");
    };
    for (const auto& s : spec.band_components)
        check_sine(s);
    if (spec.line_noise)
        check_sine(*spec.line_noise);

    const auto n = static_cast<Eigen::Index>(std::llround(spec.duration_s * spec.rate));
    SynthEeg out;
    out.rec.rate = spec.rate;
    out.rec.data.resize(spec.channels, n);
    out.rec.labels = default_labels(spec.channels);

    std::mt19937_64 phase_rng(derive_seed(spec.seed, 0));
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    std::vector<Sinusoid> sines = spec.band_components;
    if (spec.line_noise)
        sines.push_back(*spec.line_noise);

    for (int c = 0; c < spec.channels; ++c) {
        Eigen::VectorXd row = pink_noise(n, spec.pink_noise_rms, derive_seed(spec.seed, 1 + static_cast<std::uint64_t>(c)));
        for (const auto& s : sines) {
            const double ph = phase(phase_rng);
            if (s.amplitude_uv == 0.0)
                continue;
            for (Eigen::Index i = 0; i < n; ++i)
                row[i] += s.amplitude_uv * std::sin(kTwoPi * s.freq_hz * static_cast<double>(i) / spec.rate + ph);
        }
        out.rec.data.row(c) = row.transpose();
    }

    out.truth.components = spec.band_components;
    out.truth.pink_noise_rms = spec.pink_noise_rms;
    out.truth.line_noise = spec.line_noise;
    double power = spec.pink_noise_rms * spec.pink_noise_rms;
    for (const auto& s : sines)
        power += 0.5 * s.amplitude_uv * s.amplitude_uv;
    out.truth.predicted_rms = std::sqrt(power);
    return out;
}

SynthEcg gen_ecg(const EcgSynthSpec& spec)
{
    check_rate(spec.rate, spec.duration_s);
    if (spec.bpm < 30.0 || spec.bpm > 220.0)
        throw ConfigError("heart rate must be within 30..220 bpm");
    if (spec.rr_jitter_ms < 0.0)
        throw ConfigError("R-R jitter must be non-negative");
    if (!(spec.r_width_s > 0.0))
        throw ConfigError("R-wave width must be positive");

    const double period = 60.0 / spec.bpm;
    std::mt19937_64 rng(derive_seed(spec.seed, 0));
    std::normal_distribution<double> jitter(0.0, spec.rr_jitter_ms / 1000.0);

    SynthEcg out;
    out.true_beats.rate = spec.rate;
    for (int k = 0;; ++k) {
        const double nominal = 0.5 * period + k * period;
        if (nominal >= spec.duration_s)
            break;
        const double t = nominal + (spec.rr_jitter_ms > 0.0 ? jitter(rng) : 0.0);
        if (t < 0.0 || t >= spec.duration_s)
            continue;
        if (!out.true_beats.beat_times.empty() && t - out.true_beats.beat_times.back() < 0.2)
            continue;
        out.true_beats.beat_times.push_back(t);
    }

    const auto n = static_cast<Eigen::Index>(std::llround(spec.duration_s * spec.rate));
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (spec.r_amplitude != 0.0) {
        const double sigma = spec.r_width_s;
        const auto reach = static_cast<Eigen::Index>(std::ceil(6.0 * sigma * spec.rate));
        for (double t : out.true_beats.beat_times) {
            const auto centre = static_cast<Eigen::Index>(std::llround(t * spec.rate));
            for (Eigen::Index i = std::max<Eigen::Index>(0, centre - reach); i <= std::min(n - 1, centre + reach); ++i) {
                const double dt = static_cast<double>(i) / spec.rate - t;
                x[i] += spec.r_amplitude * std::exp(-0.5 * dt * dt / (sigma * sigma));
            }
        }
        if (std::isfinite(spec.noise_snr_db)) {
            const double signal_power = x.squaredNorm() / static_cast<double>(n);
            const double noise_sd = std::sqrt(signal_power / std::pow(10.0, spec.noise_snr_db / 10.0));
            std::mt19937_64 nrng(derive_seed(spec.seed, 1));
            std::normal_distribution<double> noise(0.0, noise_sd);
            for (Eigen::Index i = 0; i < n; ++i)
                x[i] += noise(nrng);
        }
    }
    out.rec.rate = spec.rate;
    out.rec.labels = {"ecg"};
    out.rec.data = x.transpose();
    return out;
}

MixResult mix_sources(const Eigen::MatrixXd& sources, const Eigen::MatrixXd& mixing, double rate,
                      std::uint64_t seed, double noise_rms)
{
    if (mixing.cols() != sources.rows())
        throw ConfigError("mixing matrix has " + std::to_string(mixing.cols()) + " columns for " +
                          std::to_string(sources.rows()) + " sources");
    if (mixing.rows() < mixing.cols() || Eigen::FullPivLU<Eigen::MatrixXd>(mixing).rank() < mixing.cols())
        throw ConfigError("mixing matrix is singular (not full column rank)");
    MixResult out;
    out.mixing = mixing;
    out.sources = sources;
    out.rec.rate = rate;
    out.rec.data = mixing * sources;
    out.rec.labels = default_labels(mixing.rows());
    if (noise_rms > 0.0) {
        std::mt19937_64 rng(derive_seed(seed, 2));
        std::normal_distribution<double> noise(0.0, noise_rms);
        for (Eigen::Index i = 0; i < out.rec.data.size(); ++i)
            out.rec.data.data()[i] += noise(rng);
    }
    return out;
}

Eigen::MatrixXd laplacian_sources(Eigen::Index rows, Eigen::Index samples, std::uint64_t seed)
{
    std::mt19937_64 rng(derive_seed(seed, 3));
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    const double b = 1.0 / std::sqrt(2.0);
    Eigen::MatrixXd s(rows, samples);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index j = 0; j < samples; ++j) {
            const double v = u(rng);
            s(r, j) = -b * (v < 0.0 ? -1.0 : 1.0) * std::log(1.0 - 2.0 * std::abs(v));
        }
    return s;
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed)
{
    std::mt19937_64 rng(derive_seed(seed, 4));
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = normal(rng);
    return m;
}

Recording berger_session(const BergerSpec& spec)
{
    check_rate(spec.rate, spec.segment_s);
    if (spec.channels < 1)
        throw ConfigError("Berger fixture needs at least one channel");
    const auto n = static_cast<Eigen::Index>(std::llround(spec.segment_s * spec.rate));

    Recording rec;
    rec.rate = spec.rate;
    rec.data.resize(spec.channels, 2 * n);
    if (spec.channels == montage::kAmplifierChannels)
        rec.labels = montage::channel_labels(montage::default_montage());
    else
        rec.labels = default_labels(spec.channels);

    std::mt19937_64 phase_rng(derive_seed(spec.seed, 5));
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    for (int c = 0; c < spec.channels; ++c) {
        const Eigen::VectorXd noise = pink_noise(n, spec.pink_noise_rms, derive_seed(spec.seed, 100 + static_cast<std::uint64_t>(c)));
        Eigen::VectorXd alpha = Eigen::VectorXd::Zero(2 * n);
        for (double f : spec.alpha_freqs) {
            const double ph = phase(phase_rng);
            for (Eigen::Index i = 0; i < 2 * n; ++i)
                alpha[i] += std::sin(kTwoPi * f * static_cast<double>(i) / spec.rate + ph);
        }
        Eigen::VectorXd line = Eigen::VectorXd::Zero(2 * n);
        if (spec.line_noise) {
            const double ph = phase(phase_rng);
            for (Eigen::Index i = 0; i < 2 * n; ++i)
                line[i] = spec.line_noise->amplitude_uv *
                          std::sin(kTwoPi * spec.line_noise->freq_hz * static_cast<double>(i) / spec.rate + ph);
        }
        rec.data.row(c).head(n) = (noise + spec.alpha_uv * alpha.head(n) + line.head(n)).transpose();
        rec.data.row(c).tail(n) =
            (noise + spec.closed_ratio * spec.alpha_uv * alpha.tail(n) + line.tail(n)).transpose();
    }
    rec.events = {{"open", 0.0, spec.segment_s}, {"closed", spec.segment_s, 2.0 * spec.segment_s}};
    return rec;
}

EcgInEeg ecg_in_eeg(const EcgInEegSpec& spec)
{
    check_rate(spec.rate, spec.duration_s);
    EcgSynthSpec ecg;
    ecg.rate = spec.rate;
    ecg.duration_s = spec.duration_s;
    ecg.bpm = spec.bpm;
    ecg.rr_jitter_ms = spec.rr_jitter_ms;
    ecg.r_amplitude = 1.0;
    ecg.seed = derive_seed(spec.seed, 6);
    auto heart = gen_ecg(ecg);
    Eigen::VectorXd source = heart.rec.data.row(0).transpose();
    source.array() -= source.mean();
    source /= std::sqrt(source.squaredNorm() / static_cast<double>(source.size()));

    const auto n = source.size();
    EcgInEeg out;
    out.true_beats = heart.true_beats;
    out.rec.rate = spec.rate;
    out.rec.labels = default_labels(spec.channels);
    out.rec.data.resize(spec.channels, n);
    out.ecg_weights.resize(spec.channels);
    std::mt19937_64 rng(derive_seed(spec.seed, 7));
    std::uniform_real_distribution<double> gain(0.5, 1.5);
    const double base = spec.pink_noise_rms * std::pow(10.0, spec.relative_db / 20.0);
    for (int c = 0; c < spec.channels; ++c) {
        out.ecg_weights[c] = base * gain(rng);
        out.rec.data.row(c) =
            (pink_noise(n, spec.pink_noise_rms, derive_seed(spec.seed, 200 + static_cast<std::uint64_t>(c))) +
             out.ecg_weights[c] * source)
                .transpose();
    }
    return out;
}

} // namespace earpipe::synth
