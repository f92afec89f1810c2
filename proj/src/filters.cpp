#include "earpipe/filters.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace earpipe::filters {

namespace {

constexpr double kPi = std::numbers::pi;

double sinc(double x)
{
    return x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x);
}

void check_order(int order)
{
    if (order <= 0 || order % 2 != 0)
        throw ConfigError("filter order must be a positive even integer (got " + std::to_string(order) + ")");
}

void check_cutoff(double cutoff, double rate)
{
    if (!(rate > 0.0))
        throw ConfigError("sampling rate must be positive");
    if (cutoff >= rate / 2.0)
        throw ConfigError("cutoff ≥ Nyquist (" + std::to_string(cutoff) + " Hz ≥ " + std::to_string(rate / 2.0) +
                          " Hz)");
    if (!(cutoff > 0.0))
        throw ConfigError("cutoff must be positive");
}

Eigen::VectorXd windowed_lowpass(double cutoff, int order, double rate, Window window)
{
    const double fc = cutoff / rate;
    const Eigen::VectorXd w = make_window(window, order + 1);
    Eigen::VectorXd h(order + 1);
    const double mid = order / 2.0;
    for (int k = 0; k <= order; ++k)
        h[k] = 2.0 * fc * sinc(2.0 * fc * (k - mid)) * w[k];
    return h / h.sum();
}

} // namespace

std::complex<double> FirFilter::response(double freq_hz, double rate) const
{
    std::complex<double> acc{0.0, 0.0};
    const double omega = 2.0 * kPi * freq_hz / rate;
    for (Eigen::Index k = 0; k < taps.size(); ++k)
        acc += taps[k] * std::polar(1.0, -omega * static_cast<double>(k));
    return acc;
}

Recording baseline_correct(const Recording& rec)
{
    if (rec.samples() == 0)
        throw DataError("baseline correction needs at least one sample per channel");
    const Eigen::VectorXd mean = rec.data.rowwise().mean();
    return rec.with_data(rec.data.colwise() - mean);
}

Eigen::VectorXd make_window(Window w, Eigen::Index n)
{
    Eigen::VectorXd out(n);
    if (n == 1) {
        out[0] = 1.0;
        return out;
    }
    const double a0 = w == Window::Hann ? 0.5 : 0.54;
    for (Eigen::Index k = 0; k < n; ++k)
        out[k] = a0 - (1.0 - a0) * std::cos(2.0 * kPi * static_cast<double>(k) / static_cast<double>(n - 1));
    return out;
}

FirFilter design_fir(const FirSpec& spec, double rate)
{
    check_order(spec.order);
    check_cutoff(spec.cutoff_hz, rate);

    FirFilter f;
    f.group_delay = spec.order / 2;
    f.taps = windowed_lowpass(spec.cutoff_hz, spec.order, rate, spec.window);
    if (spec.kind == FirKind::Highpass) {
        f.taps = -f.taps;
        f.taps[f.group_delay] += 1.0;
    }
    return f;
}

FirFilter design_bandpass(double lo_hz, double hi_hz, int order, double rate, Window window)
{
    check_order(order);
    check_cutoff(lo_hz, rate);
    check_cutoff(hi_hz, rate);
    if (!(lo_hz < hi_hz))
        throw ConfigError("bandpass needs lo < hi");
    FirFilter f;
    f.group_delay = order / 2;
    f.taps = windowed_lowpass(hi_hz, order, rate, window) - windowed_lowpass(lo_hz, order, rate, window);
    return f;
}

Eigen::VectorXd apply_zero_phase(const Eigen::Ref<const Eigen::VectorXd>& x, const FirFilter& f)
{
    const Eigen::Index n = x.size();
    const Eigen::Index m = f.taps.size();
    if (n <= m)
        throw DataError("segment of " + std::to_string(n) + " samples is too short for a " + std::to_string(m) +
                        "-tap filter (minimum length " + std::to_string(m + 1) + ")");
    const Eigen::Index d = f.group_delay;
    // y[i] = sum_k h[k] x[i + d - k]; h is symmetric so this is a correlation.
    const Eigen::VectorXd h_rev = f.taps.reverse();
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, i + d - (m - 1));
        const Eigen::Index hi = std::min<Eigen::Index>(n - 1, i + d);
        // x[j] pairs with h[i + d - j] = h_rev[j - (i + d - (m - 1))]
        const Eigen::Index off = lo - (i + d - (m - 1));
        y[i] = x.segment(lo, hi - lo + 1).dot(h_rev.segment(off, hi - lo + 1));
    }
    return y;
}

Recording apply_zero_phase(const Recording& rec, const FirFilter& f)
{
    Eigen::MatrixXd out(rec.channels(), rec.samples());
    for (Eigen::Index c = 0; c < rec.channels(); ++c)
        out.row(c) = apply_zero_phase(rec.data.row(c).transpose(), f).transpose();
    Recording r = rec.with_data(std::move(out));
    r.edge_samples = std::max(r.edge_samples, static_cast<std::size_t>(f.group_delay));
    return r;
}

namespace {

Eigen::MatrixXd line_design(Eigen::Index start, Eigen::Index len, double rate, double f0, int harmonics)
{
    std::vector<double> freqs;
    for (int k = 1; k <= harmonics; ++k)
        if (k * f0 < rate / 2.0)
            freqs.push_back(k * f0);
    Eigen::MatrixXd a(len, 1 + 2 * static_cast<Eigen::Index>(freqs.size()));
    for (Eigen::Index i = 0; i < len; ++i) {
        const double t = static_cast<double>(start + i) / rate;
        a(i, 0) = 1.0;
        for (std::size_t k = 0; k < freqs.size(); ++k) {
            const double ph = 2.0 * kPi * freqs[k] * t;
            a(i, 1 + 2 * static_cast<Eigen::Index>(k)) = std::sin(ph);
            a(i, 2 + 2 * static_cast<Eigen::Index>(k)) = std::cos(ph);
        }
    }
    return a;
}

// Fitted sinusoidal part only; the constant column absorbs window offsets.
Eigen::VectorXd fit_line(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Index start, double rate,
                         const LineNoiseConfig& cfg)
{
    const Eigen::MatrixXd a = line_design(start, x.size(), rate, cfg.f0_hz, cfg.harmonics);
    Eigen::VectorXd beta = a.colPivHouseholderQr().solve(x);
    beta[0] = 0.0;
    return a * beta;
}

} // namespace

Eigen::VectorXd remove_line_noise(const Eigen::Ref<const Eigen::VectorXd>& x, double rate,
                                  const LineNoiseConfig& cfg)
{
    if (!(cfg.f0_hz > 0.0) || cfg.f0_hz >= rate / 2.0)
        throw ConfigError("line frequency must lie in (0, Nyquist)");
    if (!(cfg.win_s > 0.0) || !(cfg.step_s > 0.0))
        throw ConfigError("line-noise window and step must be positive");
    if (cfg.harmonics < 1)
        throw ConfigError("line-noise harmonics must be >= 1");

    const Eigen::Index n = x.size();
    if (n == 0)
        return x;
    const auto win = static_cast<Eigen::Index>(std::llround(cfg.win_s * rate));
    if (win >= n || win < 3)
        return x - fit_line(x, 0, rate, cfg);
    const Eigen::Index step = std::clamp<Eigen::Index>(std::llround(cfg.step_s * rate), 1, win);

    std::vector<Eigen::Index> starts;
    for (Eigen::Index s = 0; s + win <= n; s += step)
        starts.push_back(s);
    if (starts.back() + win < n)
        starts.push_back(n - win);

    Eigen::VectorXd taper(win);
    for (Eigen::Index i = 0; i < win; ++i)
        taper[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * (static_cast<double>(i) + 0.5) / static_cast<double>(win));

    Eigen::VectorXd estimate = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd weight = Eigen::VectorXd::Zero(n);
    for (auto s : starts) {
        const Eigen::VectorXd fit = fit_line(x.segment(s, win), s, rate, cfg);
        estimate.segment(s, win) += taper.cwiseProduct(fit);
        weight.segment(s, win) += taper;
    }
    return x - estimate.cwiseQuotient(weight);
}

Recording remove_line_noise(const Recording& rec, const LineNoiseConfig& cfg)
{
    Eigen::MatrixXd out(rec.channels(), rec.samples());
    for (Eigen::Index c = 0; c < rec.channels(); ++c)
        out.row(c) = remove_line_noise(rec.data.row(c).transpose(), rec.rate, cfg).transpose();
    return rec.with_data(std::move(out));
}

} // namespace earpipe::filters
