#include "earpipe/spectral.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>

namespace earpipe::spectral {

namespace {

Eigen::VectorXd hamming(Eigen::Index n)
{
    Eigen::VectorXd w(n);
    for (Eigen::Index k = 0; k < n; ++k)
        w[k] = 0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n - 1));
    return w;
}

void check_config(Eigen::Index n, double rate, const WelchConfig& cfg)
{
    if (!(rate > 0.0))
        throw ConfigError("sampling rate must be positive");
    if (cfg.segment < 2)
        throw ConfigError("Welch segment length must be >= 2");
    if (cfg.overlap < 0 || cfg.overlap >= cfg.segment)
        throw ConfigError("Welch overlap must be in [0, segment)");
    if (n < cfg.segment)
        throw DataError("signal of " + std::to_string(n) + " samples is shorter than the minimum length " +
                        std::to_string(cfg.segment) + " for Welch estimation");
}

double median_of(std::vector<double> v)
{
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1)
        return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

} // namespace

PsdEstimate welch_psd(const Eigen::Ref<const Eigen::VectorXd>& x, double rate, const WelchConfig& cfg)
{
    check_config(x.size(), rate, cfg);
    const Eigen::Index seg = cfg.segment;
    const Eigen::Index hop = seg - cfg.overlap;
    const Eigen::Index nwin = (x.size() - seg) / hop + 1;
    const Eigen::Index nbins = seg / 2 + 1;

    const Eigen::VectorXd w = hamming(seg);
    const double scale = 1.0 / (rate * w.squaredNorm());

    Eigen::FFT<double> fft;
    std::vector<double> buf(static_cast<std::size_t>(seg));
    std::vector<std::complex<double>> spec;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(nbins);
    for (Eigen::Index k = 0; k < nwin; ++k) {
        const auto s = x.segment(k * hop, seg);
        const double mean = s.mean();
        for (Eigen::Index i = 0; i < seg; ++i)
            buf[static_cast<std::size_t>(i)] = (s[i] - mean) * w[i];
        fft.fwd(spec, buf);
        for (Eigen::Index b = 0; b < nbins; ++b)
            acc[b] += std::norm(spec[static_cast<std::size_t>(b)]);
    }

    PsdEstimate out;
    out.window_count = nwin;
    out.freqs = Eigen::VectorXd::LinSpaced(nbins, 0.0, static_cast<double>(nbins - 1)) * (rate / seg);
    Eigen::VectorXd p = acc * (scale / static_cast<double>(nwin));
    const Eigen::Index last = (seg % 2 == 0) ? nbins - 1 : nbins;
    p.segment(1, last - 1) *= 2.0;
    out.power = p.transpose();
    return out;
}

PsdEstimate welch_psd(const Recording& rec, const WelchConfig& cfg)
{
    if (rec.channels() == 0)
        throw DataError("recording has no channels");
    PsdEstimate out;
    for (Eigen::Index c = 0; c < rec.channels(); ++c) {
        auto one = welch_psd(rec.data.row(c).transpose(), rec.rate, cfg);
        if (c == 0) {
            out = one;
            out.power.resize(rec.channels(), one.power.cols());
        }
        out.power.row(c) = one.power.row(0);
    }
    return out;
}

PsdEstimate mean_psd(const std::vector<PsdEstimate>& parts)
{
    if (parts.empty())
        throw DataError("no PSD estimates to average");
    PsdEstimate out = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const auto& p = parts[i];
        if (p.power.rows() != out.power.rows() || p.power.cols() != out.power.cols() || p.scale != out.scale)
            throw DataError("PSD estimates differ in shape or scale");
        out.power += p.power;
        out.window_count += p.window_count;
    }
    out.power /= static_cast<double>(parts.size());
    return out;
}

PsdEstimate to_db(const PsdEstimate& psd)
{
    if (psd.scale != Scale::Linear)
        throw DataError("PSD is already in dB");
    PsdEstimate out = psd;
    out.power = 10.0 * psd.power.array().max(kPowerFloor).log10();
    out.scale = Scale::Decibel;
    return out;
}

PsdEstimate to_linear(const PsdEstimate& psd)
{
    if (psd.scale != Scale::Decibel)
        throw DataError("PSD is already linear");
    PsdEstimate out = psd;
    out.power = (psd.power.array() / 10.0 * std::log(10.0)).exp();
    out.scale = Scale::Linear;
    return out;
}

std::vector<BandDefinition> default_bands()
{
    return {{"Theta", 4.0, 7.0}, {"Alpha", 8.0, 12.0}, {"Beta", 13.0, 30.0}, {"Gamma", 31.0, 40.0}};
}

std::vector<Eigen::Index> band_bins(const Eigen::VectorXd& freqs, const BandDefinition& band)
{
    std::vector<Eigen::Index> out;
    for (Eigen::Index k = 0; k < freqs.size(); ++k)
        if (freqs[k] >= band.lo_hz && freqs[k] <= band.hi_hz)
            out.push_back(k);
    return out;
}

Eigen::MatrixXd band_power(const PsdEstimate& psd_db, const std::vector<BandDefinition>& bands)
{
    if (psd_db.scale != Scale::Decibel)
        throw DataError("band power expects a dB-scaled PSD");
    const double nyquist = psd_db.freqs.size() ? psd_db.freqs[psd_db.freqs.size() - 1] : 0.0;
    Eigen::MatrixXd out(psd_db.power.rows(), static_cast<Eigen::Index>(bands.size()));
    for (std::size_t b = 0; b < bands.size(); ++b) {
        const auto& band = bands[b];
        if (!(band.lo_hz < band.hi_hz))
            throw ConfigError("band " + band.name + ": lo must be below hi");
        if (band.hi_hz > nyquist)
            throw ConfigError("band " + band.name + " extends beyond Nyquist (" + std::to_string(nyquist) + " Hz)");
        const auto bins = band_bins(psd_db.freqs, band);
        if (bins.empty())
            throw ConfigError("band " + band.name + " contains no frequency bins");
        for (Eigen::Index c = 0; c < psd_db.power.rows(); ++c) {
            std::vector<double> v;
            v.reserve(bins.size());
            for (auto k : bins)
                v.push_back(psd_db.power(c, k));
            out(c, static_cast<Eigen::Index>(b)) = median_of(std::move(v));
        }
    }
    return out;
}

QcReport qc_report(const Recording& rec, const PsdEstimate& psd, const QcConfig& cfg)
{
    if (psd.scale != Scale::Linear)
        throw DataError("QC expects a linear-scale PSD");
    if (psd.power.rows() != rec.channels())
        throw DataError("PSD and recording channel counts differ");

    QcReport rep;
    for (Eigen::Index c = 0; c < rec.channels(); ++c) {
        ChannelQc q;
        const auto row = rec.data.row(c);
        q.rms_uv = row.size() ? std::sqrt(row.squaredNorm() / static_cast<double>(row.size())) : 0.0;
        q.amplitude_typical = q.rms_uv >= cfg.typical_lo_uv && q.rms_uv <= cfg.typical_hi_uv;
        double total = 0.0, hf = 0.0, line = 0.0;
        for (Eigen::Index k = 0; k < psd.freqs.size(); ++k) {
            const double p = psd.power(c, k);
            const double f = psd.freqs[k];
            total += p;
            if (f >= cfg.hf_lo_hz && f <= cfg.hf_hi_hz)
                hf += p;
            if (std::abs(f - cfg.line_hz) <= cfg.line_halfwidth_hz)
                line += p;
        }
        if (total > 0.0) {
            q.hf_ratio = std::clamp(hf / total, 0.0, 1.0);
            q.line_ratio = std::clamp(line / total, 0.0, 1.0);
        }
        rep.channels.push_back(q);
    }
    return rep;
}

} // namespace earpipe::spectral
