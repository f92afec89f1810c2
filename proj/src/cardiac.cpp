#include "earpipe/cardiac.hpp"

#include "earpipe/filters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace earpipe::cardiac {

namespace {

struct Candidate {
    Eigen::Index index;
    double height;
};

Eigen::VectorXd five_point_derivative(const Eigen::VectorXd& x, double rate)
{
    const Eigen::Index n = x.size();
    auto at = [&](Eigen::Index i) { return (i < 0 || i >= n) ? 0.0 : x[i]; };
    Eigen::VectorXd d(n);
    for (Eigen::Index i = 0; i < n; ++i)
        d[i] = (2.0 * at(i + 1) + at(i + 2) - at(i - 2) - 2.0 * at(i - 1)) * rate / 8.0;
    return d;
}

Eigen::VectorXd moving_integral(const Eigen::VectorXd& x, Eigen::Index width)
{
    const Eigen::Index n = x.size();
    Eigen::VectorXd cum(n + 1);
    cum[0] = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        cum[i + 1] = cum[i] + x[i];
    Eigen::VectorXd out(n);
    const Eigen::Index half = width / 2;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, i - half);
        const Eigen::Index hi = std::min<Eigen::Index>(n, i - half + width);
        out[i] = (cum[hi] - cum[lo]) / static_cast<double>(width);
    }
    return out;
}

// Local maxima, thinned so that no two survivors are closer than min_gap.
std::vector<Candidate> find_candidates(const Eigen::VectorXd& y, Eigen::Index min_gap)
{
    std::vector<Candidate> all;
    for (Eigen::Index i = 1; i + 1 < y.size(); ++i)
        if (y[i] > 0.0 && y[i] > y[i - 1] && y[i] >= y[i + 1])
            all.push_back({i, y[i]});

    std::vector<Candidate> by_height = all;
    std::stable_sort(by_height.begin(), by_height.end(),
                     [](const Candidate& a, const Candidate& b) { return a.height > b.height; });
    std::vector<Candidate> kept;
    for (const auto& c : by_height) {
        const bool clear = std::none_of(kept.begin(), kept.end(), [&](const Candidate& k) {
            return std::abs(k.index - c.index) < min_gap;
        });
        if (clear)
            kept.push_back(c);
    }
    std::sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) { return a.index < b.index; });
    return kept;
}

// Sub-sample location of the bandpassed maximum near idx.
double refine(const Eigen::VectorXd& bp, Eigen::Index idx, Eigen::Index radius)
{
    const Eigen::Index lo = std::max<Eigen::Index>(0, idx - radius);
    const Eigen::Index hi = std::min<Eigen::Index>(bp.size() - 1, idx + radius);
    Eigen::Index best = lo;
    for (Eigen::Index i = lo; i <= hi; ++i)
        if (bp[i] > bp[best])
            best = i;
    double offset = 0.0;
    if (best > 0 && best + 1 < bp.size()) {
        const double a = bp[best - 1], b = bp[best], c = bp[best + 1];
        const double denom = a - 2.0 * b + c;
        if (denom < 0.0)
            offset = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
    }
    return static_cast<double>(best) + offset;
}

} // namespace

BeatSeries pan_tompkins(const Eigen::Ref<const Eigen::VectorXd>& x, double rate, const PanTompkinsConfig& cfg)
{
    if (rate < 100.0)
        throw DataError("QRS detection needs a sampling rate of at least 100 Hz (got " + std::to_string(rate) + ")");
    if (static_cast<double>(x.size()) < 5.0 * rate)
        throw DataError("QRS detection needs at least 5 s of data");

    BeatSeries out;
    out.rate = rate;

    int order = static_cast<int>(std::lround(cfg.bandpass_span_s * rate / 2.0)) * 2;
    order = std::max(order, 8);
    const auto bp_filter = filters::design_bandpass(cfg.band_lo_hz, cfg.band_hi_hz, order, rate);
    const Eigen::VectorXd bp = filters::apply_zero_phase(x, bp_filter);
    const Eigen::VectorXd sq = five_point_derivative(bp, rate).array().square();
    const auto width = std::max<Eigen::Index>(1, std::lround(cfg.integration_s * rate));
    const Eigen::VectorXd mwi = moving_integral(sq, width);

    const auto refractory = static_cast<Eigen::Index>(std::lround(cfg.refractory_s * rate));
    const auto candidates = find_candidates(mwi, refractory);
    if (candidates.empty())
        return out;

    const Eigen::Index learn = std::min<Eigen::Index>(mwi.size(), std::lround(cfg.learning_s * rate));
    double signal_level = mwi.head(learn).maxCoeff() / 3.0;
    double noise_level = mwi.head(learn).mean() / 2.0;
    double threshold = noise_level + cfg.threshold_mix * (signal_level - noise_level);

    std::vector<Eigen::Index> beats;
    auto mean_rr = [&]() {
        const std::size_t n = std::min<std::size_t>(8, beats.size() - 1);
        return static_cast<double>(beats.back() - beats[beats.size() - 1 - n]) / static_cast<double>(n);
    };

    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
        const auto& c = candidates[ci];

        if (beats.size() >= 2 && static_cast<double>(c.index - beats.back()) > cfg.searchback_factor * mean_rr()) {
            const Candidate* best = nullptr;
            for (std::size_t j = 0; j < ci; ++j) {
                const auto& p = candidates[j];
                if (p.index <= beats.back() + refractory || p.index >= c.index - refractory)
                    continue;
                if (p.height > 0.5 * threshold && (!best || p.height > best->height))
                    best = &p;
            }
            if (best) {
                beats.push_back(best->index);
                signal_level = 0.25 * best->height + 0.75 * signal_level;
                threshold = noise_level + cfg.threshold_mix * (signal_level - noise_level);
            }
        }

        if (c.height >= threshold && (beats.empty() || c.index - beats.back() >= refractory)) {
            beats.push_back(c.index);
            signal_level = 0.125 * c.height + 0.875 * signal_level;
        } else {
            noise_level = 0.125 * c.height + 0.875 * noise_level;
        }
        threshold = noise_level + cfg.threshold_mix * (signal_level - noise_level);
    }

    const auto radius = static_cast<Eigen::Index>(std::lround(cfg.refine_s * rate));
    for (auto b : beats) {
        const double t = refine(bp, b, radius) / rate;
        if (!out.beat_times.empty() && t - out.beat_times.back() < cfg.refractory_s)
            continue;
        out.beat_times.push_back(t);
    }
    return out;
}

RrSeries rr_periods(const BeatSeries& beats)
{
    RrSeries rr;
    for (std::size_t i = 1; i < beats.beat_times.size(); ++i) {
        rr.intervals_ms.push_back((beats.beat_times[i] - beats.beat_times[i - 1]) * 1000.0);
        rr.anchored_at.push_back(beats.beat_times[i - 1]);
    }
    return rr;
}

double ecg_likeness(const RrSeries& rr, double lo_ms, double hi_ms)
{
    const auto& v = rr.intervals_ms;
    if (v.size() < 2)
        return 0.0;
    const auto n = static_cast<double>(v.size());
    const double in_range =
        static_cast<double>(std::count_if(v.begin(), v.end(), [&](double x) { return x >= lo_ms && x <= hi_ms; })) /
        n;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v)
        ss += (x - mean) * (x - mean);
    const double cv = std::sqrt(ss / (n - 1.0)) / mean;
    return in_range * std::max(0.0, 1.0 - cv);
}

RrFilterResult rr_outlier_filter(const RrSeries& rr, const RrFilterConfig& cfg)
{
    const auto& v = rr.intervals_ms;
    const std::size_t n = v.size();
    RrFilterResult res;
    res.dropped.assign(n, false);
    const std::size_t half = cfg.median_window / 2;

    auto median = [](std::vector<double> w) {
        const auto mid = w.size() / 2;
        std::nth_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(mid), w.end());
        double m = w[mid];
        if (w.size() % 2 == 0)
            m = 0.5 * (m + *std::max_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(mid)));
        return m;
    };

    // range rule first; the rolling median only sees in-range intervals
    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < n; ++i) {
        if (v[i] < cfg.min_ms || v[i] > cfg.max_ms)
            res.dropped[i] = true;
        else
            ok.push_back(i);
    }
    // residuals from the centred rolling median, judged against their own
    // series-wide scaled MAD (an 11-point MAD alone is too noisy a scale)
    std::vector<double> resid(ok.size());
    for (std::size_t k = 0; k < ok.size(); ++k) {
        const std::size_t lo = k >= half ? k - half : 0;
        const std::size_t hi = std::min(ok.size(), k + half + 1);
        std::vector<double> w;
        for (std::size_t j = lo; j < hi; ++j)
            w.push_back(v[ok[j]]);
        resid[k] = v[ok[k]] - median(w);
    }
    if (!resid.empty()) {
        std::vector<double> dev(resid.size());
        for (std::size_t k = 0; k < resid.size(); ++k)
            dev[k] = std::abs(resid[k]);
        const double smad = 1.4826 * median(dev);
        for (std::size_t k = 0; k < ok.size(); ++k)
            if (std::abs(resid[k]) > cfg.mad_limit * smad)
                res.dropped[ok[k]] = true;
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (res.dropped[i]) {
            ++res.dropped_count;
        } else {
            res.kept.intervals_ms.push_back(v[i]);
            if (i < rr.anchored_at.size())
                res.kept.anchored_at.push_back(rr.anchored_at[i]);
        }
    }
    return res;
}

BeatMatch match_beats(const BeatSeries& ref, const BeatSeries& alt, double tol)
{
    if (!(tol > 0.0))
        throw ConfigError("beat matching tolerance must be positive");
    const auto& r = ref.beat_times;
    const auto& a = alt.beat_times;

    std::vector<std::tuple<double, double, std::size_t, std::size_t>> cand;
    std::size_t start = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        while (start < a.size() && a[start] < r[i] - tol)
            ++start;
        for (std::size_t j = start; j < a.size() && a[j] <= r[i] + tol; ++j)
            cand.emplace_back(std::abs(r[i] - a[j]), r[i] + a[j], i, j);
    }
    std::sort(cand.begin(), cand.end());

    std::vector<bool> used_r(r.size(), false), used_a(a.size(), false);
    BeatMatch m;
    m.tolerance = tol;
    for (const auto& [d, key, i, j] : cand) {
        if (used_r[i] || used_a[j])
            continue;
        used_r[i] = used_a[j] = true;
        m.pairs.push_back({i, j});
    }
    std::sort(m.pairs.begin(), m.pairs.end(), [](const BeatPair& x, const BeatPair& y) { return x.ref < y.ref; });
    m.unmatched_ref = r.size() - m.pairs.size();
    m.unmatched_alt = a.size() - m.pairs.size();
    return m;
}

PairedRr matched_intervals(const BeatSeries& ref, const BeatSeries& alt, const BeatMatch& match)
{
    PairedRr out;
    for (std::size_t k = 1; k < match.pairs.size(); ++k) {
        const auto& p = match.pairs[k - 1];
        const auto& q = match.pairs[k];
        if (q.ref != p.ref + 1 || q.alt != p.alt + 1)
            continue;
        out.ref_ms.push_back((ref.beat_times[q.ref] - ref.beat_times[p.ref]) * 1000.0);
        out.alt_ms.push_back((alt.beat_times[q.alt] - alt.beat_times[p.alt]) * 1000.0);
        out.anchored_at.push_back(ref.beat_times[p.ref]);
    }
    return out;
}

} // namespace earpipe::cardiac
