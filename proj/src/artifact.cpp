#include "earpipe/artifact.hpp"

#include "earpipe/cardiac.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace earpipe::artifact {

namespace {

// W <- (W W^T)^{-1/2} W
Eigen::MatrixXd symmetric_decorrelate(const Eigen::MatrixXd& w)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w * w.transpose());
    const Eigen::VectorXd inv_sqrt = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    return es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose() * w;
}

double median_of(std::vector<double> v)
{
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0)
        m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    return m;
}

Eigen::VectorXd row_rms(const Eigen::Ref<const Eigen::MatrixXd>& x)
{
    return (x.rowwise().squaredNorm() / static_cast<double>(x.cols())).cwiseSqrt();
}

std::vector<Eigen::Index> window_starts(Eigen::Index n, Eigen::Index len, Eigen::Index hop)
{
    std::vector<Eigen::Index> out;
    for (Eigen::Index s = 0; s + len <= n; s += hop)
        out.push_back(s);
    if (!out.empty() && out.back() + len < n)
        out.push_back(n - len);
    return out;
}

} // namespace

IcaResult ica_decompose(const Recording& rec, Eigen::Index n_components, std::uint64_t seed, const IcaConfig& cfg)
{
    const Eigen::Index nch = rec.channels();
    const Eigen::Index n = rec.samples();
    if (n_components < 1 || n_components > nch)
        throw ConfigError("ICA components must be in [1, " + std::to_string(nch) + "]");
    if (n < 20 * nch)
        throw DataError("ICA needs at least " + std::to_string(20 * nch) + " samples for " + std::to_string(nch) +
                        " channels (got " + std::to_string(n) + ")");
    if (cfg.max_iter < 1)
        throw ConfigError("ICA max iterations must be positive");

    IcaResult res;
    res.channel_means = rec.data.rowwise().mean();
    const Eigen::MatrixXd xc = rec.data.colwise() - res.channel_means;
    const Eigen::MatrixXd cov = xc * xc.transpose() / static_cast<double>(n);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    // descending order
    const Eigen::VectorXd evals = es.eigenvalues().reverse();
    const Eigen::MatrixXd evecs = es.eigenvectors().rowwise().reverse();
    const double top = evals[0];
    Eigen::Index rank = 0;
    while (rank < nch && top > 0.0 && evals[rank] > top * cfg.rank_tolerance)
        ++rank;
    if (rank == 0)
        throw DataError("ICA input has zero variance");
    if (n_components > rank) {
        res.warnings.push_back("input rank " + std::to_string(rank) + " is below the requested " +
                               std::to_string(n_components) + " components; reduced to " + std::to_string(rank));
        n_components = rank;
    }

    const Eigen::MatrixXd e = evecs.leftCols(n_components);
    const Eigen::VectorXd d = evals.head(n_components);
    const Eigen::MatrixXd whitening = d.cwiseSqrt().cwiseInverse().asDiagonal() * e.transpose();
    const Eigen::MatrixXd dewhitening = e * d.cwiseSqrt().asDiagonal();
    const Eigen::MatrixXd z = whitening * xc;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd w(n_components, n_components);
    for (Eigen::Index i = 0; i < w.size(); ++i)
        w.data()[i] = normal(rng);
    w = symmetric_decorrelate(w);

    const double inv_n = 1.0 / static_cast<double>(n);
    for (res.iterations = 1; res.iterations <= cfg.max_iter; ++res.iterations) {
        // tanh via exp, which Eigen vectorizes for double
        const Eigen::ArrayXXd g = 1.0 - 2.0 / ((2.0 * (w * z).array()).exp() + 1.0);
        const Eigen::VectorXd g_prime_mean = (1.0 - g.square()).rowwise().mean();
        Eigen::MatrixXd w_new = g.matrix() * z.transpose() * inv_n - g_prime_mean.asDiagonal() * w;
        w_new = symmetric_decorrelate(w_new);
        const double change = ((w_new * w.transpose()).diagonal().cwiseAbs().array() - 1.0).abs().maxCoeff();
        w = std::move(w_new);
        if (change < cfg.tolerance) {
            res.converged = true;
            break;
        }
    }
    res.iterations = std::min(res.iterations, cfg.max_iter);
    if (!res.converged)
        res.warnings.push_back("ICA did not converge in " + std::to_string(cfg.max_iter) + " iterations");

    Eigen::MatrixXd unmixing = w * whitening;
    Eigen::MatrixXd mixing = dewhitening * w.transpose();

    // Order components by projected variance, then fix sign so the largest
    // mixing weight of each component is positive.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n_components));
    for (Eigen::Index i = 0; i < n_components; ++i)
        order[static_cast<std::size_t>(i)] = i;
    const Eigen::VectorXd col_norm = mixing.colwise().squaredNorm().transpose();
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return col_norm[a] > col_norm[b]; });

    res.unmixing.resize(n_components, nch);
    res.mixing.resize(nch, n_components);
    for (Eigen::Index k = 0; k < n_components; ++k) {
        const Eigen::Index src = order[static_cast<std::size_t>(k)];
        Eigen::Index arg = 0;
        mixing.col(src).cwiseAbs().maxCoeff(&arg);
        const double sign = mixing(arg, src) < 0.0 ? -1.0 : 1.0;
        res.unmixing.row(k) = sign * unmixing.row(src);
        res.mixing.col(k) = sign * mixing.col(src);
    }
    res.sources = res.unmixing * xc;
    return res;
}

std::vector<EcgComponent> score_ecg_sources(const Eigen::MatrixXd& sources, double rate)
{
    std::vector<EcgComponent> out;
    for (Eigen::Index k = 0; k < sources.rows(); ++k) {
        const Eigen::ArrayXd c = sources.row(k).transpose().array() - sources.row(k).mean();
        const double m2 = c.square().mean();
        const double kurt = m2 > 0.0 ? c.square().square().mean() / (m2 * m2) - 3.0 : 0.0;
        EcgComponent best{k, 0.0, false, kurt};
        if (!(kurt >= kMinEcgKurtosis)) {
            out.push_back(best);
            continue;
        }
        for (bool inverted : {false, true}) {
            const Eigen::VectorXd x = (inverted ? -1.0 : 1.0) * sources.row(k).transpose();
            double score = 0.0;
            try {
                score = cardiac::ecg_likeness(cardiac::rr_periods(cardiac::pan_tompkins(x, rate)));
            } catch (const DataError&) {
                score = 0.0;
            }
            if (score > best.score)
                best = {k, score, inverted, kurt};
        }
        out.push_back(best);
    }
    return out;
}

std::optional<EcgComponent> select_ecg_ic(const IcaResult& ica, double rate, double min_score)
{
    const auto scores = score_ecg_sources(ica.sources, rate);
    std::optional<EcgComponent> best;
    for (const auto& s : scores)
        if (!best || s.score > best->score)
            best = s;
    if (!best || best->score < min_score)
        return std::nullopt;
    return best;
}

AsrModel asr_calibrate(const Recording& rec, const AsrConfig& cfg)
{
    if (!(cfg.burst_k > 0.0))
        throw ConfigError("ASR burst criterion must be positive");
    if (cfg.window_criterion < 0.0 || cfg.window_criterion > 1.0)
        throw ConfigError("ASR window criterion must be in [0, 1]");
    if (!(cfg.calib_win_s > 0.0) || !(cfg.proc_win_s > 0.0))
        throw ConfigError("ASR window lengths must be positive");

    const Eigen::Index nch = rec.channels();
    const Eigen::Index len = std::max<Eigen::Index>(2, std::lround(cfg.calib_win_s * rec.rate));
    const Eigen::Index hop = std::max<Eigen::Index>(1, len / 2);
    AsrModel model;
    model.channel_means = rec.data.rowwise().mean();
    const Eigen::MatrixXd x = rec.data.colwise() - model.channel_means;

    const auto starts = window_starts(rec.samples(), len, hop);
    model.total_windows = starts.size();

    Eigen::MatrixXd rms(nch, static_cast<Eigen::Index>(starts.size()));
    for (std::size_t k = 0; k < starts.size(); ++k)
        rms.col(static_cast<Eigen::Index>(k)) = row_rms(x.middleCols(starts[k], len));

    std::vector<bool> accepted(starts.size(), true);
    for (Eigen::Index c = 0; c < nch && !starts.empty(); ++c) {
        std::vector<double> v;
        for (Eigen::Index k = 0; k < rms.cols(); ++k)
            v.push_back(rms(c, k));
        const double med = median_of(v);
        for (auto& a : v)
            a = std::abs(a - med);
        const double scale = 1.4826 * median_of(v);
        for (Eigen::Index k = 0; k < rms.cols(); ++k) {
            const double z = scale > 0.0 ? (rms(c, k) - med) / scale : 0.0;
            if (z < cfg.calib_z_lo || z > cfg.calib_z_hi)
                accepted[static_cast<std::size_t>(k)] = false;
        }
    }
    std::vector<Eigen::Index> clean;
    for (std::size_t k = 0; k < starts.size(); ++k)
        if (accepted[k])
            clean.push_back(starts[k]);
    model.calibration_windows = clean.size();
    if (clean.size() < cfg.min_calib_windows)
        throw DataError("ASR calibration found " + std::to_string(clean.size()) + " clean windows; need at least " +
                        std::to_string(cfg.min_calib_windows));

    std::vector<bool> in_calib(static_cast<std::size_t>(rec.samples()), false);
    for (auto s : clean)
        std::fill_n(in_calib.begin() + s, len, true);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(nch, nch);
    Eigen::Index used = 0;
    for (Eigen::Index j = 0; j < rec.samples(); ++j)
        if (in_calib[static_cast<std::size_t>(j)]) {
            cov.noalias() += x.col(j) * x.col(j).transpose();
            ++used;
        }
    cov /= static_cast<double>(used);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    model.basis = es.eigenvectors().rowwise().reverse();

    const auto nclean = static_cast<Eigen::Index>(clean.size());
    Eigen::MatrixXd comp_rms(nch, nclean);
    for (Eigen::Index k = 0; k < nclean; ++k)
        comp_rms.col(k) = row_rms(model.basis.transpose() * x.middleCols(clean[static_cast<std::size_t>(k)], len));
    const Eigen::VectorXd mu = comp_rms.rowwise().mean();
    const Eigen::VectorXd sd =
        ((comp_rms.colwise() - mu).rowwise().squaredNorm() / static_cast<double>(nclean - 1)).cwiseSqrt();
    model.thresholds = mu + cfg.burst_k * sd;
    const double floor = std::max(model.thresholds.maxCoeff(), 1.0) * 1e-12;
    model.thresholds = model.thresholds.cwiseMax(floor);

    // channel RMS statistics at processing-window length
    const Eigen::Index plen = std::min(len, std::max<Eigen::Index>(2, std::lround(cfg.proc_win_s * rec.rate)));
    std::vector<Eigen::VectorXd> chan;
    for (auto s : clean)
        for (Eigen::Index o = 0; o + plen <= len; o += plen)
            chan.push_back(row_rms(x.middleCols(s + o, plen)));
    Eigen::MatrixXd cr(nch, static_cast<Eigen::Index>(chan.size()));
    for (std::size_t k = 0; k < chan.size(); ++k)
        cr.col(static_cast<Eigen::Index>(k)) = chan[k];
    model.channel_rms_mean = cr.rowwise().mean();
    model.channel_rms_sd = cr.cols() > 1 ? ((cr.colwise() - model.channel_rms_mean).rowwise().squaredNorm() /
                                            static_cast<double>(cr.cols() - 1))
                                               .cwiseSqrt()
                                               .eval()
                                         : Eigen::VectorXd::Zero(nch).eval();
    return model;
}

std::size_t AsrOutput::flagged_count() const
{
    return static_cast<std::size_t>(std::count(flagged_windows.begin(), flagged_windows.end(), true));
}

bool exceeds_window_criterion(std::size_t bad_channels, std::size_t channels, double criterion)
{
    return channels > 0 && static_cast<double>(bad_channels) > criterion * static_cast<double>(channels);
}

AsrOutput asr_process(const Recording& rec, const AsrModel& model, const AsrConfig& cfg)
{
    const Eigen::Index nch = rec.channels();
    const Eigen::Index n = rec.samples();
    if (model.basis.rows() != nch || model.thresholds.size() != nch)
        throw DataError("ASR model was calibrated on " + std::to_string(model.basis.rows()) +
                        " channels; recording has " + std::to_string(nch));

    AsrOutput out;
    out.cleaned = rec;
    if (n < 2)
        return out;

    const Eigen::Index len = std::clamp<Eigen::Index>(std::lround(cfg.proc_win_s * rec.rate), 2, n);
    const Eigen::Index hop = std::max<Eigen::Index>(1, len / 2);
    out.window_length = len;
    out.window_starts = window_starts(n, len, hop);
    const std::size_t nwin = out.window_starts.size();

    const Eigen::MatrixXd x = rec.data.colwise() - model.channel_means;
    const auto max_removed = static_cast<Eigen::Index>(std::floor(cfg.max_dims * static_cast<double>(nch)));
    // thresholds expressed as a matrix acting on directions
    const Eigen::MatrixXd t_basis = model.thresholds.asDiagonal() * model.basis.transpose();

    // std::nullopt means identity
    std::vector<std::optional<Eigen::MatrixXd>> proj(nwin);
    for (std::size_t k = 0; k < nwin; ++k) {
        const auto xw = x.middleCols(out.window_starts[k], len);
        const Eigen::MatrixXd cov = xw * xw.transpose() / static_cast<double>(len);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        const Eigen::VectorXd rms = es.eigenvalues().cwiseMax(0.0).cwiseSqrt(); // ascending
        const Eigen::VectorXd limit = (t_basis * es.eigenvectors()).colwise().norm().transpose();
        Eigen::Array<bool, Eigen::Dynamic, 1> keep(nch);
        bool any_removed = false;
        for (Eigen::Index i = 0; i < nch; ++i) {
            keep[i] = rms[i] <= limit[i] || i < nch - max_removed;
            any_removed |= !keep[i];
        }
        if (!any_removed)
            continue;
        Eigen::MatrixXd kept(nch, keep.count());
        for (Eigen::Index i = 0, j = 0; i < nch; ++i)
            if (keep[i])
                kept.col(j++) = es.eigenvectors().col(i);
        proj[k] = kept * kept.transpose();
        ++out.reconstructed_windows;
    }

    // raised-cosine cross-fade between successive window centres
    Eigen::MatrixXd& y = out.cleaned.data;
    auto centre = [&](std::size_t k) { return out.window_starts[k] + len / 2; };
    auto apply = [&](const std::optional<Eigen::MatrixXd>& p, Eigen::Index j) -> Eigen::VectorXd {
        return p ? Eigen::VectorXd(*p * x.col(j)) : Eigen::VectorXd(x.col(j));
    };
    std::size_t k = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        while (k < nwin && centre(k) <= j)
            ++k;
        const std::size_t prev = k == 0 ? 0 : k - 1;
        const std::size_t next = std::min(k, nwin - 1);
        const auto& pa = proj[prev];
        const auto& pb = proj[next];
        if (!pa && !pb)
            continue; // exact copy
        Eigen::VectorXd v;
        if (prev == next) {
            v = apply(pa, j);
        } else {
            const double span = static_cast<double>(centre(next) - centre(prev));
            const double b = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(j - centre(prev)) / span);
            v = (1.0 - b) * apply(pa, j) + b * apply(pb, j);
        }
        y.col(j) = v + model.channel_means;
    }

    out.flagged_windows.assign(nwin, false);
    const Eigen::MatrixXd yc = y.colwise() - model.channel_means;
    for (std::size_t k = 0; k < nwin; ++k) {
        const Eigen::VectorXd r = row_rms(yc.middleCols(out.window_starts[k], len));
        std::size_t bad = 0;
        for (Eigen::Index c = 0; c < nch; ++c) {
            if (r[c] > model.channel_rms_mean[c] + cfg.burst_k * model.channel_rms_sd[c])
                ++bad;
        }
        out.flagged_windows[k] = exceeds_window_criterion(bad, static_cast<std::size_t>(nch), cfg.window_criterion);
    }
    return out;
}

} // namespace earpipe::artifact
