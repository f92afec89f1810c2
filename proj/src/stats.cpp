#include "earpipe/stats.hpp"

#include "earpipe/distributions.hpp"
#include "earpipe/recording.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace earpipe::stats {

SurveyScores aggregate_survey(const SurveyResponse& r)
{
    for (double v : r.nasa_tlx)
        if (!(v >= 0.0 && v <= 21.0))
            throw ConfigError("NASA-TLX rating out of range 0..21: " + std::to_string(v));
    for (double v : r.flow_items)
        if (!(v >= 1.0 && v <= 7.0))
            throw ConfigError("flow rating out of range 1..7: " + std::to_string(v));
    SurveyScores s;
    s.tlx_total = std::accumulate(r.nasa_tlx.begin(), r.nasa_tlx.end(), 0.0);
    s.flow_mean = std::accumulate(r.flow_items.begin(), r.flow_items.end(), 0.0) / 3.0;
    return s;
}

std::vector<double> z_standardize(std::span<const std::string> groups, std::span<const double> values)
{
    if (groups.size() != values.size())
        throw DataError("z_standardize: group and value counts differ");
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < groups.size(); ++i)
        members[groups[i]].push_back(i);

    std::vector<double> out(values.size());
    for (const auto& [g, idx] : members) {
        if (idx.size() < 2)
            throw DataError("cannot standardize participant '" + g + "': fewer than two values");
        double mean = 0.0;
        for (auto i : idx)
            mean += values[i];
        mean /= static_cast<double>(idx.size());
        double ss = 0.0;
        for (auto i : idx)
            ss += (values[i] - mean) * (values[i] - mean);
        const double sd = std::sqrt(ss / static_cast<double>(idx.size() - 1));
        if (!(sd > 0.0))
            throw DataError("cannot standardize participant '" + g + "': zero variance");
        for (auto i : idx)
            out[i] = (values[i] - mean) / sd;
    }
    return out;
}

Eigen::Vector3d OrthoBasis::operator()(double x) const
{
    const double c = x - mean;
    return {1.0, c, x * x - sq_offset - slope * c};
}

OrthoBasis orthogonal_basis(std::span<const double> x)
{
    const auto n = static_cast<Eigen::Index>(x.size());
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), n);
    OrthoBasis b;
    b.mean = xv.mean();
    const Eigen::VectorXd p1 = xv.array() - b.mean;
    const double p1p1 = p1.squaredNorm();
    Eigen::VectorXd p2 = xv.array().square().matrix();
    // two Gram-Schmidt passes
    for (int pass = 0; pass < 2; ++pass) {
        const double c0 = p2.mean();
        const double c1 = p2.dot(p1) / p1p1;
        b.sq_offset += c0;
        b.slope += c1;
        p2 = p2.array() - c0 - c1 * p1.array();
    }
    return b;
}

namespace {

Coefficient make_coef(std::string name, double est, double se, int dof)
{
    Coefficient c;
    c.name = std::move(name);
    c.estimate = est;
    c.se = se;
    if (se > 0.0) {
        c.t = est / se;
        c.p = t_two_sided_p(c.t, dof);
    } else {
        c.t = est == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), est);
        c.p = est == 0.0 ? 1.0 : 0.0;
    }
    return c;
}

RegressionFit ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const std::vector<std::string>& names)
{
    const auto n = design.rows();
    const auto p = design.cols();
    RegressionFit fit;
    fit.n = static_cast<int>(n);
    fit.dof = static_cast<int>(n - p);

    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < p)
        throw DataError("regression design is rank deficient");
    const Eigen::VectorXd beta = qr.solve(y);
    const Eigen::VectorXd resid = y - design * beta;
    const double sse = resid.squaredNorm();
    fit.total_ss = (y.array() - y.mean()).square().sum();
    fit.r_squared = fit.total_ss > 0.0 ? std::clamp(1.0 - sse / fit.total_ss, 0.0, 1.0) : (sse == 0.0 ? 1.0 : 0.0);
    const double sigma2 = sse / static_cast<double>(fit.dof);
    fit.residual_sd = std::sqrt(sigma2);
    const Eigen::MatrixXd xtx_inv = (design.transpose() * design).inverse();
    fit.covariance = sigma2 * xtx_inv;
    for (Eigen::Index i = 0; i < p; ++i)
        fit.coefficients.push_back(
            make_coef(names[static_cast<std::size_t>(i)], beta[i], std::sqrt(std::max(0.0, fit.covariance(i, i))), fit.dof));
    return fit;
}

void check_xy(std::span<const double> x, std::span<const double> y, std::size_t min_n)
{
    if (x.size() != y.size())
        throw DataError("regression: x and y lengths differ");
    if (x.size() < min_n)
        throw DataError("regression needs at least " + std::to_string(min_n) + " points");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
            throw DataError("regression input contains non-finite values");
}

} // namespace

double RegressionFit::predict(double x) const
{
    if (model == Model::Linear)
        return coefficients[0].estimate + coefficients[1].estimate * x;
    const Eigen::Vector3d b = basis(x);
    return coefficients[0].estimate * b[0] + coefficients[1].estimate * b[1] + coefficients[2].estimate * b[2];
}

double RegressionFit::prediction_se(double x) const
{
    Eigen::VectorXd row;
    if (model == Model::Linear)
        row = Eigen::Vector2d(1.0, x);
    else
        row = basis(x);
    return std::sqrt(std::max(0.0, row.dot(covariance * row)));
}

RegressionFit fit_linear(std::span<const double> x, std::span<const double> y)
{
    check_xy(x, y, 3);
    const auto n = static_cast<Eigen::Index>(x.size());
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), n);
    if ((xv.array() == xv[0]).all())
        throw DataError("regression: x is constant");
    Eigen::MatrixXd design(n, 2);
    design.col(0).setOnes();
    design.col(1) = xv;
    auto fit = ols(design, Eigen::Map<const Eigen::VectorXd>(y.data(), n), {"intercept", "slope"});
    fit.model = Model::Linear;
    const double sxx = (xv.array() - xv.mean()).square().sum();
    fit.term_ss = {fit.coefficients[1].estimate * fit.coefficients[1].estimate * sxx};
    return fit;
}

RegressionFit fit_quadratic_orthogonal(std::span<const double> x, std::span<const double> y)
{
    check_xy(x, y, 4);
    if (std::set<double>(x.begin(), x.end()).size() < 3)
        throw DataError("quadratic regression needs at least three distinct x values");
    const auto n = static_cast<Eigen::Index>(x.size());
    const OrthoBasis basis = orthogonal_basis(x);
    Eigen::MatrixXd design(n, 3);
    for (Eigen::Index i = 0; i < n; ++i)
        design.row(i) = basis(x[static_cast<std::size_t>(i)]).transpose();
    auto fit = ols(design, Eigen::Map<const Eigen::VectorXd>(y.data(), n), {"intercept", "linear", "quadratic"});
    fit.model = Model::QuadraticOrthogonal;
    fit.basis = basis;
    for (Eigen::Index j = 1; j < 3; ++j) {
        const double b = fit.coefficients[static_cast<std::size_t>(j)].estimate;
        fit.term_ss.push_back(b * b * design.col(j).squaredNorm());
    }
    return fit;
}

ContrastTable pairwise_contrasts(std::span<const Observation> obs)
{
    // cell means in order of first appearance
    std::vector<std::string> conditions, participants;
    std::map<std::pair<std::string, std::string>, std::pair<double, int>> cells;
    for (const auto& o : obs) {
        if (std::find(conditions.begin(), conditions.end(), o.condition) == conditions.end())
            conditions.push_back(o.condition);
        if (std::find(participants.begin(), participants.end(), o.participant) == participants.end())
            participants.push_back(o.participant);
        auto& c = cells[{o.participant, o.condition}];
        c.first += o.value;
        c.second += 1;
    }
    if (conditions.size() < 2)
        throw DataError("contrasts need at least two conditions");

    ContrastTable table;
    table.conditions = conditions;
    std::map<std::pair<std::string, std::string>, double> mean;
    std::set<int> counts;
    for (const auto& [k, v] : cells) {
        mean[k] = v.first / v.second;
        counts.insert(v.second);
    }
    for (const auto& p : participants) {
        std::size_t seen = 0;
        for (const auto& c : conditions)
            seen += mean.contains({p, c}) ? 1 : 0;
        if (seen < 2)
            throw DataError("participant '" + p + "' is observed in fewer than two conditions");
        if (seen != conditions.size())
            table.balanced = false;
    }
    if (counts.size() > 1)
        table.balanced = false;

    // participant-centred omnibus test
    std::map<std::string, double> pmean;
    for (const auto& p : participants) {
        double s = 0.0;
        int k = 0;
        for (const auto& c : conditions)
            if (auto it = mean.find({p, c}); it != mean.end()) {
                s += it->second;
                ++k;
            }
        pmean[p] = s / k;
    }
    std::map<std::string, std::pair<double, int>> cond_acc;
    for (const auto& [k, v] : mean) {
        auto& a = cond_acc[k.second];
        a.first += v - pmean[k.first];
        a.second += 1;
    }
    double ss_cond = 0.0, ss_res = 0.0;
    for (const auto& [c, a] : cond_acc)
        ss_cond += a.second * (a.first / a.second) * (a.first / a.second);
    for (const auto& [k, v] : mean) {
        const auto& a = cond_acc[k.second];
        const double r = v - pmean[k.first] - a.first / a.second;
        ss_res += r * r;
    }
    const auto ncells = static_cast<double>(mean.size());
    const auto kc = static_cast<double>(conditions.size());
    const auto np = static_cast<double>(participants.size());
    table.df_condition = kc - 1.0;
    table.df_error = ncells - kc - (np - 1.0);
    if (table.df_error >= 1.0) {
        const double ms_res = ss_res / table.df_error;
        const double ms_cond = ss_cond / table.df_condition;
        if (ms_res > 0.0) {
            table.f = ms_cond / ms_res;
            table.p = f_sf(table.f, table.df_condition, table.df_error);
        } else if (ss_cond == 0.0) {
            table.f = 0.0;
            table.p = 1.0;
        } else {
            table.f = std::numeric_limits<double>::infinity();
            table.p = 0.0;
        }
    } else {
        table.f = std::numeric_limits<double>::quiet_NaN();
        table.p = std::numeric_limits<double>::quiet_NaN();
    }

    const double m = kc * (kc - 1.0) / 2.0;
    for (std::size_t a = 0; a < conditions.size(); ++a) {
        for (std::size_t b = a + 1; b < conditions.size(); ++b) {
            ContrastRow row;
            row.condition_a = conditions[a];
            row.condition_b = conditions[b];
            std::vector<double> d;
            for (const auto& p : participants) {
                auto ia = mean.find({p, conditions[a]});
                auto ib = mean.find({p, conditions[b]});
                if (ia != mean.end() && ib != mean.end())
                    d.push_back(ib->second - ia->second);
            }
            row.n = static_cast<int>(d.size());
            if (d.size() >= 2) {
                const double dm = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
                double ss = 0.0;
                for (double v : d)
                    ss += (v - dm) * (v - dm);
                const double se = std::sqrt(ss / static_cast<double>(d.size() - 1)) / std::sqrt(static_cast<double>(d.size()));
                row.mean_diff = dm;
                const auto c = make_coef("", dm, se, static_cast<int>(d.size()) - 1);
                row.t = c.t;
                row.raw_p = c.p;
            } else {
                row.t = std::numeric_limits<double>::quiet_NaN();
                row.raw_p = 1.0;
            }
            row.adjusted_p = std::min(1.0, m * row.raw_p);
            table.rows.push_back(row);
        }
    }
    return table;
}

double quantile(std::vector<double> v, double q)
{
    if (v.empty())
        throw DataError("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

BlandAltmanReport bland_altman(std::span<const double> ref, std::span<const double> alt)
{
    if (ref.size() != alt.size())
        throw DataError("Bland-Altman needs paired series of equal length");
    if (ref.size() < 3)
        throw DataError("Bland-Altman needs at least three pairs");
    const auto n = static_cast<double>(ref.size());
    BlandAltmanReport r;
    r.n = static_cast<int>(ref.size());

    std::vector<double> d(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i)
        d[i] = alt[i] - ref[i];
    r.mean_diff = std::accumulate(d.begin(), d.end(), 0.0) / n;
    double abs_sum = 0.0, ss = 0.0;
    for (double v : d) {
        abs_sum += std::abs(v);
        ss += (v - r.mean_diff) * (v - r.mean_diff);
    }
    r.mean_abs_diff = abs_sum / n;
    r.sd_diff = std::sqrt(ss / (n - 1.0));
    r.gaussian_loa = 1.96 * r.sd_diff;
    r.iqr_diff = quantile(d, 0.75) - quantile(d, 0.25);
    r.nonparametric_loa = 1.96 * r.iqr_diff;
    r.percentile_2_5 = quantile(d, 0.025);
    r.percentile_97_5 = quantile(d, 0.975);

    const double mr = std::accumulate(ref.begin(), ref.end(), 0.0) / n;
    const double ma = std::accumulate(alt.begin(), alt.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        sxy += (ref[i] - mr) * (alt[i] - ma);
        sxx += (ref[i] - mr) * (ref[i] - mr);
        syy += (alt[i] - ma) * (alt[i] - ma);
    }
    if (sxx > 0.0 && syy > 0.0)
        r.pearson_r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    return r;
}

} // namespace earpipe::stats
