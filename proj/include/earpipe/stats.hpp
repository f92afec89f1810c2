#pragma once

// Survey scoring, standardization, regression, condition contrasts and
// method agreement.

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace earpipe::stats {

struct SurveyResponse {
    std::array<double, 6> nasa_tlx{}; ///< each 0..21
    std::array<double, 3> flow_items{}; ///< each 1..7
};

struct SurveyScores {
    double tlx_total = 0.0; ///< 0..126
    double flow_mean = 0.0; ///< 1..7
};

/// Throws ConfigError for out-of-range ratings.
SurveyScores aggregate_survey(const SurveyResponse& r);

/// Within-group standardization (sample SD). Output order matches input.
/// Throws DataError naming the group when it has < 2 values or zero variance.
std::vector<double> z_standardize(std::span<const std::string> groups, std::span<const double> values);

enum class Model { Linear, QuadraticOrthogonal };

struct Coefficient {
    std::string name;
    double estimate = 0.0;
    double se = 0.0;
    double t = 0.0;
    double p = 1.0;
};

/// Orthogonal polynomial basis under the sample inner product:
/// p0 = 1, p1 = x - mean, p2 = x^2 - sq_offset - slope * (x - mean).
struct OrthoBasis {
    double mean = 0.0;
    double sq_offset = 0.0;
    double slope = 0.0;

    Eigen::Vector3d operator()(double x) const;
};

struct RegressionFit {
    Model model = Model::Linear;
    std::vector<Coefficient> coefficients; ///< intercept first
    double r_squared = 0.0;
    double residual_sd = 0.0;
    int n = 0;
    int dof = 0;
    Eigen::MatrixXd covariance;
    /// Explained sum of squares per non-constant term (orthogonal terms only).
    std::vector<double> term_ss;
    double total_ss = 0.0;
    OrthoBasis basis; ///< quadratic model only

    const Coefficient& coef(std::size_t i) const { return coefficients.at(i); }
    double predict(double x) const;
    /// Standard error of the fitted mean at x (the 1-SE band half-width).
    double prediction_se(double x) const;
};

/// Least-squares y = b0 + b1 x. Requires n >= 3 and non-constant x.
RegressionFit fit_linear(std::span<const double> x, std::span<const double> y);

/// y = b0 + b1 p1(x) + b2 p2(x) on the orthogonal basis. Requires n >= 4 and
/// at least three distinct x values.
RegressionFit fit_quadratic_orthogonal(std::span<const double> x, std::span<const double> y);

OrthoBasis orthogonal_basis(std::span<const double> x);

struct Observation {
    std::string participant;
    std::string condition;
    double value = 0.0;
};

struct ContrastRow {
    std::string condition_a;
    std::string condition_b;
    int n = 0;
    double mean_diff = 0.0; ///< b - a
    double t = 0.0;
    double raw_p = 1.0;
    double adjusted_p = 1.0;
};

struct ContrastTable {
    std::vector<ContrastRow> rows;
    double f = 0.0;
    double df_condition = 0.0;
    double df_error = 0.0;
    double p = 1.0;
    bool balanced = true;
    std::vector<std::string> conditions;
};

/// Participant-centred one-way analysis with paired, Bonferroni-adjusted
/// pairwise tests. Repeated (participant, condition) values are averaged.
ContrastTable pairwise_contrasts(std::span<const Observation> obs);

struct BlandAltmanReport {
    int n = 0;
    double mean_abs_diff = 0.0;
    double mean_diff = 0.0;
    double sd_diff = 0.0;
    double gaussian_loa = 0.0;      ///< 1.96 SD
    double iqr_diff = 0.0;
    double nonparametric_loa = 0.0; ///< 1.96 IQR
    double percentile_2_5 = 0.0;    ///< conventional empirical limits
    double percentile_97_5 = 0.0;
    std::optional<double> pearson_r; ///< empty when either series has zero variance
};

/// Differences are alt - ref. Requires equal lengths and n >= 3.
BlandAltmanReport bland_altman(std::span<const double> ref, std::span<const double> alt);

/// Linear-interpolation quantile (type 7).
double quantile(std::vector<double> v, double q);

} // namespace earpipe::stats
