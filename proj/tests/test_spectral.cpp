#include "earpipe/spectral.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>

using namespace earpipe;
using namespace earpipe::spectral;

namespace {

constexpr double kRate = 125.0;

// Single modified periodogram of a length-256 block, written out directly.
Eigen::VectorXd periodogram(const Eigen::VectorXd& x, double rate)
{
    const Eigen::Index n = x.size();
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i)
        w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
    const Eigen::VectorXd y = (x.array() - x.mean()).matrix().cwiseProduct(w);
    Eigen::VectorXd p(n / 2 + 1);
    for (Eigen::Index k = 0; k <= n / 2; ++k) {
        p[k] = testing::dft_power(y, k) / (rate * w.squaredNorm());
        if (k != 0 && k != n / 2)
            p[k] *= 2.0;
    }
    return p;
}

} // namespace

TEST_SUITE("spectral")
{
    TEST_CASE("frequency grid")
    {
        const auto psd = welch_psd(testing::white(1000, 1), kRate);
        CHECK(psd.freqs.size() == 129);
        CHECK(psd.bin_width() == doctest::Approx(125.0 / 256.0));
        for (Eigen::Index k = 1; k < psd.freqs.size(); ++k)
            CHECK(psd.freqs[k] > psd.freqs[k - 1]);
        CHECK(psd.window_count == 1 + (1000 - 256) / 192);
    }

    TEST_CASE("Parseval on white noise")
    {
        const double sd = 3.0;
        const auto psd = welch_psd(testing::white(125 * 600, 2, sd), kRate);
        CHECK(psd.power.row(0).sum() * psd.bin_width() == doctest::Approx(sd * sd).epsilon(0.05));
    }

    TEST_CASE("10 Hz sine peaks at bin 20 or 21")
    {
        const auto psd = welch_psd(testing::sine(125 * 20, 10.0, kRate), kRate);
        Eigen::Index k = 0;
        psd.power.row(0).maxCoeff(&k);
        CHECK((k == 20 || k == 21));
    }

    TEST_CASE("single segment equals the modified periodogram")
    {
        const auto x = testing::white(256, 3);
        const auto psd = welch_psd(x, kRate, {256, 0});
        const auto oracle = periodogram(x, kRate);
        CHECK(psd.window_count == 1);
        for (Eigen::Index k = 0; k < oracle.size(); ++k)
            CHECK(psd.power(0, k) == doctest::Approx(oracle[k]).epsilon(1e-9));
    }

    TEST_CASE("dB conversion and floor")
    {
        PsdEstimate p;
        p.freqs = Eigen::VectorXd::LinSpaced(3, 0.0, 1.0);
        p.power = Eigen::RowVector3d(1.0, 100.0, 0.0);
        const auto db = to_db(p);
        CHECK(db.scale == Scale::Decibel);
        CHECK(db.power(0, 0) == 0.0);
        CHECK(db.power(0, 1) == doctest::Approx(20.0));
        CHECK(db.power(0, 2) == doctest::Approx(-150.0));
        CHECK(to_linear(db).power(0, 1) == doctest::Approx(100.0));

        const auto zero = to_db(welch_psd(Eigen::VectorXd::Zero(1000), kRate));
        CHECK((zero.power.array() == -150.0).all());
    }

    TEST_CASE("amplitude doubling adds 6.02 dB")
    {
        const auto x = testing::white(3000, 4);
        const auto a = welch_psd(x, kRate);
        const auto b = welch_psd(2.0 * x, kRate);
        CHECK((b.power - 4.0 * a.power).cwiseAbs().maxCoeff() <= 1e-12 * b.power.maxCoeff());
        const auto da = to_db(a);
        const auto dbb = to_db(b);
        CHECK(((dbb.power - da.power).array() - 6.0206).abs().maxCoeff() < 0.01);
    }

    TEST_CASE("too-short input names the minimum")
    {
        CHECK_THROWS_WITH_AS(welch_psd(Eigen::VectorXd::Zero(100), kRate), doctest::Contains("256"), DataError);
        CHECK_THROWS_AS(welch_psd(Eigen::VectorXd::Zero(500), kRate, {256, 256}), ConfigError);
    }

    TEST_CASE("band bins from enumerated centres")
    {
        Eigen::VectorXd freqs(129);
        for (Eigen::Index k = 0; k < 129; ++k)
            freqs[k] = static_cast<double>(k) * 125.0 / 256.0;
        const auto alpha = band_bins(freqs, {"Alpha", 8.0, 12.0});
        std::vector<Eigen::Index> expected;
        for (Eigen::Index k = 0; k < 129; ++k)
            if (freqs[k] >= 8.0 && freqs[k] <= 12.0)
                expected.push_back(k);
        CHECK(alpha == expected);
        CHECK(alpha.front() == 17);
        CHECK(alpha.back() == 24);

        // 7.32 Hz sits in the Theta/Alpha gap
        const auto bands = default_bands();
        for (const auto& b : bands) {
            const auto bins = band_bins(freqs, b);
            CHECK(std::find(bins.begin(), bins.end(), 15) == bins.end());
        }
    }

    TEST_CASE("band power is the median dB")
    {
        PsdEstimate flat;
        flat.freqs = Eigen::VectorXd::LinSpaced(129, 0.0, 62.5);
        flat.power = Eigen::RowVectorXd::Constant(129, -10.0);
        flat.scale = Scale::Decibel;
        const auto bp = band_power(flat, default_bands());
        CHECK((bp.array() == -10.0).all());

        // permutation within the band leaves the median unchanged
        PsdEstimate ramp = flat;
        for (Eigen::Index k = 0; k < 129; ++k)
            ramp.power(0, k) = static_cast<double>((k * 37) % 11);
        const auto bins = band_bins(ramp.freqs, {"Alpha", 8.0, 12.0});
        PsdEstimate shuffled = ramp;
        for (std::size_t i = 0; i < bins.size(); ++i)
            shuffled.power(0, bins[i]) = ramp.power(0, bins[bins.size() - 1 - i]);
        const std::vector<BandDefinition> alpha{{"Alpha", 8.0, 12.0}};
        CHECK(band_power(ramp, alpha)(0, 0) == band_power(shuffled, alpha)(0, 0));

        std::vector<double> vals;
        for (auto k : bins)
            vals.push_back(ramp.power(0, k));
        std::sort(vals.begin(), vals.end());
        const auto m = vals.size();
        const double median = m % 2 ? vals[m / 2] : 0.5 * (vals[m / 2 - 1] + vals[m / 2]);
        CHECK(band_power(ramp, alpha)(0, 0) == median);

        CHECK_THROWS(band_power(flat, {{"High", 70.0, 80.0}}));
        CHECK_THROWS(band_power(flat, {{"Empty", 8.01, 8.02}}));
    }

    TEST_CASE("quality metrics")
    {
        const Eigen::Index n = 125 * 30;
        Recording rec;
        rec.rate = kRate;
        rec.data.resize(3, n);
        rec.data.row(0) = testing::sine(n, 10.0, kRate, 7.0 * std::sqrt(2.0)).transpose();
        rec.data.row(1) = testing::sine(n, 10.0, kRate, 500.0).transpose();
        rec.data.row(2) = testing::sine(n, 50.0, kRate, 5.0).transpose();
        const auto psd = welch_psd(rec);
        const auto qc = qc_report(rec, psd);
        REQUIRE(qc.channels.size() == 3);
        CHECK(qc.channels[0].rms_uv == doctest::Approx(7.0).epsilon(1e-3));
        CHECK(qc.channels[0].amplitude_typical);
        CHECK_FALSE(qc.channels[1].amplitude_typical);
        CHECK(qc.channels[2].line_ratio > 0.9);
        for (const auto& c : qc.channels) {
            CHECK(c.hf_ratio >= 0.0);
            CHECK(c.hf_ratio <= 1.0);
            CHECK(c.line_ratio >= 0.0);
            CHECK(c.line_ratio <= 1.0);
        }
    }

    TEST_CASE("deterministic and mean of segments")
    {
        const auto x = testing::white(2000, 6);
        const auto a = welch_psd(x, kRate);
        const auto b = welch_psd(x, kRate);
        CHECK(a.power == b.power);
        const auto m = mean_psd({a, welch_psd(testing::white(2000, 7), kRate)});
        CHECK(m.window_count == 2 * a.window_count);
    }
}
