#include "earpipe/filters.hpp"
#include "earpipe/spectral.hpp"

#include "helpers.hpp"

#include <doctest.h>

using namespace earpipe;
using namespace earpipe::filters;

namespace {

constexpr double kRate = 125.0;

// |sum_k taps_k e^{-i w k}| computed directly from the taps
double gain_at(const FirFilter& f, double hz, double rate)
{
    std::complex<double> acc{0.0, 0.0};
    const double w = 2.0 * std::numbers::pi * hz / rate;
    for (Eigen::Index k = 0; k < f.taps.size(); ++k)
        acc += f.taps[k] * std::polar(1.0, -w * static_cast<double>(k));
    return std::abs(acc);
}

Recording one_channel(const Eigen::VectorXd& x, double rate = kRate)
{
    Recording r;
    r.rate = rate;
    r.labels = {"ch1"};
    r.data = x.transpose();
    return r;
}

} // namespace

TEST_SUITE("filters")
{
    TEST_CASE("baseline correction")
    {
        Recording r;
        r.rate = kRate;
        r.data = Eigen::MatrixXd::Constant(2, 100, 7.3);
        CHECK(baseline_correct(r).data.cwiseAbs().maxCoeff() < 1e-12);

        const Eigen::VectorXd s = testing::sine(1000, 10.0, kRate);
        const auto out = baseline_correct(one_channel(s.array() + 5.0));
        CHECK((out.data.row(0).transpose() - (s.array() - s.mean()).matrix()).cwiseAbs().maxCoeff() < 1e-12);

        std::srand(4);
        r.data = Eigen::MatrixXd::Random(5, 777) * 30.0 + Eigen::MatrixXd::Constant(5, 777, 12.0);
        const auto z = baseline_correct(r);
        for (Eigen::Index c = 0; c < 5; ++c) {
            double mean = 0.0;
            for (Eigen::Index j = 0; j < z.samples(); ++j)
                mean += z.data(c, j);
            mean /= static_cast<double>(z.samples());
            CHECK(std::abs(mean) < 1e-9 * testing::rms(z.data.row(c).transpose()));
        }

        Recording empty;
        empty.rate = kRate;
        empty.data.resize(3, 0);
        CHECK_THROWS_AS(baseline_correct(empty), DataError);
    }

    TEST_CASE("FIR design contracts")
    {
        const auto lp = design_fir({FirKind::Lowpass, 45.0, 100, Window::Hann}, kRate);
        const auto hp = design_fir({FirKind::Highpass, 1.0, 500, Window::Hann}, kRate);
        CHECK(lp.taps.size() == 101);
        CHECK(hp.taps.size() == 501);
        CHECK(lp.group_delay == 50);
        CHECK(hp.group_delay == 250);
        CHECK(std::abs(lp.taps.sum() - 1.0) < 1e-6);
        CHECK(std::abs(hp.taps.sum()) < 1e-6);
        for (const auto* f : {&lp, &hp}) {
            const auto n = f->taps.size();
            for (Eigen::Index k = 0; k < n; ++k)
                CHECK(std::abs(f->taps[k] - f->taps[n - 1 - k]) < 1e-12);
        }
        // half amplitude at the cutoff
        CHECK(std::abs(20.0 * std::log10(gain_at(lp, 45.0, kRate)) + 6.02) < 0.5);
        CHECK(std::abs(20.0 * std::log10(gain_at(hp, 1.0, kRate)) + 6.02) < 0.5);
        CHECK(gain_at(lp, 60.0, kRate) < 0.1);
        // the member response agrees with the direct sum
        CHECK(std::abs(lp.response(30.0, kRate)) == doctest::Approx(gain_at(lp, 30.0, kRate)).epsilon(1e-12));

        const auto hamming = design_fir({FirKind::Lowpass, 20.0, 64, Window::Hamming}, kRate);
        CHECK(std::abs(hamming.taps.sum() - 1.0) < 1e-9);
    }

    TEST_CASE("FIR design rejects bad specs")
    {
        CHECK_THROWS_WITH_AS(design_fir({FirKind::Highpass, 100.0, 500, Window::Hann}, kRate), doctest::Contains("Nyquist"),
                             ConfigError);
        CHECK_THROWS_AS(design_fir({FirKind::Lowpass, 62.5, 100, Window::Hann}, kRate), ConfigError);
        CHECK_THROWS_AS(design_fir({FirKind::Lowpass, 10.0, 101, Window::Hann}, kRate), ConfigError);
        CHECK_THROWS_AS(design_fir({FirKind::Lowpass, 0.0, 100, Window::Hann}, kRate), ConfigError);
    }

    TEST_CASE("taps depend only on spec and rate")
    {
        const FirSpec spec{FirKind::Highpass, 1.0, 500, Window::Hann};
        CHECK(design_fir(spec, kRate).taps == design_fir(spec, kRate).taps);
    }

    TEST_CASE("impulse response is centred")
    {
        const auto lp = design_fir({FirKind::Lowpass, 30.0, 40, Window::Hann}, kRate);
        Eigen::VectorXd x = Eigen::VectorXd::Zero(200);
        x[100] = 1.0;
        const auto y = apply_zero_phase(x, lp);
        CHECK(y.size() == 200);
        for (Eigen::Index k = 0; k <= 40; ++k)
            CHECK(y[80 + k] == doctest::Approx(lp.taps[k]).epsilon(1e-12));
        CHECK(y.head(80).cwiseAbs().maxCoeff() == 0.0);
        CHECK(y.tail(79).cwiseAbs().maxCoeff() == 0.0);
    }

    TEST_CASE("too-short segment names the minimum")
    {
        const auto lp = design_fir({FirKind::Lowpass, 45.0, 100, Window::Hann}, kRate);
        CHECK_THROWS_WITH_AS(apply_zero_phase(Eigen::VectorXd::Zero(50), lp), doctest::Contains("102"), DataError);
    }

    TEST_CASE("attenuation and passband")
    {
        const auto lp = design_fir({FirKind::Lowpass, 45.0, 100, Window::Hann}, kRate);
        const auto hp = design_fir({FirKind::Highpass, 1.0, 500, Window::Hann}, kRate);
        const Eigen::Index n = 125 * 60;
        const auto s60 = testing::sine(n, 60.0, kRate);
        const auto y60 = apply_zero_phase(s60, lp);
        const Eigen::Index e = 50;
        CHECK(20.0 * std::log10(testing::rms(y60.segment(e, n - 2 * e)) / testing::rms(s60)) <= -20.0);

        const auto s10 = testing::sine(n, 10.0, kRate);
        const auto y10 = apply_zero_phase(s10, hp);
        const double db = 20.0 * std::log10(testing::rms(y10.segment(250, n - 500)) / testing::rms(s10.segment(250, n - 500)));
        CHECK(std::abs(db) <= 0.5);

        Recording rec = one_channel(s10);
        const auto out = apply_zero_phase(rec, hp);
        CHECK(out.edge_samples == 250);
        CHECK(out.samples() == n);
    }

    TEST_CASE("zero-phase: cross-correlation peaks at lag 0")
    {
        const auto lp = design_fir({FirKind::Lowpass, 20.0, 100, Window::Hann}, kRate);
        const auto band = apply_zero_phase(testing::white(5000, 8), lp);
        const auto y = apply_zero_phase(band, lp);
        Eigen::Index best = -99;
        double peak = -1e300;
        for (Eigen::Index lag = -20; lag <= 20; ++lag) {
            double acc = 0.0;
            for (Eigen::Index i = 200; i < 4800; ++i)
                acc += band[i] * y[i + lag];
            if (acc > peak) {
                peak = acc;
                best = lag;
            }
        }
        CHECK(best == 0);
    }

    TEST_CASE("linearity of every filter operation")
    {
        const Eigen::Index n = 2000;
        const auto x = testing::white(n, 1);
        const auto y = testing::white(n, 2);
        const double a = 1.7;
        const double b = -0.3;
        const Eigen::VectorXd mix = a * x + b * y;
        auto check = [&](auto op) {
            const Eigen::VectorXd lhs = op(mix);
            const Eigen::VectorXd rhs = a * op(x) + b * op(y);
            CHECK((lhs - rhs).norm() <= 1e-9 * rhs.norm());
        };
        const auto hp = design_fir({FirKind::Highpass, 1.0, 500, Window::Hann}, kRate);
        check([&](const Eigen::VectorXd& v) { return apply_zero_phase(v, hp); });
        check([&](const Eigen::VectorXd& v) { return remove_line_noise(v, kRate); });
        check([&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
            return baseline_correct(one_channel(v)).data.row(0).transpose();
        });
    }

    TEST_CASE("line-noise removal")
    {
        const Eigen::Index n = 125 * 30;
        SUBCASE("pure 50 Hz")
        {
            const auto s = testing::sine(n, 50.0, kRate, 10.0, 0.3);
            const auto y = remove_line_noise(s, kRate);
            const auto before = spectral::welch_psd(s, kRate);
            const auto after = spectral::welch_psd(y, kRate);
            Eigen::Index k = 0;
            (before.freqs.array() - 50.0).abs().minCoeff(&k);
            CHECK(10.0 * std::log10(after.power(0, k) / before.power(0, k)) <= -30.0);
        }
        SUBCASE("zero in, zero out")
        {
            CHECK(remove_line_noise(Eigen::VectorXd::Zero(n), kRate).cwiseAbs().maxCoeff() == 0.0);
        }
        SUBCASE("other content preserved")
        {
            const auto s = testing::sine(n, 10.0, kRate, 5.0);
            const auto y = remove_line_noise(s, kRate);
            CHECK(std::abs(testing::rms(y) / testing::rms(s) - 1.0) < 0.01);
        }
        SUBCASE("window longer than the signal falls back to one fit")
        {
            const auto s = testing::sine(300, 50.0, kRate, 3.0);
            const auto y = remove_line_noise(s, kRate);
            CHECK(testing::rms(y) < 1e-6);
        }
        SUBCASE("harmonics")
        {
            const Eigen::VectorXd s = testing::sine(n, 20.0, kRate, 4.0) + testing::sine(n, 40.0, kRate, 4.0);
            LineNoiseConfig cfg{20.0, 4.0, 1.0, 2};
            CHECK(testing::rms(remove_line_noise(s, kRate, cfg)) < 1e-3 * testing::rms(s));
            cfg.harmonics = 1;
            CHECK(testing::rms(remove_line_noise(s, kRate, cfg)) == doctest::Approx(4.0 / std::sqrt(2.0)).epsilon(0.02));
        }
        SUBCASE("bad configuration")
        {
            CHECK_THROWS_AS(remove_line_noise(Eigen::VectorXd::Zero(100), kRate, {70.0, 4.0, 1.0, 1}), ConfigError);
        }
    }
}
