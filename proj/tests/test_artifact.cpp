#include "earpipe/artifact.hpp"
#include "earpipe/synth.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>

using namespace earpipe;
using namespace earpipe::artifact;

namespace {

Recording as_rec(const Eigen::MatrixXd& data, double rate)
{
    Recording r;
    r.rate = rate;
    r.labels = default_labels(data.rows());
    r.data = data;
    return r;
}

// best |corr| of each true source against any recovered source
std::vector<double> recovery(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& found)
{
    std::vector<double> out;
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
        double best = 0.0;
        for (Eigen::Index j = 0; j < found.rows(); ++j)
            best = std::max(best, std::abs(testing::corr(truth.row(i).transpose(), found.row(j).transpose())));
        out.push_back(best);
    }
    return out;
}

Eigen::VectorXd ecg_source(double rate, double seconds, double bpm, std::uint64_t seed)
{
    synth::EcgSynthSpec spec;
    spec.rate = rate;
    spec.duration_s = seconds;
    spec.bpm = bpm;
    spec.rr_jitter_ms = 15.0;
    spec.seed = seed;
    Eigen::VectorXd x = synth::gen_ecg(spec).rec.data.row(0).transpose();
    x.array() -= x.mean();
    return x / testing::rms(x);
}

Eigen::MatrixXd white_rows(Eigen::Index rows, Eigen::Index n, std::uint64_t seed)
{
    Eigen::MatrixXd m(rows, n);
    for (Eigen::Index r = 0; r < rows; ++r)
        m.row(r) = testing::white(n, seed * 100 + static_cast<std::uint64_t>(r)).transpose();
    return m;
}

} // namespace

TEST_SUITE("artifact")
{
    TEST_CASE("ICA recovers Laplacian sources")
    {
        const auto s = synth::laplacian_sources(3, 10000, 17);
        const auto a = synth::random_matrix(3, 3, 18);
        const auto mix = synth::mix_sources(s, a, 125.0, 19);
        const auto ica = ica_decompose(mix.rec, 3, 42);
        for (double c : recovery(s, ica.sources))
            CHECK(c >= 0.95);

        // unit-variance sources
        for (Eigen::Index i = 0; i < ica.sources.rows(); ++i) {
            const Eigen::VectorXd row = ica.sources.row(i).transpose();
            const double var = (row.array() - row.mean()).square().mean();
            CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
        }
        // mixing undoes unmixing and reproduces the centred input
        CHECK((ica.unmixing * ica.mixing - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-6);
        const Eigen::MatrixXd centred = mix.rec.data.colwise() - ica.channel_means;
        CHECK((ica.mixing * ica.sources - centred).norm() / centred.norm() < 1e-6);
    }

    TEST_CASE("ICA is deterministic for a seed")
    {
        const auto s = synth::laplacian_sources(3, 3000, 1);
        const auto mix = synth::mix_sources(s, synth::random_matrix(3, 3, 2), 125.0, 3);
        const auto a = ica_decompose(mix.rec, 3, 9);
        const auto b = ica_decompose(mix.rec, 3, 9);
        CHECK(a.unmixing == b.unmixing);
        CHECK(a.sources == b.sources);
    }

    TEST_CASE("rank-one input keeps one component")
    {
        const auto src = synth::laplacian_sources(1, 2000, 4);
        const Eigen::MatrixXd data = Eigen::VectorXd::Ones(4) * src;
        const auto ica = ica_decompose(as_rec(data, 125.0), 4, 1);
        CHECK(ica.components() == 1);
        CHECK_FALSE(ica.warnings.empty());
        CHECK(std::abs(testing::corr(ica.sources.row(0).transpose(), src.row(0).transpose())) > 0.999999);
    }

    TEST_CASE("ICA preconditions")
    {
        const auto s = synth::laplacian_sources(4, 50, 1);
        CHECK_THROWS(ica_decompose(as_rec(s, 125.0), 4, 1));
        CHECK_THROWS(ica_decompose(as_rec(synth::laplacian_sources(2, 1000, 1), 125.0), 3, 1));
    }

    TEST_CASE("ECG component selection")
    {
        const double rate = 250.0;
        const Eigen::Index n = static_cast<Eigen::Index>(60 * rate);
        Eigen::MatrixXd sources = white_rows(4, n, 3);
        sources.row(2) = ecg_source(rate, 60.0, 60.0, 8).transpose();

        IcaResult fake;
        fake.sources = sources;
        fake.unmixing = Eigen::MatrixXd::Identity(4, 4);
        fake.mixing = Eigen::MatrixXd::Identity(4, 4);
        const auto pick = select_ecg_ic(fake, rate);
        REQUIRE(pick.has_value());
        CHECK(pick->index == 2);

        SUBCASE("permutation equivariance")
        {
            IcaResult perm = fake;
            const std::vector<Eigen::Index> order{3, 2, 0, 1};
            for (Eigen::Index i = 0; i < 4; ++i)
                perm.sources.row(i) = sources.row(order[static_cast<std::size_t>(i)]);
            const auto p2 = select_ecg_ic(perm, rate);
            REQUIRE(p2.has_value());
            CHECK(order[static_cast<std::size_t>(p2->index)] == 2);
        }
        SUBCASE("inverted polarity")
        {
            IcaResult neg = fake;
            neg.sources.row(2) *= -1.0;
            const auto p = select_ecg_ic(neg, rate);
            REQUIRE(p.has_value());
            CHECK(p->index == 2);
            CHECK(p->inverted);
        }
        SUBCASE("all noise")
        {
            IcaResult noise = fake;
            noise.sources = white_rows(4, n, 77);
            CHECK_FALSE(select_ecg_ic(noise, rate).has_value());
        }
        SUBCASE("single clean ECG")
        {
            IcaResult one = fake;
            one.sources = sources.row(2);
            const auto p = select_ecg_ic(one, rate);
            REQUIRE(p.has_value());
            CHECK(p->index == 0);
        }
    }

    TEST_CASE("ECG planted in a mixture")
    {
        const double rate = 250.0;
        const Eigen::Index n = static_cast<Eigen::Index>(60 * rate);
        Eigen::MatrixXd sources = synth::laplacian_sources(4, n, 30);
        sources.row(1) = ecg_source(rate, 60.0, 60.0, 31).transpose();
        const auto mix = synth::mix_sources(sources, synth::random_matrix(4, 4, 32), rate, 33);
        const auto ica = ica_decompose(mix.rec, 4, 5);
        const auto pick = select_ecg_ic(ica, rate);
        REQUIRE(pick.has_value());
        CHECK(std::abs(testing::corr(ica.sources.row(pick->index).transpose(), sources.row(1).transpose())) > 0.95);
    }

    TEST_CASE("ASR calibration")
    {
        const auto rec = as_rec(white_rows(6, 125 * 120, 5) * 10.0, 125.0);
        const auto model = asr_calibrate(rec);
        CHECK(model.calibration_windows == model.total_windows);
        CHECK(model.calibration_windows >= 100);
        const Eigen::MatrixXd btb = model.basis.transpose() * model.basis;
        CHECK((btb - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((model.thresholds.array() > 0.0).all());
        CHECK(model.thresholds.maxCoeff() / model.thresholds.minCoeff() < 1.10);

        CHECK_THROWS_AS(asr_calibrate(as_rec(white_rows(6, 125 * 5, 5), 125.0)), DataError);
    }

    TEST_CASE("ASR passes clean data and leaves no flags")
    {
        const auto rec = as_rec(white_rows(6, 125 * 120, 6) * 10.0, 125.0);
        const auto model = asr_calibrate(rec);
        const auto test = as_rec(white_rows(6, 125 * 60, 7) * 10.0, 125.0);
        const auto out = asr_process(test, model);
        CHECK(out.flagged_count() == 0);
        CHECK((out.cleaned.data - test.data).norm() / test.data.norm() < 0.05);
    }

    TEST_CASE("ASR reduces a planted burst")
    {
        const double rate = 125.0;
        const auto calib = as_rec(white_rows(6, 125 * 120, 8) * 10.0, rate);
        const auto model = asr_calibrate(calib);
        auto test = as_rec(white_rows(6, 125 * 60, 9) * 10.0, rate);
        const Eigen::Index b0 = 125 * 30;
        const Eigen::Index bl = 62;
        test.data.block(2, b0, 1, bl) *= 10.0;
        const auto out = asr_process(test, model);

        const double before = testing::rms(test.data.block(2, b0, 1, bl).transpose());
        const double after = testing::rms(out.cleaned.data.block(2, b0, 1, bl).transpose());
        CHECK(after <= 0.5 * before);

        // away from the burst the data is untouched within 5%
        const Eigen::Index far = 125 * 10;
        const Eigen::MatrixXd a = test.data.leftCols(far);
        const Eigen::MatrixXd b = out.cleaned.data.leftCols(far);
        CHECK((a - b).norm() / a.norm() < 0.05);

        // no window gains energy
        for (const auto start : out.window_starts) {
            const Eigen::Index len = std::min(out.window_length, test.samples() - start);
            const double in = test.data.middleCols(start, len).norm();
            const double outn = out.cleaned.data.middleCols(start, len).norm();
            CHECK(outn <= in + 1e-9);
        }
    }

    TEST_CASE("ASR with an enormous threshold is the identity")
    {
        AsrConfig cfg;
        cfg.burst_k = 1e9;
        const auto calib = as_rec(white_rows(4, 125 * 60, 10), 125.0);
        const auto model = asr_calibrate(calib, cfg);
        auto test = as_rec(white_rows(4, 125 * 30, 11), 125.0);
        test.data.block(0, 1000, 1, 50) *= 20.0;
        const auto out = asr_process(test, model, cfg);
        CHECK(out.cleaned.data == test.data);
        CHECK(out.flagged_count() == 0);
    }

    TEST_CASE("window criterion arithmetic")
    {
        CHECK_FALSE(exceeds_window_criterion(2, 16, 0.15));
        CHECK(exceeds_window_criterion(3, 16, 0.15));
        CHECK_FALSE(exceeds_window_criterion(0, 16, 0.0));
        CHECK(exceeds_window_criterion(1, 16, 0.0));
    }
}
