#include "earpipe/cardiac.hpp"
#include "earpipe/synth.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <set>

using namespace earpipe;
using namespace earpipe::cardiac;

namespace {

struct Scores {
    double sensitivity = 0.0;
    double precision = 0.0;
};

// planted vs detected within 50 ms, each used once
Scores score(const std::vector<double>& truth, const std::vector<double>& found)
{
    std::size_t hits = 0;
    std::vector<bool> used(found.size(), false);
    for (double t : truth) {
        for (std::size_t j = 0; j < found.size(); ++j) {
            if (!used[j] && std::abs(found[j] - t) <= 0.05) {
                used[j] = true;
                ++hits;
                break;
            }
        }
    }
    return {static_cast<double>(hits) / static_cast<double>(truth.size()),
            found.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(found.size())};
}

BeatSeries beats(std::vector<double> t)
{
    return {std::move(t), 1000.0};
}

} // namespace

TEST_SUITE("cardiac")
{
    TEST_CASE("clean 60 bpm at 1000 Hz")
    {
        synth::EcgSynthSpec spec;
        spec.duration_s = 30.0;
        const auto ecg = synth::gen_ecg(spec);
        const auto found = pan_tompkins(ecg.rec.data.row(0).transpose(), 1000.0);
        const auto s = score(ecg.true_beats.beat_times, found.beat_times);
        CHECK(s.sensitivity == 1.0);
        CHECK(s.precision == 1.0);
        for (double rr : rr_periods(found).intervals_ms)
            CHECK(std::abs(rr - 1000.0) <= 2.0);
    }

    TEST_CASE("flat signal gives no beats")
    {
        CHECK(pan_tompkins(Eigen::VectorXd::Zero(10000), 1000.0).beat_times.empty());
    }

    TEST_CASE("10 dB SNR")
    {
        synth::EcgSynthSpec spec;
        spec.duration_s = 120.0;
        spec.noise_snr_db = 10.0;
        spec.seed = 21;
        const auto ecg = synth::gen_ecg(spec);
        const auto found = pan_tompkins(ecg.rec.data.row(0).transpose(), 1000.0);
        const auto s = score(ecg.true_beats.beat_times, found.beat_times);
        CHECK(s.sensitivity >= 0.99);
        CHECK(s.precision >= 0.99);
    }

    TEST_CASE("preconditions")
    {
        CHECK_THROWS_AS(pan_tompkins(Eigen::VectorXd::Zero(1000), 50.0), DataError);
        CHECK_THROWS_AS(pan_tompkins(Eigen::VectorXd::Zero(400), 100.0), DataError);
    }

    TEST_CASE("time shift and amplitude scale")
    {
        synth::EcgSynthSpec spec;
        spec.rate = 250.0;
        spec.duration_s = 30.0;
        spec.rr_jitter_ms = 30.0;
        spec.seed = 5;
        const Eigen::VectorXd x = synth::gen_ecg(spec).rec.data.row(0).transpose();
        const auto base = pan_tompkins(x, 250.0);
        REQUIRE(base.beat_times.size() > 20);

        // power-of-two scaling is exact in floating point, so beats match bit for bit
        CHECK(pan_tompkins(x * 4.0, 250.0).beat_times == base.beat_times);
        CHECK(pan_tompkins(x * 0.125, 250.0).beat_times == base.beat_times);
        const auto scaled = pan_tompkins(x * 3.7, 250.0);
        REQUIRE(scaled.beat_times.size() == base.beat_times.size());
        for (std::size_t i = 0; i < base.beat_times.size(); ++i)
            CHECK(std::abs(scaled.beat_times[i] - base.beat_times[i]) < 1e-9);

        const Eigen::Index d = 37;
        Eigen::VectorXd shifted = Eigen::VectorXd::Zero(x.size());
        shifted.tail(x.size() - d) = x.head(x.size() - d);
        const auto moved = pan_tompkins(shifted, 250.0);
        // beats that survive the shift move by d samples (1 sample slack)
        std::size_t compared = 0;
        for (double t : base.beat_times) {
            if (t + d / 250.0 > 28.0 || t < 2.5)
                continue;
            double best = 1e9;
            for (double u : moved.beat_times)
                best = std::min(best, std::abs(u - (t + d / 250.0)));
            CHECK(best <= 1.0 / 250.0 + 1e-9);
            ++compared;
        }
        CHECK(compared > 15);
    }

    TEST_CASE("R-R periods")
    {
        auto rr = rr_periods(beats({0.0, 1.0, 2.0}));
        CHECK(rr.intervals_ms == std::vector<double>{1000.0, 1000.0});
        CHECK(rr.anchored_at == std::vector<double>{0.0, 1.0});
        CHECK(rr_periods(beats({0.0, 0.8})).intervals_ms[0] == doctest::Approx(800.0));
        std::vector<double> t;
        for (int i = 0; i < 101; ++i)
            t.push_back(i * 0.9);
        CHECK(rr_periods(beats(t)).intervals_ms.size() == 100);
    }

    TEST_CASE("R-R outlier filter")
    {
        RrSeries flat;
        for (int i = 0; i < 30; ++i) {
            flat.intervals_ms.push_back(1000.0);
            flat.anchored_at.push_back(i);
        }
        CHECK(rr_outlier_filter(flat).dropped_count == 0);

        RrSeries spike = flat;
        spike.intervals_ms[12] = 5000.0;
        const auto f = rr_outlier_filter(spike);
        CHECK(f.dropped_count == 1);
        CHECK(f.dropped[12]);
        CHECK(f.kept.intervals_ms.size() == 29);

        std::size_t dropped = 0;
        std::size_t total = 0;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            const auto noise = testing::white(500, seed, 20.0);
            RrSeries s;
            for (Eigen::Index i = 0; i < noise.size(); ++i) {
                s.intervals_ms.push_back(1000.0 + noise[i]);
                s.anchored_at.push_back(static_cast<double>(i));
            }
            dropped += rr_outlier_filter(s).dropped_count;
            total += s.intervals_ms.size();
        }
        CHECK(static_cast<double>(dropped) / static_cast<double>(total) < 0.01);
    }

    TEST_CASE("beat matching")
    {
        std::vector<double> ref;
        for (int i = 0; i < 50; ++i)
            ref.push_back(0.5 + i * 0.95);

        SUBCASE("identical")
        {
            const auto m = match_beats(beats(ref), beats(ref));
            CHECK(m.pairs.size() == 50);
            CHECK(m.unmatched_ref == 0);
            CHECK(m.unmatched_alt == 0);
        }
        SUBCASE("shifted by 50 ms")
        {
            std::vector<double> alt = ref;
            for (auto& t : alt)
                t += 0.05;
            const auto m = match_beats(beats(ref), beats(alt), 0.15);
            CHECK(m.pairs.size() == 50);
            for (const auto& p : m.pairs)
                CHECK(std::abs(alt[p.alt] - ref[p.ref]) <= 0.15);
        }
        SUBCASE("every 10th beat missing")
        {
            std::vector<double> alt;
            for (std::size_t i = 0; i < ref.size(); ++i)
                if (i % 10 != 9)
                    alt.push_back(ref[i] + 0.01);
            const auto m = match_beats(beats(ref), beats(alt));
            CHECK(m.unmatched_ref == 5);
            CHECK(m.unmatched_alt == 0);
            const auto rr = matched_intervals(beats(ref), beats(alt), m);
            // an interval spans each pair of consecutive matches without a gap
            CHECK(rr.ref_ms.size() == 49 - 2 * 5 + 1);
            for (std::size_t i = 0; i < rr.ref_ms.size(); ++i)
                CHECK(rr.ref_ms[i] == doctest::Approx(950.0));
        }
        SUBCASE("swap symmetry")
        {
            std::vector<double> alt;
            for (std::size_t i = 0; i < ref.size(); ++i)
                if (i % 7 != 3)
                    alt.push_back(ref[i] + 0.03 * std::sin(static_cast<double>(i)));
            alt.push_back(100.0);
            const auto ab = match_beats(beats(ref), beats(alt));
            const auto ba = match_beats(beats(alt), beats(ref));
            CHECK(ab.unmatched_ref == ba.unmatched_alt);
            CHECK(ab.unmatched_alt == ba.unmatched_ref);
            std::set<std::pair<std::size_t, std::size_t>> s1;
            std::set<std::pair<std::size_t, std::size_t>> s2;
            for (const auto& p : ab.pairs)
                s1.insert({p.ref, p.alt});
            for (const auto& p : ba.pairs)
                s2.insert({p.alt, p.ref});
            CHECK(s1 == s2);
        }
    }

    TEST_CASE("ecg likeness")
    {
        RrSeries regular;
        regular.intervals_ms = std::vector<double>(20, 800.0);
        CHECK(ecg_likeness(regular) == doctest::Approx(1.0));
        RrSeries fast;
        fast.intervals_ms = std::vector<double>(20, 100.0);
        CHECK(ecg_likeness(fast) == 0.0);
    }
}
