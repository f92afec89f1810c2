#include "earpipe/analysis.hpp"
#include "earpipe/ingest.hpp"
#include "earpipe/pipeline.hpp"
#include "earpipe/synth.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <map>

using namespace earpipe;
namespace fs = std::filesystem;

namespace {

// writes a 2 x 30 s Berger session and returns a config pointing at it
config::PipelineConfig berger_fixture(const fs::path& dir)
{
    synth::BergerSpec spec;
    spec.segment_s = 30.0;
    const auto rec = synth::berger_session(spec);
    ingest::write_session_csv(dir / "session.csv", rec);
    ingest::write_events_csv(dir / "events.csv", rec.events);
    auto cfg = config::parse_pipeline_config("session = session.csv\nevents = events.csv\nica_seed = 42\n", dir);
    cfg.output_dir = dir / "out";
    return cfg;
}

std::map<std::string, double> mean_band(const fs::path& csv, const std::string& condition)
{
    std::map<std::string, std::pair<double, int>> acc;
    std::istringstream in(testing::slurp(csv));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');)
            f.push_back(cell);
        if (f.size() == 5 && f[1] == condition) {
            acc[f[3]].first += std::stod(f[4]);
            acc[f[3]].second += 1;
        }
    }
    std::map<std::string, double> out;
    for (const auto& [k, v] : acc)
        out[k] = v.first / v.second;
    return out;
}

} // namespace

TEST_SUITE("pipeline")
{
    TEST_CASE("band table format")
    {
        const auto dir = testing::tmp_dir("pipe_bands");
        Eigen::MatrixXd p(2, 2);
        p << -1.5, 3.0, 0.25, 7.0;
        const auto rows = pipeline::band_rows("P1", "open", {"R1", "R2"}, p, {{"Theta", 4, 7}, {"Alpha", 8, 12}});
        REQUIRE(rows.size() == 4);
        pipeline::write_bands_csv(dir / "b.csv", rows);
        const auto text = testing::slurp(dir / "b.csv");
        CHECK(text.rfind("participant,condition,channel,band,power_db\n", 0) == 0);
        CHECK(text.find("P1,open,R2,Alpha,7\n") != std::string::npos);
        CHECK(pipeline::format_number(0.1) == "0.1");
    }

    TEST_CASE("beats and R-R files")
    {
        const auto dir = testing::tmp_dir("pipe_beats");
        cardiac::BeatSeries b{{0.5, 1.5, 2.4}, 1000.0};
        pipeline::write_beats_csv(dir / "b.csv", b);
        CHECK(pipeline::read_beats_csv(dir / "b.csv").beat_times == b.beat_times);
        testing::spit(dir / "bad.csv", "t\n1.0\n0.5\n");
        CHECK_THROWS_AS(pipeline::read_beats_csv(dir / "bad.csv"), DataError);

        cardiac::RrSeries rr;
        rr.intervals_ms = {1000.0, 5000.0, 1000.0};
        rr.anchored_at = {0.0, 1.0, 6.0};
        pipeline::write_rr_csv(dir / "rr.csv", {rr}, {});
        const auto text = testing::slurp(dir / "rr.csv");
        CHECK(text.rfind("beat_time_s,rr_ms,flag\n", 0) == 0);
        CHECK(text.find("1,5000,outlier") != std::string::npos);
        CHECK(text.find("0,1000,ok") != std::string::npos);
    }

    TEST_CASE("masked Welch skips unusable samples")
    {
        Recording rec;
        rec.rate = 125.0;
        rec.data = testing::white(2000, 3).transpose();
        std::vector<bool> usable(2000, true);
        const auto full = pipeline::masked_welch(rec, usable, {});
        REQUIRE(full.has_value());
        const auto plain = spectral::welch_psd(rec);
        CHECK(full->window_count == plain.window_count);
        CHECK((full->power - plain.power).cwiseAbs().maxCoeff() <= 1e-12 * plain.power.maxCoeff());

        for (std::size_t i = 900; i < 1100; ++i) {
            usable[i] = false;
            rec.data(0, static_cast<Eigen::Index>(i)) = 1e6;
        }
        const auto masked = pipeline::masked_welch(rec, usable, {});
        REQUIRE(masked.has_value());
        CHECK(masked->power.maxCoeff() < 1.0);
        CHECK_FALSE(pipeline::masked_welch(rec, std::vector<bool>(2000, false), {}).has_value());
    }

    TEST_CASE("end-to-end on a Berger session is deterministic")
    {
        const auto dir = testing::tmp_dir("pipe_berger");
        auto cfg = berger_fixture(dir);
        pipeline::run(cfg);
        const auto first = testing::slurp(cfg.output_dir / "bands.csv");
        const auto qc = testing::slurp(cfg.output_dir / "qc.json");
        pipeline::run(cfg);
        CHECK(testing::slurp(cfg.output_dir / "bands.csv") == first);
        CHECK(testing::slurp(cfg.output_dir / "qc.json") == qc);
        for (const char* f : {"rr.csv", "bland_altman.json", "regression.json", "run_meta.json"})
            CHECK(fs::exists(cfg.output_dir / f));

        const auto open = mean_band(cfg.output_dir / "bands.csv", "open");
        const auto closed = mean_band(cfg.output_dir / "bands.csv", "closed");
        CHECK(closed.at("Alpha") - open.at("Alpha") >= 6.0);
        CHECK(std::abs(closed.at("Theta") - open.at("Theta")) < 1.5);
        CHECK(std::abs(closed.at("Beta") - open.at("Beta")) < 1.5);

        const auto j = nlohmann::json::parse(qc);
        CHECK(j.contains("notes"));
    }

    TEST_CASE("stage toggles")
    {
        const auto dir = testing::tmp_dir("pipe_toggle");
        auto cfg = berger_fixture(dir);
        cfg.stages = {config::Stage::Cut,      config::Stage::Baseline, config::Stage::Reref, config::Stage::Highpass,
                      config::Stage::Lowpass, config::Stage::Psd,      config::Stage::Bands};
        pipeline::run(cfg);
        const auto open = mean_band(cfg.output_dir / "bands.csv", "open");
        const auto closed = mean_band(cfg.output_dir / "bands.csv", "closed");
        CHECK(closed.at("Alpha") - open.at("Alpha") >= 6.0);

        SUBCASE("no bands stage writes no band table")
        {
            cfg.output_dir = dir / "out2";
            cfg.stages = {config::Stage::Cut, config::Stage::Highpass, config::Stage::Lowpass, config::Stage::Psd,
                          config::Stage::Qc};
            pipeline::run(cfg);
            CHECK_FALSE(fs::exists(cfg.output_dir / "bands.csv"));
            CHECK(fs::exists(cfg.output_dir / "qc.json"));
        }
        SUBCASE("cut disabled uses the whole recording")
        {
            cfg.output_dir = dir / "out3";
            cfg.stages = {config::Stage::Highpass, config::Stage::Lowpass, config::Stage::Psd, config::Stage::Bands};
            pipeline::run(cfg);
            CHECK(testing::slurp(cfg.output_dir / "bands.csv").find(",all,") != std::string::npos);
        }
    }

    TEST_CASE("input errors")
    {
        const auto dir = testing::tmp_dir("pipe_errors");
        auto cfg = berger_fixture(dir);
        cfg.events = dir / "missing.csv";
        CHECK_THROWS_AS(pipeline::run(cfg), DataError);
        cfg = berger_fixture(dir);
        cfg.session = dir / "missing.csv";
        CHECK_THROWS_AS(pipeline::run(cfg), DataError);
        cfg = berger_fixture(dir);
        cfg.events.reset();
        CHECK_THROWS_AS(pipeline::run(cfg), ConfigError);
    }

    TEST_CASE("analysis over a band table")
    {
        const auto dir = testing::tmp_dir("pipe_analysis");
        std::ostringstream csv;
        csv << "participant,condition,channel,band,power_db,tlx_total,flow_mean\n";
        const auto noise = testing::white(400, 61, 0.3);
        int k = 0;
        const std::vector<std::string> conds{"closed", "easy", "optimal", "hard"};
        for (int p = 0; p < 10; ++p) {
            for (std::size_t c = 0; c < conds.size(); ++c) {
                const double load = static_cast<double>(c);
                for (const std::string ch : {"R1", "L1"}) {
                    csv << "P" << p << "," << conds[c] << "," << ch << ",Theta,"
                        << (load + noise[k++] + p) << "," << (20.0 * load + 5.0 * noise[k++]) << ","
                        << (5.0 - (load - 2.0) * (load - 2.0) + noise[k++]) << "\n";
                }
            }
        }
        testing::spit(dir / "t.csv", csv.str());
        const auto rows = analysis::read_table(dir / "t.csv");
        CHECK(rows.size() == 80);
        const auto report = analysis::run(rows, {});
        REQUIRE(report.bands.size() == 1);
        const auto& b = report.bands[0];
        REQUIRE(b.contrasts.has_value());
        CHECK(b.contrasts->rows.size() == 6);
        CHECK(b.contrasts->p < 0.05);
        REQUIRE(b.workload.fit.has_value());
        CHECK(b.workload.fit->coef(1).estimate > 0.0);
        CHECK(b.workload.fit->n == 30); // closed excluded
        REQUIRE(b.flow.fit.has_value());
        CHECK(b.flow.fit->model == stats::Model::QuadraticOrthogonal);

        const auto j = pipeline::analysis_json(report);
        CHECK(j.dump().find("Theta") != std::string::npos);

        testing::spit(dir / "bad.csv", "participant,condition\nP1,a\n");
        CHECK_THROWS_AS(analysis::read_table(dir / "bad.csv"), DataError);
    }
}
