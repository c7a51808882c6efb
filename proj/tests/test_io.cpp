#include <doctest.h>

#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "fixtures.hpp"
#include "kldp/engine.hpp"
#include "kldp/errors.hpp"
#include "kldp/io.hpp"

using namespace kldp;
namespace fs = std::filesystem;

namespace {

WaveformRecord sample_record() {
    sim::ScenarioConfig cfg;
    cfg.duration_s = 0.05;
    cfg.snr_db = 30.0;
    sim::FaultSpec f;
    f.t_f = 0.02;
    f.r_f = 10.0;
    return sim::simulate_scenario(cfg, f).record;
}

}  // namespace

TEST_CASE("waveform CSV round-trips to ten significant digits") {
    const auto rec = sample_record();
    const auto text = io::waveform_to_csv(rec, "cafe");
    CHECK(text.rfind("# config_hash=cafe\n", 0) == 0);
    CHECK(text.find("t_s,ia_s,ib_s,ic_s,ia_r,ib_r,ic_r\n") != std::string::npos);
    const auto back = io::waveform_from_csv(text);
    CHECK(back.sample_rate_hz == rec.sample_rate_hz);
    REQUIRE(back.size() == rec.size());
    for (int c = 0; c < 6; ++c)
        for (std::size_t k = 0; k < rec.size(); ++k)
            CHECK(std::abs(back.channels[c][k] - rec.channels[c][k]) <= 1e-9 * std::max(1.0, std::abs(rec.channels[c][k])));
    // A second round trip is exact.
    CHECK(io::waveform_to_csv(back, "cafe") == text);
}

TEST_CASE("waveform CSV without a rate comment infers it from the time column") {
    const std::string text = "t_s,ia_s,ib_s,ic_s,ia_r,ib_r,ic_r\n0,1,2,3,4,5,6\n0.0005,1,2,3,4,5,6\n0.001,1,2,3,4,5,6\n";
    const auto rec = io::waveform_from_csv(text);
    CHECK(rec.sample_rate_hz == doctest::Approx(2000.0));
    CHECK(rec.size() == 3);
}

TEST_CASE("malformed waveform files are rejected") {
    const std::string header = "t_s,ia_s,ib_s,ic_s,ia_r,ib_r,ic_r\n";
    CHECK_THROWS_AS(io::waveform_from_csv(header + "0,1,2,3,4,5\n0.1,1,2,3,4,5\n"), ShapeError);
    CHECK_THROWS_AS(io::waveform_from_csv(header + "0,1,2,3,4,5,6,7\n"), ShapeError);
    CHECK_THROWS_AS(io::waveform_from_csv(header + "0,1,x,3,4,5,6\n0.1,1,2,3,4,5,6\n"), ValidationError);
    CHECK_THROWS_AS(io::waveform_from_csv("t,a,b\n0,1,2\n"), ValidationError);
    CHECK_THROWS_AS(io::waveform_from_csv(header), DegenerateInputError);
    CHECK_THROWS_AS(io::read_waveform("/nonexistent/file.csv"), IoError);
}

TEST_CASE("scenario sidecar round-trips") {
    sim::Scenario sc;
    sc.id = "grid-snr20-int-acg-loc0.7-rf150";
    sc.kind = sim::ScenarioKind::internal;
    sc.cfg.snr_db = 20.0;
    sc.cfg.source_mode = sim::SourceMode::islanded;
    sc.fault.emplace();
    sc.fault->label = FaultLabel::acg;
    sc.fault->r_f = 150.0;
    sc.fault->location_frac = 0.7;
    const auto res = sim::simulate_scenario(sc.cfg, sc.fault, sc.id);
    const auto meta = io::scenario_meta(sc, res.truth, "h1");
    const auto back = io::meta_from_json(io::meta_to_json(meta));
    CHECK(back.truth.scenario_id == sc.id);
    CHECK(back.truth.label == FaultLabel::acg);
    CHECK(back.truth.t_f == 0.1);
    CHECK(back.truth.internal);
    CHECK(back.truth.seed == sc.cfg.seed);
    CHECK(back.kind == "internal");
    CHECK(back.source_mode == "islanded");
    CHECK(back.snr_db == 20.0);
    CHECK(back.r_f == 150.0);
    CHECK(back.location_frac == 0.7);
    CHECK(back.config_hash == "h1");

    CHECK(io::sidecar_path("dir/x.csv") == fs::path("dir/x.truth.json"));
    CHECK_THROWS_AS(io::meta_from_json(R"({"scenario_id":"x","label":"zz"})"), ValidationError);
}

TEST_CASE("model JSON round-trip preserves scores bit for bit") {
    const auto& model = fixture::small_model();
    const auto back = io::model_from_json(io::model_to_json(model));
    CHECK(back.window == model.window);
    for (int g = 0; g < 4; ++g) CHECK(back.edges[g] == model.edges[g]);
    CHECK(back.k0 == model.k0);
    CHECK(back.mu_p == model.mu_p);
    CHECK(back.sigma_p == model.sigma_p);
    CHECK(back.thresholds.tau_det == model.thresholds.tau_det);
    CHECK(back.thresholds.z_cls == model.thresholds.z_cls);
    CHECK(back.thresholds.tau0_cls == model.thresholds.tau0_cls);
    CHECK(back.vote.j == model.vote.j);
    CHECK(back.vote.m == model.vote.m);
    CHECK(back.covariance.lambda() == model.covariance.lambda());
    CHECK(back.covariance.mu() == model.covariance.mu());
    CHECK(back.covariance.gamma() == model.covariance.gamma());
    CHECK(back.phase_binning == model.phase_binning);
    CHECK(back.zero_binning == model.zero_binning);

    sim::ScenarioConfig cfg;
    sim::FaultSpec f;
    f.label = FaultLabel::bg;
    f.r_f = 100.0;
    const auto rec = sim::simulate_scenario(cfg, f).record;
    const auto a = engine::run_stream(rec, model);
    const auto b = engine::run_stream(rec, back);
    REQUIRE(a.windows.size() == b.windows.size());
    for (std::size_t i = 0; i < a.windows.size(); ++i) CHECK(a.windows[i].d_sq == b.windows[i].d_sq);
}

TEST_CASE("model loading validates consistency") {
    const auto& model = fixture::small_model();
    auto j = nlohmann::json::parse(io::model_to_json(model));

    auto bad = j;
    bad["thresholds"]["tau_det"] = 1.0;
    CHECK_THROWS_AS(io::model_from_json(bad.dump()), ValidationError);

    bad = j;
    bad["k0"] = model.k0 + 1;
    CHECK_THROWS_AS(io::model_from_json(bad.dump()), ValidationError);

    bad = j;
    bad.erase("mu");
    CHECK_THROWS_AS(io::model_from_json(bad.dump()), ValidationError);

    bad = j;
    bad["schema_version"] = 99;
    CHECK_THROWS_AS(io::model_from_json(bad.dump()), ValidationError);

    bad = j;
    bad["gamma"][0] = nlohmann::json::array({1.0, 2.0});
    CHECK_THROWS_AS(io::model_from_json(bad.dump()), ShapeError);

    CHECK_THROWS_AS(io::model_from_json("[]"), ValidationError);
}

TEST_CASE("event log has one row per window with four flag characters") {
    const auto& model = fixture::small_model();
    sim::ScenarioConfig cfg;
    sim::FaultSpec f;
    f.label = FaultLabel::abg;
    f.r_f = 0.1;
    const auto res = engine::run_stream(sim::simulate_scenario(cfg, f).record, model);
    const auto csv = io::event_log_to_csv(res, "beef");
    std::size_t lines = 0;
    for (char ch : csv) lines += ch == '\n';
    CHECK(lines == res.windows.size() + 2);
    CHECK(csv.find("t_end_s,d_sq,z_a,z_b,z_c,g0,flags,tripped,label\n") != std::string::npos);
    CHECK(csv.find(",1101,1,abg\n") != std::string::npos);
    CHECK(csv.find(",0000,0,\n") != std::string::npos);
}

TEST_CASE("atomic writes leave no temporary files behind") {
    const auto dir = fs::temp_directory_path() / "kldp_test_atomic";
    fs::remove_all(dir);
    io::write_file_atomic(dir / "sub" / "x.txt", "one");
    io::write_file_atomic(dir / "sub" / "x.txt", "two");
    CHECK(io::read_file(dir / "sub" / "x.txt") == "two");
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir / "sub")) n += e.is_regular_file();
    CHECK(n == 1);
    fs::remove_all(dir);
}
