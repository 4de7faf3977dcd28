#include <random>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "skewstream/bench.hpp"
#include "skewstream/error.hpp"
#include "test_support.hpp"

using namespace skewstream;
using nlohmann::json;

namespace {

BenchSettings tiny() {
    BenchSettings s;
    s.geometry.alpha_deg = 30.0;
    s.geometry.pixel_pitch_um = 0.2;
    s.geometry.slice_count = 6;
    s.geometry.frame_width_px = 16;
    s.geometry.frame_height_px = 8;
    s.timing = {0.1, 1.5};
    s.fov_um = 4.0;
    s.repeats = 1;
    s.exposures_ms = {0.1, 0.5};
    s.slice_counts = {4, 6};
    s.fovs_um = {4.0, 8.0};
    s.crossover_exposures_ms = {0.1, 0.5};
    s.crossover_fov_start_um = 2.0;
    s.crossover_max_points = 2;
    return s;
}

}  // namespace

TEST_CASE("kendall tau") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    CHECK(kendall_tau(x, std::vector<double>{2, 4, 6, 8, 10}) == doctest::Approx(1.0));
    CHECK(kendall_tau(x, std::vector<double>{5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
    // One swapped neighbour pair: 9 concordant, 1 discordant.
    CHECK(kendall_tau(x, std::vector<double>{1, 3, 2, 4, 5}) == doctest::Approx(0.8));
    CHECK(kendall_tau(x, std::vector<double>(5, 7.0)) == 0.0);
    CHECK_THROWS_AS(kendall_tau(x, std::vector<double>{1, 2}), ParameterError);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a(12), b(12);
        for (auto& v : a) v = u(rng);
        for (auto& v : b) v = u(rng);
        CHECK(kendall_tau(a, b) == doctest::Approx(skewstream::testing::kendall_tau(a, b)));
    }
}

TEST_CASE("relative MAD") {
    CHECK(relative_mad(std::vector<double>{10, 10, 10}) == 0.0);
    // median 10, deviations {1, 0, 5} -> MAD 1.
    CHECK(relative_mad(std::vector<double>{9, 10, 15}) == doctest::Approx(0.1));
    CHECK(relative_mad(std::vector<double>{}) == 0.0);
}

TEST_CASE("expected trends") {
    CHECK(expected_trend(BenchAxis::exposure, "acquisition") == "increasing");
    CHECK(expected_trend(BenchAxis::exposure, "processing") == "invariant");
    CHECK(expected_trend(BenchAxis::exposure, "plotting") == "invariant");
    CHECK(expected_trend(BenchAxis::slices, "acquisition") == "increasing");
    CHECK(expected_trend(BenchAxis::slices, "processing") == "increasing");
    CHECK(expected_trend(BenchAxis::slices, "plotting") == "invariant");
    CHECK(expected_trend(BenchAxis::fov, "acquisition") == "invariant");
    CHECK(expected_trend(BenchAxis::fov, "processing") == "increasing");
    CHECK(expected_trend(BenchAxis::fov, "plotting") == "increasing");
    CHECK_THROWS_AS(expected_trend(BenchAxis::fov, "rendering"), ParameterError);
}

TEST_CASE("cell classification") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    auto c = classify_cell(BenchAxis::exposure, "acquisition", x, std::vector<double>{10, 12, 15, 20, 30}, 0.0);
    CHECK(c.measured == "increasing");
    CHECK(c.pass);
    CHECK(c.relative_spread == doctest::Approx(20.0 / 15.0));

    c = classify_cell(BenchAxis::exposure, "processing", x, std::vector<double>{10, 10.5, 9.8, 10.2, 10.9}, 0.0);
    CHECK(c.measured == "invariant");
    CHECK(c.noise_band == 0.2);
    CHECK(c.pass);

    // Monotone but inside the band is still invariant.
    c = classify_cell(BenchAxis::fov, "processing", x, std::vector<double>{10, 10.2, 10.4, 10.6, 10.8}, 0.0);
    CHECK(c.measured == "invariant");
    CHECK_FALSE(c.pass);

    // A noisy point widens the band.
    c = classify_cell(BenchAxis::slices, "plotting", x, std::vector<double>{10, 12, 9, 11, 12.5}, 0.2);
    CHECK(c.noise_band == doctest::Approx(0.4));
    CHECK(c.measured == "invariant");

    c = classify_cell(BenchAxis::fov, "plotting", x, std::vector<double>{10, 30, 12, 40, 8}, 0.0);
    CHECK(c.measured == "varying");
    CHECK_FALSE(c.pass);
}

TEST_CASE("bench settings validation") {
    auto s = tiny();
    CHECK_NOTHROW(s.validate());
    CHECK(s.geometry_for(5, 8.0).scan_step_um == doctest::Approx(2.0));
    CHECK_THROWS_AS(s.geometry_for(1, 8.0), ParameterError);
    CHECK_THROWS_AS(s.geometry_for(5, 0.0), ParameterError);
    s.stacks = 3;
    CHECK_THROWS_AS(s.validate(), ParameterError);
    s = tiny();
    s.exposures_ms = {-1.0};
    CHECK_THROWS_AS(s.validate(), ParameterError);
    s = tiny();
    s.crossover_fov_growth = 1.0;
    CHECK_THROWS_AS(s.validate(), ParameterError);
    s = tiny();
    s.repeats = 0;
    CHECK_THROWS_AS(s.validate(), ParameterError);
}

TEST_CASE("bench report structure") {
    const auto s = tiny();
    const auto report = run_bench(s);
    REQUIRE(report.points.size() == 6);
    REQUIRE(report.cells.size() == 9);
    for (const auto& p : report.points) {
        CHECK(p.stacks.size() == std::size_t(s.stacks - 1) * s.repeats);
        CHECK(p.display_width == 16);
        CHECK(p.timings.acquisition_ms == doctest::Approx(p.slices * (p.exposure_ms + p.readout_ms)));
    }
    // Acquisition runs on the virtual clock, so its columns are exact.
    for (const auto& c : report.cells) {
        if (c.stage != "acquisition") continue;
        CHECK(c.pass);
    }
    // Same FOV, different N: identical canvas.
    CHECK(report.points[2].display_height == report.points[3].display_height);
    CHECK(report.points[5].display_height > report.points[4].display_height);
    REQUIRE(report.crossovers.size() == 2);
    CHECK(report.crossovers[0].exposure_ms == 0.1);
    for (const auto& c : report.crossovers) CHECK(c.points.size() <= 2);

    const json j = report;
    CHECK(j["schema"] == "skewstream.bench_report/1");
    CHECK(j["cells"].size() == 9);
    CHECK(j["points"][0]["timings"].contains("plotting_ms"));
    CHECK(j["settings"]["geometry"]["frame_width_px"] == 16);
    CHECK(j["crossovers"][0]["points"].is_array());
    CHECK(report.render_table().find("increasing scan FOV") != std::string::npos);
}
