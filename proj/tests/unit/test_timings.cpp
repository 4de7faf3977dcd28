#include <nlohmann/json.hpp>

#include "doctest.h"
#include "skewstream/error.hpp"
#include "skewstream/timings.hpp"

using namespace skewstream;

TEST_CASE("least squares slope") {
    CHECK(least_squares_slope(std::vector<double>{}) == 0.0);
    CHECK(least_squares_slope(std::vector<double>{4.0}) == 0.0);
    CHECK(least_squares_slope(std::vector<double>{1, 3, 5, 7}) == doctest::Approx(2.0));
    CHECK(least_squares_slope(std::vector<double>{5, 5, 5}) == 0.0);
    // y = 0, 1, 0, 1: slope 0.2 from the normal equations.
    CHECK(least_squares_slope(std::vector<double>{0, 1, 0, 1}) == doctest::Approx(0.2));
}

TEST_CASE("stage queue model") {
    SUBCASE("acquisition limited: constant lag of one frame's processing plus plotting") {
        const auto h = simulate_stage_queue(80.0, 10.0, 5.0, 20, 50);
        REQUIRE(h.size() == 20);
        for (const auto& t : h) CHECK(t.lag_ms == doctest::Approx(10.0 / 50 + 5.0));
    }
    SUBCASE("processing limited: lag grows by the deficit each stack") {
        const auto h = simulate_stage_queue(10.0, 30.0, 1.0, 10, 5);
        for (std::size_t k = 1; k < h.size(); ++k) CHECK(h[k].lag_ms - h[k - 1].lag_ms == doctest::Approx(20.0));
    }
    SUBCASE("plotting limited") {
        const auto h = simulate_stage_queue(10.0, 1.0, 25.0, 10, 5);
        for (std::size_t k = 1; k < h.size(); ++k) CHECK(h[k].lag_ms - h[k - 1].lag_ms == doctest::Approx(15.0));
    }
    SUBCASE("bad arguments") {
        CHECK_THROWS_AS(simulate_stage_queue(-1, 1, 1, 3, 1), ParameterError);
        CHECK_THROWS_AS(simulate_stage_queue(1, 1, 1, 3, 0), ParameterError);
        CHECK(simulate_stage_queue(1, 1, 1, 0, 1).empty());
    }
}

TEST_CASE("bottleneck classification") {
    CHECK(classify_bottleneck(simulate_stage_queue(80, 10, 5, 10, 50)).stage == Bottleneck::acquisition_limited);
    CHECK(classify_bottleneck(simulate_stage_queue(10, 30, 1, 10, 5)).stage == Bottleneck::processing_limited);
    CHECK(classify_bottleneck(simulate_stage_queue(10, 1, 25, 10, 5)).stage == Bottleneck::plotting_limited);

    const auto fast = classify_bottleneck(simulate_stage_queue(80, 10, 5, 10, 50));
    CHECK(fast.lag_bounded);
    CHECK(fast.lag_slope_ms_per_stack == doctest::Approx(0.0));
    CHECK(fast.mean_acquisition_ms == 80.0);
    CHECK(fast.mean_processing_ms == 10.0);
    CHECK(fast.mean_plotting_ms == 5.0);
    const auto slow = classify_bottleneck(simulate_stage_queue(10, 30, 1, 10, 5));
    CHECK_FALSE(slow.lag_bounded);
    CHECK(slow.lag_slope_ms_per_stack == doctest::Approx(20.0));

    SUBCASE("ties go to the earlier stage") {
        const std::vector<StageTimings> all_equal(3, StageTimings{5, 5, 5, 1});
        CHECK(classify_bottleneck(all_equal).stage == Bottleneck::acquisition_limited);
        const std::vector<StageTimings> proc_plot(3, StageTimings{1, 5, 5, 1});
        CHECK(classify_bottleneck(proc_plot).stage == Bottleneck::processing_limited);
    }
    SUBCASE("slope threshold is 5% of mean acquisition") {
        std::vector<StageTimings> h;
        for (int k = 0; k < 5; ++k) h.push_back({100, 1, 1, 10.0 + 5.0 * k});
        CHECK(classify_bottleneck(h).lag_bounded);
        for (int k = 0; k < 5; ++k) h[k].lag_ms = 10.0 + 5.01 * k;
        CHECK_FALSE(classify_bottleneck(h).lag_bounded);
    }
    CHECK_THROWS_AS(classify_bottleneck(std::vector<StageTimings>(2)), InsufficientDataError);
    CHECK(to_string(Bottleneck::plotting_limited) == "plotting_limited");
}

TEST_CASE("timings json") {
    const StageTimings t{1.5, 2.5, 3.5, 4.5};
    const nlohmann::json j = t;
    CHECK(j.at("lag_ms") == 4.5);
    const auto back = j.get<StageTimings>();
    CHECK(back.acquisition_ms == 1.5);
    CHECK(back.plotting_ms == 3.5);
}
