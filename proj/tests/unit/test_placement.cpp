#include <algorithm>
#include <random>

#include "doctest.h"
#include "skewstream/canvas.hpp"
#include "skewstream/error.hpp"
#include "skewstream/phantom.hpp"
#include "skewstream/pipeline.hpp"
#include "test_support.hpp"

using namespace skewstream;
using skewstream::testing::make_frame;
using skewstream::testing::random_stack;

namespace {

SheetGeometry small_geometry(int w, int h, int n, double step = 3.0) {
    SheetGeometry g;
    g.alpha_deg = 30.0;
    g.scan_step_um = step;
    g.pixel_pitch_um = 1.0;
    g.slice_count = n;
    g.frame_width_px = w;
    g.frame_height_px = h;
    return g;
}

Image16 image(int w, int h, std::initializer_list<std::uint16_t> values) {
    Image16 img(w, h);
    std::copy(values.begin(), values.end(), img.pixels().begin());
    return img;
}

Image16 global_output(const std::vector<RawFrame>& frames, const SheetGeometry& g, double s, Interpolation interp) {
    GlobalAccumulator acc(g, s, interp);
    for (const auto& f : frames) acc.place(f);
    return acc.finalize().pixels;
}

int nonzero(const Image16& img) {
    return static_cast<int>(std::count_if(img.pixels().begin(), img.pixels().end(), [](auto v) { return v != 0; }));
}

}  // namespace

TEST_CASE("placement of hand-checked frames") {
    const auto a = make_frame(2, 2, {1, 2, 3, 4}, 0);
    const auto b = make_frame(2, 2, {5, 0, 0, 1}, 1);
    const auto c = make_frame(2, 2, {0, 9, 2, 2}, 2);

    SUBCASE("two frames, unit shear, 2 x 3 canvas") {
        ProjectionCanvas canvas(Extent{2, 3}, UpdateMode::global);
        CHECK(deskew_place(canvas, a, 1.0, Interpolation::nearest) == RowInterval{0, 2});
        CHECK(deskew_place(canvas, b, 1.0, Interpolation::nearest) == RowInterval{1, 3});
        CHECK(canvas.pixels() == image(2, 3, {1, 2, 5, 4, 0, 1}));
        const auto g = small_geometry(2, 2, 2);
        CHECK(reference_deskew(std::vector{a, b}, g, 1.0) == canvas.pixels());
    }
    SUBCASE("three frames, unit shear, 2 x 4 canvas") {
        const auto g = small_geometry(2, 2, 3);
        const auto expected = image(2, 4, {1, 2, 5, 4, 0, 9, 2, 2});
        CHECK(reference_deskew(std::vector{a, b, c}, g, 1.0) == expected);
        CHECK(global_output({a, b, c}, g, 1.0, Interpolation::nearest) == expected);
    }
    SUBCASE("shear equal to the frame height abuts the frames") {
        const auto g = small_geometry(2, 2, 2);
        CHECK(reference_deskew(std::vector{a, b}, g, 2.0) == image(2, 4, {1, 2, 3, 4, 5, 0, 0, 1}));
    }
}

TEST_CASE("linear placement splits a half-pixel offset across two rows") {
    // Frame 1 at offset 0.5: rows 0..2 receive 0.5*F0, 0.5*F1 + 0.5*F0, 0.5*F1.
    const auto f0 = make_frame(1, 2, {1, 1}, 0);
    const auto f1 = make_frame(1, 2, {4, 8}, 1);
    const auto g = small_geometry(1, 2, 2, 1.0);
    ProjectionCanvas canvas(output_extent(g, 0.5), UpdateMode::global);
    REQUIRE(canvas.height() == 3);
    deskew_place(canvas, f0, 0.5, Interpolation::linear);
    CHECK(deskew_place(canvas, f1, 0.5, Interpolation::linear) == RowInterval{0, 3});
    CHECK(canvas.pixels() == image(1, 3, {2, 6, 4}));
}

TEST_CASE("placement properties") {
    std::mt19937_64 rng(3);
    const auto g = small_geometry(8, 6, 4);
    auto frames = random_stack(rng, 8, 6, 4);

    SUBCASE("an all-zero frame changes nothing") {
        ProjectionCanvas canvas(output_extent(g, 1.5), UpdateMode::global);
        for (const auto& f : frames) deskew_place(canvas, f, 1.5, Interpolation::linear);
        const Image16 before = canvas.pixels();
        RawFrame zero = frames[2];
        zero.pixels.fill(0);
        deskew_place(canvas, zero, 1.5, Interpolation::linear);
        CHECK(canvas.pixels() == before);
    }
    SUBCASE("placing the same frame twice is idempotent") {
        ProjectionCanvas canvas(output_extent(g, 1.5), UpdateMode::global);
        deskew_place(canvas, frames[3], 1.5, Interpolation::linear);
        const Image16 once = canvas.pixels();
        deskew_place(canvas, frames[3], 1.5, Interpolation::linear);
        CHECK(canvas.pixels() == once);
    }
    SUBCASE("width mismatch and overflow") {
        ProjectionCanvas canvas(Extent{7, 30}, UpdateMode::global);
        CHECK_THROWS_AS(deskew_place(canvas, frames[0], 1.0, Interpolation::nearest), ParameterError);
        ProjectionCanvas small(Extent{8, 6}, UpdateMode::global);
        CHECK_THROWS_AS(deskew_place(small, frames[3], 1.0, Interpolation::nearest), CapacityError);
    }
    SUBCASE("clip limits the written rows") {
        ProjectionCanvas canvas(output_extent(g, 2.0), UpdateMode::global);
        const auto rows = deskew_place(canvas, frames[1], 2.0, Interpolation::nearest, RowInterval{3, 5});
        CHECK(rows == RowInterval{3, 5});
        for (int u = 0; u < canvas.height(); ++u) {
            const bool inside = u >= 3 && u < 5;
            bool any = false;
            for (int x = 0; x < 8; ++x) any |= canvas.pixels().at(x, u) != 0;
            CHECK(any == inside);
        }
    }
}

TEST_CASE("reference deskew checks its input") {
    std::mt19937_64 rng(4);
    const auto g = small_geometry(4, 4, 2);
    auto frames = random_stack(rng, 4, 4, 2);
    CHECK(reference_deskew(std::vector{frames[0]}, small_geometry(4, 4, 1), 3.0) == frames[0].pixels);
    auto odd = frames;
    odd[1].pixels = Image16(3, 4);
    CHECK_THROWS(reference_deskew(odd, g, 1.0));
}

TEST_CASE("global accumulation equals the batch reference") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> dim(1, 32), slices(1, 16);
    std::uniform_real_distribution<double> shear(0.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int w = dim(rng), h = dim(rng), n = slices(rng);
        const auto g = small_geometry(w, h, n);
        const double s = shear(rng);
        const auto frames = random_stack(rng, w, h, n, trial, 0.4);
        CHECK(global_output(frames, g, s, Interpolation::nearest) == reference_deskew(frames, g, s));

        const Image16 lin = global_output(frames, g, s, Interpolation::linear);
        const Image16 ref = reference_deskew(frames, g, s, Interpolation::linear);
        REQUIRE(lin.width() == ref.width());
        REQUIRE(lin.height() == ref.height());
        int worst = 0;
        for (std::size_t i = 0; i < lin.size(); ++i) {
            worst = std::max(worst, std::abs(int{lin.pixels()[i]} - int{ref.pixels()[i]}));
        }
        CHECK(worst <= 1);
    }
}

TEST_CASE("global output does not depend on slice arrival order") {
    std::mt19937_64 rng(11);
    const auto g = small_geometry(12, 9, 10);
    auto frames = random_stack(rng, 12, 9, 10);
    const Image16 in_order = global_output(frames, g, 1.7, Interpolation::linear);
    for (int k = 0; k < 5; ++k) {
        std::shuffle(frames.begin(), frames.end(), rng);
        CHECK(global_output(frames, g, 1.7, Interpolation::linear) == in_order);
    }
}

TEST_CASE("global accumulator protocol") {
    std::mt19937_64 rng(5);
    const auto g = small_geometry(4, 4, 3);
    auto frames = random_stack(rng, 4, 4, 3, 7);
    GlobalAccumulator acc(g, 1.0, Interpolation::nearest);
    CHECK(acc.empty());
    acc.place(frames[0]);
    CHECK_THROWS_AS(acc.finalize(), ProtocolError);
    CHECK_THROWS_AS(acc.set_shear(2.0), ProtocolError);
    auto other = frames[1];
    other.sweep_index = 8;
    CHECK_THROWS_AS(acc.place(other), ProtocolError);
    acc.place(frames[1]);
    acc.place(frames[2]);
    CHECK(acc.complete());
    const auto out = acc.finalize(3);
    CHECK(out.channel_id == 3);
    CHECK(out.sweep_index == 7);
    CHECK(acc.empty());
    CHECK(acc.canvas().pixels().max_value() == 0);
    CHECK_NOTHROW(acc.set_shear(2.0));
    CHECK(acc.canvas().height() == 8);

    SUBCASE("single-slice stack returns the frame") {
        const auto g1 = small_geometry(4, 4, 1);
        GlobalAccumulator one(g1, 2.0, Interpolation::linear);
        one.place(frames[0]);
        CHECK(one.finalize().pixels == frames[0].pixels);
    }
}

TEST_CASE("repeated sweeps of a static scene give identical projections") {
    SheetGeometry g = small_geometry(24, 20, 12, 0.5);
    const auto scene = default_scene(g);
    auto stack = render_stack(scene, g);
    GlobalAccumulator acc(g, native_shear_px(g), Interpolation::linear);
    for (const auto& f : stack) acc.place(f);
    const Image16 first = acc.finalize().pixels;
    for (auto& f : stack) f.sweep_index = 1;
    for (const auto& f : stack) acc.place(f);
    CHECK(acc.finalize().pixels == first);
    CHECK(first.max_value() > 0);
}

TEST_CASE("rolling updates") {
    std::mt19937_64 rng(8);

    SUBCASE("match global output after every complete sweep") {
        for (const auto interp : {Interpolation::nearest, Interpolation::linear}) {
            for (const double s : {0.0, 0.4, 1.0, 2.6, 5.0}) {
                const auto g = small_geometry(10, 7, 9);
                const auto stack = random_stack(rng, 10, 7, 9, 0, 0.5);
                const Image16 global = global_output(stack, g, s, interp);
                RollingAccumulator rolling(g, s, interp);
                for (int sweep = 0; sweep < 3; ++sweep) {
                    RollingAccumulator::Update last;
                    for (auto f : stack) {
                        f.sweep_index = sweep;
                        last = rolling.replace(f);
                        CHECK(rolling.contributors_consistent());
                    }
                    CHECK(last.emission.pixels == global);
                }
            }
        }
    }
    SUBCASE("support grows monotonically while the ring fills") {
        const auto g = small_geometry(10, 7, 9);
        const auto stack = random_stack(rng, 10, 7, 9, 0, 0.3);
        RollingAccumulator rolling(g, 1.3, Interpolation::linear);
        int previous = 0;
        for (const auto& f : stack) {
            const auto update = rolling.replace(f);
            const int support = nonzero(update.emission.pixels);
            CHECK(support >= previous);
            previous = support;
        }
        CHECK(rolling.live_slices() == 9);
    }
    SUBCASE("a moved point vanishes exactly when its slice is replaced") {
        // 3 x 4 frames, 6 slices, shear 2: slice k covers rows [2k, 2k + 4).
        const auto g = small_geometry(3, 4, 6);
        auto blank = [](int slice, std::int64_t sweep) {
            RawFrame f;
            f.pixels = Image16(3, 4);
            f.slice_index = slice;
            f.sweep_index = sweep;
            return f;
        };
        RollingAccumulator rolling(g, 2.0, Interpolation::nearest);
        for (int k = 0; k < 6; ++k) {
            auto f = blank(k, 0);
            if (k == 2) f.pixels.at(1, 1) = 900;  // canvas (1, 5)
            rolling.replace(f);
        }
        CHECK(rolling.canvas().pixels().at(1, 5) == 900);
        for (int k = 0; k < 6; ++k) {
            auto f = blank(k, 1);
            if (k == 4) f.pixels.at(2, 3) = 700;  // canvas (2, 11)
            const auto update = rolling.replace(f);
            const auto& px = update.emission.pixels;
            CHECK(px.at(1, 5) == (k < 2 ? 900 : 0));
            CHECK(px.at(2, 11) == (k >= 4 ? 700 : 0));
            if (k == 2) CHECK(update.touched == RowInterval{4, 8});
        }
    }
    SUBCASE("shear change re-places the ring") {
        const auto g = small_geometry(6, 5, 7);
        const auto stack = random_stack(rng, 6, 5, 7);
        RollingAccumulator rolling(g, 1.0, Interpolation::linear);
        for (const auto& f : stack) rolling.replace(f);
        rolling.set_shear(2.5);
        CHECK(rolling.canvas().pixels() == global_output(stack, g, 2.5, Interpolation::linear));
        CHECK(rolling.contributors_consistent());
    }
}

TEST_CASE("channel processor applies shear changes at the allowed points") {
    std::mt19937_64 rng(21);
    const auto g = small_geometry(6, 5, 4);
    const auto sweep0 = random_stack(rng, 6, 5, 4, 0);
    auto sweep1 = sweep0;
    for (auto& f : sweep1) f.sweep_index = 1;

    ChannelProcessor proc(0, g, 1.0, Interpolation::nearest, UpdateMode::global);
    LiveParameters params;
    params.shear_px = 2.0;
    params.mode = UpdateMode::global;
    std::optional<ChannelProcessor::Emission> out;
    for (std::size_t i = 0; i < sweep0.size(); ++i) {
        FrameEnvelope env{sweep0[i], 1'000'000, nullptr};
        if (i == 1) env.parameters = std::make_shared<const LiveParameters>(params);
        out = proc.process(env);
    }
    REQUIRE(out);
    // The sweep in flight finishes under the old shear; the next one uses the new one.
    CHECK(out->projection.shear_px == 1.0);
    CHECK(out->projection.pixels == reference_deskew(sweep0, g, 1.0));
    for (const auto& f : sweep1) out = proc.process(FrameEnvelope{f, 1'000'000, nullptr});
    REQUIRE(out);
    CHECK(out->projection.shear_px == 2.0);
    CHECK(out->projection.pixels == reference_deskew(sweep1, g, 2.0));
}

TEST_CASE("channel processor discards unfinished sweeps") {
    std::mt19937_64 rng(22);
    const auto g = small_geometry(6, 5, 4);
    auto sweep0 = random_stack(rng, 6, 5, 4, 0);
    auto sweep1 = random_stack(rng, 6, 5, 4, 1);
    ChannelProcessor proc(0, g, 1.0, Interpolation::nearest, UpdateMode::global);
    proc.process(FrameEnvelope{sweep0[0], 0, nullptr});
    proc.process(FrameEnvelope{sweep0[1], 0, nullptr});
    std::optional<ChannelProcessor::Emission> out;
    for (const auto& f : sweep1) out = proc.process(FrameEnvelope{f, 0, nullptr});
    CHECK(proc.incomplete_stacks() == 1);
    REQUIRE(out);
    CHECK(out->projection.sweep_index == 1);
    CHECK(out->projection.pixels == reference_deskew(sweep1, g, 1.0));
}

TEST_CASE("switching to global waits for the next sweep") {
    std::mt19937_64 rng(23);
    const auto g = small_geometry(6, 5, 4);
    ChannelProcessor proc(0, g, 1.0, Interpolation::nearest, UpdateMode::rolling);
    auto sweep0 = random_stack(rng, 6, 5, 4, 0);
    auto sweep1 = random_stack(rng, 6, 5, 4, 1);
    int emissions = 0;
    for (int i = 0; i < 2; ++i) emissions += proc.process(FrameEnvelope{sweep0[i], 0, nullptr}).has_value();
    CHECK(emissions == 2);
    LiveParameters params;
    params.shear_px = 1.0;
    params.mode = UpdateMode::global;
    auto change = std::make_shared<const LiveParameters>(params);
    for (int i = 2; i < 4; ++i) {
        CHECK_FALSE(proc.process(FrameEnvelope{sweep0[i], 0, i == 2 ? change : nullptr}).has_value());
    }
    std::optional<ChannelProcessor::Emission> out;
    for (const auto& f : sweep1) out = proc.process(FrameEnvelope{f, 0, nullptr});
    REQUIRE(out);
    CHECK(out->projection.mode == UpdateMode::global);
    CHECK(proc.incomplete_stacks() == 0);
}
