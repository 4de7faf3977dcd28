#include "doctest.h"
#include "skewstream/channels.hpp"
#include "skewstream/error.hpp"
#include "test_support.hpp"

using namespace skewstream;

TEST_CASE("side-by-side layout") {
    const auto layout = ChannelLayout::side_by_side(12, 5, 3);
    REQUIRE(layout.regions.size() == 3);
    CHECK(layout.regions[1] == ChannelRegion{1, 4, 0, 4, 5});
    CHECK(layout.channel_ids() == std::vector<int>{0, 1, 2});
    CHECK_NOTHROW(layout.validate(12, 5));
    CHECK_THROWS_AS(ChannelLayout::side_by_side(10, 5, 3), ParameterError);
    CHECK_THROWS_AS(ChannelLayout::side_by_side(10, 5, 0), ParameterError);
}

TEST_CASE("layout validation") {
    CHECK_THROWS_AS(ChannelLayout{}.validate(4, 4), ParameterError);
    CHECK_THROWS_AS((ChannelLayout{{{0, 0, 0, 5, 4}}}.validate(4, 4)), ParameterError);
    CHECK_THROWS_AS((ChannelLayout{{{0, -1, 0, 2, 2}}}.validate(4, 4)), ParameterError);
    CHECK_THROWS_AS((ChannelLayout{{{0, 0, 0, 0, 2}}}.validate(4, 4)), ParameterError);
    CHECK_THROWS_AS((ChannelLayout{{{0, 0, 0, 2, 2}, {0, 2, 2, 2, 2}}}.validate(4, 4)), ParameterError);
    CHECK_THROWS_AS((ChannelLayout{{{0, 0, 0, 3, 3}, {1, 2, 2, 2, 2}}}.validate(4, 4)), ParameterError);
    CHECK_NOTHROW((ChannelLayout{{{5, 0, 0, 2, 2}, {9, 2, 2, 2, 2}}}.validate(4, 4)));
}

TEST_CASE("splitting crops each region") {
    RawFrame frame;
    frame.pixels = Image16(6, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 6; ++x) frame.pixels.at(x, y) = static_cast<std::uint16_t>(10 * y + x);
    frame.slice_index = 4;
    frame.sweep_index = 2;
    frame.timestamp_ns = 77;
    const Image16 original = frame.pixels;

    const ChannelLayout layout{{{3, 0, 0, 2, 3}, {8, 3, 1, 3, 2}}};
    const auto parts = split_channels(frame, layout);
    REQUIRE(parts.size() == 2);
    CHECK(parts[0].channel_id == 3);
    CHECK(parts[0].pixels == Image16(2, 3, {0, 1, 10, 11, 20, 21}));
    CHECK(parts[1].channel_id == 8);
    CHECK(parts[1].pixels == Image16(3, 2, {13, 14, 15, 23, 24, 25}));
    for (const auto& p : parts) {
        CHECK(p.slice_index == 4);
        CHECK(p.sweep_index == 2);
        CHECK(p.timestamp_ns == 77);
    }
    CHECK(frame.pixels == original);

    const auto whole = split_channels(frame, ChannelLayout::single(6, 3));
    REQUIRE(whole.size() == 1);
    CHECK(whole[0].pixels == original);
    CHECK_THROWS_AS(split_channels(frame, ChannelLayout::single(7, 3)), ParameterError);
}
