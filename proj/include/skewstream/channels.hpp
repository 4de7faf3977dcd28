#pragma once

#include <vector>

#include "skewstream/image.hpp"

namespace skewstream {

struct ChannelRegion {
    int channel_id = 0;
    int x0 = 0;
    int y0 = 0;
    int width = 0;
    int height = 0;

    friend bool operator==(const ChannelRegion&, const ChannelRegion&) = default;
};

/// Rectangles of the camera chip that hold the individual colour channels.
struct ChannelLayout {
    std::vector<ChannelRegion> regions;

    static ChannelLayout single(int frame_width, int frame_height);
    /// Equal side-by-side regions along the invariant axis.
    static ChannelLayout side_by_side(int frame_width, int frame_height, int channels);

    /// Throws ParameterError unless regions are non-empty, in bounds, disjoint
    /// and carry unique channel ids.
    void validate(int frame_width, int frame_height) const;

    std::vector<int> channel_ids() const;
};

/// One cropped copy per region, stamped with the region's channel id. The input is untouched.
std::vector<RawFrame> split_channels(const RawFrame& frame, const ChannelLayout& layout);

}  // namespace skewstream
