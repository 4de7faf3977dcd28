#include "skewstream/channels.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

namespace skewstream {

ChannelLayout ChannelLayout::single(int frame_width, int frame_height) {
    return {{ChannelRegion{0, 0, 0, frame_width, frame_height}}};
}

ChannelLayout ChannelLayout::side_by_side(int frame_width, int frame_height, int channels) {
    if (channels < 1 || frame_width % channels != 0) {
        throw ParameterError(fmt::format("cannot split width {} into {} equal channels", frame_width, channels));
    }
    ChannelLayout layout;
    const int w = frame_width / channels;
    for (int c = 0; c < channels; ++c) {
        layout.regions.push_back({c, c * w, 0, w, frame_height});
    }
    return layout;
}

void ChannelLayout::validate(int frame_width, int frame_height) const {
    if (regions.empty()) {
        throw ParameterError("channel layout needs at least one region");
    }
    std::set<int> ids;
    for (std::size_t i = 0; i < regions.size(); ++i) {
        const auto& r = regions[i];
        if (r.width < 1 || r.height < 1 || r.x0 < 0 || r.y0 < 0 || r.x0 + r.width > frame_width ||
            r.y0 + r.height > frame_height) {
            throw ParameterError(fmt::format("channel region {} ({},{} {}x{}) outside the {}x{} frame", r.channel_id,
                                             r.x0, r.y0, r.width, r.height, frame_width, frame_height));
        }
        if (!ids.insert(r.channel_id).second) {
            throw ParameterError(fmt::format("duplicate channel id {}", r.channel_id));
        }
        for (std::size_t k = 0; k < i; ++k) {
            const auto& o = regions[k];
            const bool disjoint = r.x0 >= o.x0 + o.width || o.x0 >= r.x0 + r.width || r.y0 >= o.y0 + o.height ||
                                  o.y0 >= r.y0 + r.height;
            if (!disjoint) {
                throw ParameterError(fmt::format("channel regions {} and {} overlap", o.channel_id, r.channel_id));
            }
        }
    }
}

std::vector<int> ChannelLayout::channel_ids() const {
    std::vector<int> ids;
    for (const auto& r : regions) ids.push_back(r.channel_id);
    return ids;
}

std::vector<RawFrame> split_channels(const RawFrame& frame, const ChannelLayout& layout) {
    layout.validate(frame.width(), frame.height());
    std::vector<RawFrame> out;
    out.reserve(layout.regions.size());
    for (const auto& r : layout.regions) {
        RawFrame sub;
        sub.pixels = Image16(r.width, r.height);
        for (int y = 0; y < r.height; ++y) {
            auto src = frame.pixels.row(r.y0 + y).subspan(static_cast<std::size_t>(r.x0), r.width);
            std::copy(src.begin(), src.end(), sub.pixels.row(y).begin());
        }
        sub.slice_index = frame.slice_index;
        sub.sweep_index = frame.sweep_index;
        sub.timestamp_ns = frame.timestamp_ns;
        sub.channel_id = r.channel_id;
        out.push_back(std::move(sub));
    }
    return out;
}

}  // namespace skewstream
