#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "skewstream/warp.hpp"

namespace skewstream {

enum class PixelFormat : std::uint8_t { gray16 = 0, gray8 = 1 };

std::string_view to_string(PixelFormat format) noexcept;
PixelFormat parse_pixel_format(std::string_view text);

inline constexpr std::size_t kPacketHeaderBytes = 64;
inline constexpr std::uint16_t kPacketVersion = 1;

/// Fixed 64-byte little-endian header in front of every frame payload.
///
///   off size field
///     0   4  magic "SKWS"
///     4   2  version (1)
///     6   1  pixel format (0 gray16, 1 gray8)
///     7   1  update mode (0 global, 1 rolling)
///     8   2  channel id
///    10   2  width
///    12   2  height
///    14   2  gray8 offset (intensity mapped to 0)
///    16   4  sweep index (low 32 bits)
///    20   4  slice index
///    24   4  view angle, hundredths of a degree (signed)
///    28   4  gray8 scale, f32 (byte = round((value - offset) * scale))
///    32  16  acquisition, processing, plotting, lag ms, f32 each
///    48   4  drops
///    52   4  payload bytes
///    56   4  row pitch um, f32
///    60   4  column pitch um, f32
///
/// gray8 maps the frame minimum to 0 and its maximum to 255. A constant frame
/// encodes as all zeros with offset = the constant and scale = 0.
struct PacketHeader {
    std::uint16_t version = kPacketVersion;
    PixelFormat pixel_format = PixelFormat::gray16;
    UpdateMode mode = UpdateMode::global;
    std::uint16_t channel_id = 0;
    std::uint16_t width = 0;
    std::uint16_t height = 0;
    std::uint16_t gray8_offset = 0;
    std::uint32_t sweep_index = 0;
    std::uint32_t slice_index = 0;
    std::int32_t view_angle_centideg = 0;
    float gray8_scale = 0.0f;
    StageTimings timings;
    std::uint32_t drops = 0;
    std::uint32_t payload_bytes = 0;
    float row_pitch_um = 0.0f;
    float column_pitch_um = 0.0f;
};

/// CapacityError when the image or channel id does not fit the header fields.
std::vector<std::uint8_t> encode_frame_packet(const DisplayImage& image, PixelFormat format = PixelFormat::gray16);

struct DecodedPacket {
    PacketHeader header;
    /// gray16 payload as stored; gray8 payload expanded back through offset and scale.
    Image16 pixels;
    /// Raw gray8 payload (empty for gray16).
    std::vector<std::uint8_t> gray8;
};

/// FormatError on a bad magic, unknown version or format, or inconsistent lengths.
DecodedPacket decode_frame_packet(std::span<const std::uint8_t> bytes);

}  // namespace skewstream
