#include "skewstream/packet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include <fmt/format.h>

#include "skewstream/error.hpp"

namespace skewstream {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'W', 'S'};

class Writer {
public:
    explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        std::uint8_t bytes[sizeof(T)];
        std::memcpy(bytes, &value, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
        out_.insert(out_.end(), bytes, bytes + sizeof(T));
    }

private:
    std::vector<std::uint8_t>& out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    template <typename T>
    T get() {
        if (pos_ + sizeof(T) > in_.size()) throw FormatError("frame packet truncated");
        std::uint8_t bytes[sizeof(T)];
        std::memcpy(bytes, in_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
        pos_ += sizeof(T);
        T value;
        std::memcpy(&value, bytes, sizeof(T));
        return value;
    }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

std::uint16_t checked_u16(long long value, const char* what) {
    if (value < 0 || value > 0xFFFF) {
        throw CapacityError(fmt::format("{} {} does not fit a frame packet header", what, value));
    }
    return static_cast<std::uint16_t>(value);
}

}  // namespace

std::string_view to_string(PixelFormat format) noexcept {
    return format == PixelFormat::gray8 ? "gray8" : "gray16";
}

PixelFormat parse_pixel_format(std::string_view text) {
    if (text == "gray16") return PixelFormat::gray16;
    if (text == "gray8") return PixelFormat::gray8;
    throw ParameterError(fmt::format("unknown pixel format '{}'", text));
}

std::vector<std::uint8_t> encode_frame_packet(const DisplayImage& image, PixelFormat format) {
    PacketHeader h;
    h.pixel_format = format;
    h.mode = image.mode;
    h.channel_id = checked_u16(image.channel_id, "channel id");
    h.width = checked_u16(image.pixels.width(), "width");
    h.height = checked_u16(image.pixels.height(), "height");
    h.sweep_index = static_cast<std::uint32_t>(image.sweep_index);
    h.slice_index = static_cast<std::uint32_t>(image.slice_index);
    h.view_angle_centideg = static_cast<std::int32_t>(std::lround(image.view_angle_deg * 100.0));
    h.timings = image.timings;
    h.drops = image.drops;
    h.row_pitch_um = static_cast<float>(image.row_pitch_um);
    h.column_pitch_um = static_cast<float>(image.column_pitch_um);

    const auto pixels = image.pixels.pixels();
    std::uint16_t lo = 0, hi = 0;
    if (format == PixelFormat::gray8 && !pixels.empty()) {
        const auto [mn, mx] = std::minmax_element(pixels.begin(), pixels.end());
        lo = *mn;
        hi = *mx;
        h.gray8_offset = lo;
        h.gray8_scale = hi > lo ? 255.0f / static_cast<float>(hi - lo) : 0.0f;
    }
    const std::size_t bpp = format == PixelFormat::gray16 ? 2 : 1;
    const std::size_t payload = pixels.size() * bpp;
    h.payload_bytes = static_cast<std::uint32_t>(payload);

    std::vector<std::uint8_t> out;
    out.reserve(kPacketHeaderBytes + payload);
    out.insert(out.end(), kMagic, kMagic + 4);
    Writer w(out);
    w.put(h.version);
    w.put(static_cast<std::uint8_t>(h.pixel_format));
    w.put(static_cast<std::uint8_t>(h.mode == UpdateMode::rolling ? 1 : 0));
    w.put(h.channel_id);
    w.put(h.width);
    w.put(h.height);
    w.put(h.gray8_offset);
    w.put(h.sweep_index);
    w.put(h.slice_index);
    w.put(h.view_angle_centideg);
    w.put(h.gray8_scale);
    w.put(static_cast<float>(h.timings.acquisition_ms));
    w.put(static_cast<float>(h.timings.processing_ms));
    w.put(static_cast<float>(h.timings.plotting_ms));
    w.put(static_cast<float>(h.timings.lag_ms));
    w.put(h.drops);
    w.put(h.payload_bytes);
    w.put(h.row_pitch_um);
    w.put(h.column_pitch_um);

    if (format == PixelFormat::gray16) {
        for (const auto v : pixels) w.put(v);
    } else {
        for (const auto v : pixels) {
            const float scaled = std::round(static_cast<float>(v - lo) * h.gray8_scale);
            out.push_back(static_cast<std::uint8_t>(std::clamp(scaled, 0.0f, 255.0f)));
        }
    }
    return out;
}

DecodedPacket decode_frame_packet(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kPacketHeaderBytes) throw FormatError("frame packet shorter than its header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("frame packet has a bad magic");
    Reader r(bytes.subspan(4));
    DecodedPacket d;
    PacketHeader& h = d.header;
    h.version = r.get<std::uint16_t>();
    if (h.version != kPacketVersion) throw FormatError(fmt::format("unsupported packet version {}", h.version));
    const auto format = r.get<std::uint8_t>();
    if (format > 1) throw FormatError(fmt::format("unknown pixel format {}", format));
    h.pixel_format = static_cast<PixelFormat>(format);
    const auto mode = r.get<std::uint8_t>();
    if (mode > 1) throw FormatError(fmt::format("unknown update mode {}", mode));
    h.mode = mode == 1 ? UpdateMode::rolling : UpdateMode::global;
    h.channel_id = r.get<std::uint16_t>();
    h.width = r.get<std::uint16_t>();
    h.height = r.get<std::uint16_t>();
    h.gray8_offset = r.get<std::uint16_t>();
    h.sweep_index = r.get<std::uint32_t>();
    h.slice_index = r.get<std::uint32_t>();
    h.view_angle_centideg = r.get<std::int32_t>();
    h.gray8_scale = r.get<float>();
    h.timings.acquisition_ms = r.get<float>();
    h.timings.processing_ms = r.get<float>();
    h.timings.plotting_ms = r.get<float>();
    h.timings.lag_ms = r.get<float>();
    h.drops = r.get<std::uint32_t>();
    h.payload_bytes = r.get<std::uint32_t>();
    h.row_pitch_um = r.get<float>();
    h.column_pitch_um = r.get<float>();

    const std::size_t count = static_cast<std::size_t>(h.width) * h.height;
    const std::size_t bpp = h.pixel_format == PixelFormat::gray16 ? 2 : 1;
    if (h.payload_bytes != count * bpp || bytes.size() != kPacketHeaderBytes + h.payload_bytes) {
        throw FormatError("frame packet payload length does not match its dimensions");
    }
    const auto payload = bytes.subspan(kPacketHeaderBytes);
    d.pixels = Image16(h.width, h.height);
    auto px = d.pixels.pixels();
    if (h.pixel_format == PixelFormat::gray16) {
        for (std::size_t i = 0; i < count; ++i) {
            px[i] = static_cast<std::uint16_t>(payload[2 * i] | payload[2 * i + 1] << 8);
        }
    } else {
        d.gray8.assign(payload.begin(), payload.end());
        for (std::size_t i = 0; i < count; ++i) {
            const double v = h.gray8_scale > 0.0f ? h.gray8_offset + payload[i] / static_cast<double>(h.gray8_scale)
                                                  : h.gray8_offset;
            px[i] = static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, 65535.0));
        }
    }
    return d;
}

}  // namespace skewstream
