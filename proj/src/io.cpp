#include "skewstream/io.hpp"

#include <bit>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <png.h>

#include "skewstream/error.hpp"

namespace skewstream {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "raw stack I/O assumes a little-endian host");

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
    return in;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    return out;
}

void write_samples(std::ofstream& out, std::span<const std::uint16_t> samples) {
    out.write(reinterpret_cast<const char*>(samples.data()),
              static_cast<std::streamsize>(samples.size() * sizeof(std::uint16_t)));
}

}  // namespace

void write_raw_stack(const fs::path& path, std::span<const Image16> frames) {
    auto out = open_out(path);
    for (const auto& f : frames) write_samples(out, f.pixels());
    if (!out) throw IoError(fmt::format("write to {} failed", path.string()));
}

void write_raw_image(const fs::path& path, const Image16& image) { write_raw_stack(path, {&image, 1}); }

std::size_t raw_frame_count(const fs::path& path, int width, int height) {
    const auto bytes = fs::file_size(path);
    const auto frame_bytes = static_cast<std::uintmax_t>(width) * height * 2;
    if (frame_bytes == 0 || bytes % frame_bytes != 0) {
        throw MetadataError(fmt::format("{} holds {} bytes, not a whole number of {}x{} 16-bit frames",
                                        path.string(), bytes, width, height),
                            "width");
    }
    return static_cast<std::size_t>(bytes / frame_bytes);
}

Image16 read_raw_frame(const fs::path& path, int width, int height, std::size_t index) {
    auto in = open_in(path);
    Image16 img(width, height);
    const auto frame_bytes = static_cast<std::streamoff>(img.size() * 2);
    in.seekg(static_cast<std::streamoff>(index) * frame_bytes);
    in.read(reinterpret_cast<char*>(img.pixels().data()), frame_bytes);
    if (in.gcount() != frame_bytes) {
        throw IoError(fmt::format("short read of frame {} from {}", index, path.string()));
    }
    return img;
}

std::vector<Image16> read_raw_stack(const fs::path& path, int width, int height) {
    const std::size_t n = raw_frame_count(path, width, height);
    auto in = open_in(path);
    std::vector<Image16> frames;
    frames.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Image16 img(width, height);
        in.read(reinterpret_cast<char*>(img.pixels().data()), static_cast<std::streamsize>(img.size() * 2));
        if (!in) throw IoError(fmt::format("short read from {}", path.string()));
        frames.push_back(std::move(img));
    }
    return frames;
}

// --- TIFF -----------------------------------------------------------------

namespace {

constexpr std::uint16_t kTagWidth = 256;
constexpr std::uint16_t kTagHeight = 257;
constexpr std::uint16_t kTagBitsPerSample = 258;
constexpr std::uint16_t kTagCompression = 259;
constexpr std::uint16_t kTagPhotometric = 262;
constexpr std::uint16_t kTagStripOffsets = 273;
constexpr std::uint16_t kTagSamplesPerPixel = 277;
constexpr std::uint16_t kTagRowsPerStrip = 278;
constexpr std::uint16_t kTagStripByteCounts = 279;
constexpr std::uint16_t kTagSampleFormat = 339;

class TiffStream {
public:
    explicit TiffStream(const fs::path& path) : path_(path), in_(open_in(path)) {
        char order[2];
        read_bytes(0, order, 2);
        if (order[0] == 'I' && order[1] == 'I') {
            big_endian_ = false;
        } else if (order[0] == 'M' && order[1] == 'M') {
            big_endian_ = true;
        } else {
            fail("missing TIFF byte-order mark");
        }
        const auto magic = u16(2);
        if (magic == 43) fail("BigTIFF is not supported");
        if (magic != 42) fail("bad TIFF magic number");
    }

    bool big_endian() const noexcept { return big_endian_; }

    std::uint16_t u16(std::uint64_t offset) {
        unsigned char b[2];
        read_bytes(offset, b, 2);
        return big_endian_ ? static_cast<std::uint16_t>(b[0] << 8 | b[1]) : static_cast<std::uint16_t>(b[1] << 8 | b[0]);
    }
    std::uint32_t u32(std::uint64_t offset) {
        unsigned char b[4];
        read_bytes(offset, b, 4);
        if (big_endian_) return std::uint32_t{b[0]} << 24 | std::uint32_t{b[1]} << 16 | std::uint32_t{b[2]} << 8 | b[3];
        return std::uint32_t{b[3]} << 24 | std::uint32_t{b[2]} << 16 | std::uint32_t{b[1]} << 8 | b[0];
    }

    void read_bytes(std::uint64_t offset, void* dst, std::size_t n) {
        in_.clear();
        in_.seekg(static_cast<std::streamoff>(offset));
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated file");
    }

    [[noreturn]] void fail(const std::string& why) const {
        throw FormatError(fmt::format("{}: {}", path_.string(), why));
    }

private:
    fs::path path_;
    std::ifstream in_;
    bool big_endian_ = false;
};

struct IfdEntry {
    std::uint16_t tag = 0;
    std::uint16_t type = 0;
    std::uint32_t count = 0;
    std::uint64_t value_offset = 0;  // where the values live
};

std::vector<std::uint64_t> entry_values(TiffStream& s, const IfdEntry& e) {
    std::size_t size = 0;
    if (e.type == 3) size = 2;
    else if (e.type == 4) size = 4;
    else s.fail(fmt::format("tag {} has unsupported type {}", e.tag, e.type));
    std::uint64_t base = e.value_offset;
    if (size * e.count > 4) base = s.u32(e.value_offset);
    std::vector<std::uint64_t> out;
    out.reserve(e.count);
    for (std::uint32_t i = 0; i < e.count; ++i) {
        out.push_back(size == 2 ? s.u16(base + 2 * i) : s.u32(base + 4 * i));
    }
    return out;
}

}  // namespace

std::vector<TiffPage> read_tiff_directory(const fs::path& path) {
    TiffStream s(path);
    std::vector<TiffPage> pages;
    std::uint64_t ifd = s.u32(4);
    while (ifd != 0) {
        if (pages.size() > 1'000'000) s.fail("IFD chain does not terminate");
        const std::uint16_t n = s.u16(ifd);
        TiffPage page;
        int bits = -1, samples = 1, compression = 1, sample_format = 1, photometric = 1;
        for (std::uint16_t i = 0; i < n; ++i) {
            const std::uint64_t at = ifd + 2 + 12 * std::uint64_t{i};
            IfdEntry e{s.u16(at), s.u16(at + 2), s.u32(at + 4), at + 8};
            switch (e.tag) {
                case kTagWidth: page.width = static_cast<int>(entry_values(s, e).at(0)); break;
                case kTagHeight: page.height = static_cast<int>(entry_values(s, e).at(0)); break;
                case kTagBitsPerSample: bits = static_cast<int>(entry_values(s, e).at(0)); break;
                case kTagCompression: compression = static_cast<int>(entry_values(s, e).at(0)); break;
                case kTagPhotometric: photometric = static_cast<int>(entry_values(s, e).at(0)); break;
                case kTagSamplesPerPixel: samples = static_cast<int>(entry_values(s, e).at(0)); break;
                case kTagSampleFormat: sample_format = static_cast<int>(entry_values(s, e).at(0)); break;
                case kTagStripOffsets: page.strip_offsets = entry_values(s, e); break;
                case kTagStripByteCounts: page.strip_byte_counts = entry_values(s, e); break;
                default: break;
            }
        }
        if (bits != 16) s.fail(fmt::format("bit depth {} is not 16", bits));
        if (samples != 1) s.fail(fmt::format("{} samples per pixel, expected grayscale", samples));
        if (compression != 1) s.fail(fmt::format("compression {} is not supported", compression));
        if (sample_format != 1) s.fail("only unsigned integer samples are supported");
        if (photometric != 1 && photometric != 0) s.fail("photometric interpretation is not grayscale");
        if (page.width < 1 || page.height < 1) s.fail("missing image dimensions");
        if (page.strip_offsets.empty() || page.strip_offsets.size() != page.strip_byte_counts.size()) {
            s.fail("inconsistent strip tables");
        }
        pages.push_back(std::move(page));
        ifd = s.u32(ifd + 2 + 12 * std::uint64_t{n});
    }
    if (pages.empty()) s.fail("no image directories");
    return pages;
}

Image16 read_tiff_page(const fs::path& path, const TiffPage& page) {
    TiffStream s(path);
    Image16 img(page.width, page.height);
    auto* dst = reinterpret_cast<unsigned char*>(img.pixels().data());
    const std::size_t needed = img.size() * 2;
    std::size_t filled = 0;
    for (std::size_t i = 0; i < page.strip_offsets.size() && filled < needed; ++i) {
        const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(page.strip_byte_counts[i], needed - filled));
        s.read_bytes(page.strip_offsets[i], dst + filled, n);
        filled += n;
    }
    if (filled != needed) s.fail("strip data shorter than the image");
    if (s.big_endian()) {
        for (auto& v : img.pixels()) v = static_cast<std::uint16_t>((v >> 8) | (v << 8));
    }
    return img;
}

std::vector<Image16> read_tiff_stack(const fs::path& path) {
    std::vector<Image16> out;
    for (const auto& page : read_tiff_directory(path)) out.push_back(read_tiff_page(path, page));
    return out;
}

void write_tiff_stack(const fs::path& path, std::span<const Image16> frames) {
    if (frames.empty()) throw ParameterError("cannot write an empty TIFF stack");
    auto out = open_out(path);
    auto put16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
    auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };

    out.write("II", 2);
    put16(42);
    put32(8);  // first page's IFD follows its pixel data; patched below
    std::uint64_t pos = 8;
    std::vector<std::uint64_t> ifd_link_positions{4};
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto& f = frames[i];
        const std::uint64_t data_offset = pos;
        const std::uint64_t data_bytes = f.size() * 2;
        if (data_offset + data_bytes > 0xFFFFFFF0ull) throw CapacityError("TIFF stack exceeds 4 GB");
        write_samples(out, f.pixels());
        pos += data_bytes;
        const std::uint64_t ifd_offset = pos;
        // Patch the previous link to point at this IFD.
        const auto link = ifd_link_positions.back();
        out.seekp(static_cast<std::streamoff>(link));
        put32(static_cast<std::uint32_t>(ifd_offset));
        out.seekp(static_cast<std::streamoff>(ifd_offset));

        struct Tag { std::uint16_t tag, type; std::uint32_t count, value; };
        const Tag tags[] = {
            {kTagWidth, 4, 1, static_cast<std::uint32_t>(f.width())},
            {kTagHeight, 4, 1, static_cast<std::uint32_t>(f.height())},
            {kTagBitsPerSample, 3, 1, 16},
            {kTagCompression, 3, 1, 1},
            {kTagPhotometric, 3, 1, 1},
            {kTagStripOffsets, 4, 1, static_cast<std::uint32_t>(data_offset)},
            {kTagSamplesPerPixel, 3, 1, 1},
            {kTagRowsPerStrip, 4, 1, static_cast<std::uint32_t>(f.height())},
            {kTagStripByteCounts, 4, 1, static_cast<std::uint32_t>(data_bytes)},
            {kTagSampleFormat, 3, 1, 1},
        };
        put16(static_cast<std::uint16_t>(std::size(tags)));
        for (const auto& t : tags) {
            put16(t.tag);
            put16(t.type);
            put32(t.count);
            if (t.type == 3) {
                put16(static_cast<std::uint16_t>(t.value));
                put16(0);
            } else {
                put32(t.value);
            }
        }
        const std::uint64_t next_link = ifd_offset + 2 + 12 * std::size(tags);
        put32(0);
        ifd_link_positions.push_back(next_link);
        pos = next_link + 4;
    }
    if (!out) throw IoError(fmt::format("write to {} failed", path.string()));
}

// --- PNG --------------------------------------------------------------------

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const fs::path& path, int width, int height, int bit_depth, const std::vector<png_bytep>& rows) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError(fmt::format("cannot write {}", path.string()));
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(fmt::format("libpng failed writing {}", path.string()));
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png16(const fs::path& path, const Image16& image) {
    if (image.empty()) throw ParameterError("cannot write an empty PNG");
    // PNG stores 16-bit samples big-endian.
    std::vector<unsigned char> bytes(image.size() * 2);
    for (std::size_t i = 0; i < image.size(); ++i) {
        const auto v = image.pixels()[i];
        bytes[2 * i] = static_cast<unsigned char>(v >> 8);
        bytes[2 * i + 1] = static_cast<unsigned char>(v & 0xFF);
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(image.height()));
    for (int y = 0; y < image.height(); ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * image.width() * 2;
    write_png(path, image.width(), image.height(), 16, rows);
}

void write_png8(const fs::path& path, std::span<const std::uint8_t> pixels, int width, int height) {
    if (pixels.size() != static_cast<std::size_t>(width) * height || pixels.empty()) {
        throw ParameterError("8-bit PNG buffer does not match its dimensions");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        rows[y] = const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * width);
    }
    write_png(path, width, height, 8, rows);
}

std::string_view libpng_version() noexcept { return PNG_LIBPNG_VER_STRING; }

Image16 read_png16(const fs::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError(fmt::format("cannot open {}", path.string()));
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialisation failed");
    }
    Image16 img;
    std::vector<unsigned char> bytes;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(fmt::format("{} is not a readable PNG", path.string()));
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const auto width = png_get_image_width(png, info);
    const auto height = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color != PNG_COLOR_TYPE_GRAY || (depth != 16 && depth != 8)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(fmt::format("{} is not 8/16-bit grayscale", path.string()));
    }
    const std::size_t bpp = depth / 8;
    bytes.resize(static_cast<std::size_t>(width) * height * bpp);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * width * bpp;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    img = Image16(static_cast<int>(width), static_cast<int>(height));
    for (std::size_t i = 0; i < img.size(); ++i) {
        img.pixels()[i] = bpp == 2 ? static_cast<std::uint16_t>(bytes[2 * i] << 8 | bytes[2 * i + 1]) : bytes[i];
    }
    return img;
}

// --- sidecar ----------------------------------------------------------------

void write_sidecar(const fs::path& path, const StackMetadata& meta) {
    nlohmann::json j{
        {"format", "raw16le"},
        {"width", meta.geometry.frame_width_px},
        {"height", meta.geometry.frame_height_px},
        {"geometry",
         {{"alpha_deg", meta.geometry.alpha_deg},
          {"scan_step_um", meta.geometry.scan_step_um},
          {"pixel_pitch_um", meta.geometry.pixel_pitch_um},
          {"slice_count", meta.geometry.slice_count}}},
        {"timing",
         {{"exposure_ms", meta.timing.exposure_ms},
          {"readout_ms", meta.timing.readout_ms},
          {"trigger_mode", to_string(meta.timing.trigger_mode)}}},
    };
    if (meta.frame_count) j["frame_count"] = *meta.frame_count;
    std::ofstream out(path);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out << j.dump(2) << '\n';
}

namespace {

nlohmann::json load_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw MetadataError(fmt::format("{} is not valid JSON: {}", path.string(), e.what()));
    }
}

template <typename T>
std::optional<T> optional_field(const nlohmann::json& j, const char* section, const char* key) {
    const nlohmann::json* node = &j;
    if (section) {
        if (!j.contains(section)) return std::nullopt;
        node = &j[section];
    }
    if (!node->contains(key) || (*node)[key].is_null()) return std::nullopt;
    try {
        return (*node)[key].get<T>();
    } catch (const nlohmann::json::exception&) {
        throw MetadataError(fmt::format("metadata field '{}' has the wrong type", key), key);
    }
}

MetadataOverrides overrides_from_json(const nlohmann::json& j) {
    MetadataOverrides m;
    m.alpha_deg = optional_field<double>(j, "geometry", "alpha_deg");
    m.scan_step_um = optional_field<double>(j, "geometry", "scan_step_um");
    m.pixel_pitch_um = optional_field<double>(j, "geometry", "pixel_pitch_um");
    m.slice_count = optional_field<int>(j, "geometry", "slice_count");
    m.width = optional_field<int>(j, nullptr, "width");
    m.height = optional_field<int>(j, nullptr, "height");
    m.exposure_ms = optional_field<double>(j, "timing", "exposure_ms");
    m.readout_ms = optional_field<double>(j, "timing", "readout_ms");
    return m;
}

template <typename T>
T require(const std::optional<T>& v, const char* field, const std::string& context) {
    if (!v) throw MetadataError(fmt::format("missing stack metadata field '{}' ({})", field, context), field);
    return *v;
}

StackMetadata complete_metadata(const MetadataOverrides& m, const std::string& context) {
    StackMetadata meta;
    meta.geometry.alpha_deg = require(m.alpha_deg, "alpha_deg", context);
    meta.geometry.scan_step_um = require(m.scan_step_um, "scan_step_um", context);
    meta.geometry.pixel_pitch_um = require(m.pixel_pitch_um, "pixel_pitch_um", context);
    meta.geometry.slice_count = require(m.slice_count, "slice_count", context);
    meta.geometry.frame_width_px = require(m.width, "width", context);
    meta.geometry.frame_height_px = require(m.height, "height", context);
    if (m.exposure_ms) meta.timing.exposure_ms = *m.exposure_ms;
    if (m.readout_ms) meta.timing.readout_ms = *m.readout_ms;
    try {
        meta.geometry.validate();
        meta.timing.validate();
    } catch (const ParameterError& e) {
        throw MetadataError(fmt::format("invalid stack metadata: {}", e.what()));
    }
    return meta;
}

}  // namespace

StackMetadata read_sidecar(const fs::path& path) {
    const auto j = load_json(path);
    StackMetadata meta = complete_metadata(overrides_from_json(j), path.string());
    if (auto mode = optional_field<std::string>(j, "timing", "trigger_mode")) {
        meta.timing.trigger_mode = parse_trigger_mode(*mode);
    }
    meta.frame_count = optional_field<std::size_t>(j, nullptr, "frame_count");
    return meta;
}

std::vector<fs::path> sidecar_candidates(const fs::path& stack_path) {
    if (fs::is_directory(stack_path)) return {stack_path / "metadata.json"};
    fs::path stem = stack_path;
    stem.replace_extension(".json");
    fs::path appended = stack_path;
    appended += ".json";
    return {stem, appended};
}

StackMetadata resolve_metadata(const fs::path& stack_path, const MetadataOverrides& overrides,
                               std::optional<std::pair<int, int>> container_dims) {
    MetadataOverrides merged;
    std::optional<std::size_t> frame_count;
    std::optional<TriggerMode> trigger;
    std::string context = "no sidecar found";
    for (const auto& candidate : sidecar_candidates(stack_path)) {
        if (fs::exists(candidate)) {
            const auto j = load_json(candidate);
            merged = overrides_from_json(j);
            frame_count = optional_field<std::size_t>(j, nullptr, "frame_count");
            if (auto mode = optional_field<std::string>(j, "timing", "trigger_mode")) {
                trigger = parse_trigger_mode(*mode);
            }
            context = fmt::format("sidecar {}", candidate.string());
            break;
        }
    }
    if (container_dims) {
        if (!merged.width) merged.width = container_dims->first;
        if (!merged.height) merged.height = container_dims->second;
    }
    auto take = [](auto& dst, const auto& src) {
        if (src) dst = src;
    };
    take(merged.alpha_deg, overrides.alpha_deg);
    take(merged.scan_step_um, overrides.scan_step_um);
    take(merged.pixel_pitch_um, overrides.pixel_pitch_um);
    take(merged.slice_count, overrides.slice_count);
    take(merged.width, overrides.width);
    take(merged.height, overrides.height);
    take(merged.exposure_ms, overrides.exposure_ms);
    take(merged.readout_ms, overrides.readout_ms);

    StackMetadata meta = complete_metadata(merged, context);
    if (trigger) meta.timing.trigger_mode = *trigger;
    meta.frame_count = frame_count;
    return meta;
}

}  // namespace skewstream
