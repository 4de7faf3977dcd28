#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "skewstream/error.hpp"
#include "skewstream/io.hpp"
#include "test_support.hpp"

using namespace skewstream;
using skewstream::testing::TempDir;

namespace {

Image16 random_image(std::mt19937_64& rng, int w, int h) {
    Image16 img(w, h);
    std::uniform_int_distribution<int> v(0, 65535);
    for (auto& p : img.pixels()) p = static_cast<std::uint16_t>(v(rng));
    return img;
}

// Minimal single-page TIFF writer used as an independent source of test files.
struct TiffBuilder {
    bool big_endian = false;
    int rows_per_strip = 0;  // 0 = one strip
    std::uint16_t bits = 16;
    std::uint16_t compression = 1;
    std::uint16_t sample_format = 1;

    std::vector<std::uint8_t> bytes;

    void put16(std::uint16_t v) {
        if (big_endian) {
            bytes.push_back(static_cast<std::uint8_t>(v >> 8));
            bytes.push_back(static_cast<std::uint8_t>(v));
        } else {
            bytes.push_back(static_cast<std::uint8_t>(v));
            bytes.push_back(static_cast<std::uint8_t>(v >> 8));
        }
    }
    void put32(std::uint32_t v) {
        if (big_endian) {
            put16(static_cast<std::uint16_t>(v >> 16));
            put16(static_cast<std::uint16_t>(v));
        } else {
            put16(static_cast<std::uint16_t>(v));
            put16(static_cast<std::uint16_t>(v >> 16));
        }
    }
    void tag(std::uint16_t id, std::uint16_t type, std::uint32_t count, std::uint32_t value) {
        put16(id);
        put16(type);
        put32(count);
        if (type == 3 && count == 1) {
            put16(static_cast<std::uint16_t>(value));
            put16(0);
        } else {
            put32(value);
        }
    }

    void write(const std::filesystem::path& path, const Image16& img) {
        const int rps = rows_per_strip > 0 ? rows_per_strip : img.height();
        const int strips = (img.height() + rps - 1) / rps;
        bytes.clear();
        bytes.push_back(big_endian ? 'M' : 'I');
        bytes.push_back(big_endian ? 'M' : 'I');
        put16(42);
        // Pixel data right after the header, then the strip tables, then the IFD.
        put32(0);  // patched below
        std::vector<std::uint32_t> offsets, counts;
        for (int s = 0; s < strips; ++s) {
            offsets.push_back(static_cast<std::uint32_t>(bytes.size()));
            const int y0 = s * rps, y1 = std::min(img.height(), y0 + rps);
            for (int y = y0; y < y1; ++y)
                for (int x = 0; x < img.width(); ++x) put16(img.at(x, y));
            counts.push_back(static_cast<std::uint32_t>((y1 - y0) * img.width() * 2));
        }
        const auto offsets_at = static_cast<std::uint32_t>(bytes.size());
        for (auto o : offsets) put32(o);
        const auto counts_at = static_cast<std::uint32_t>(bytes.size());
        for (auto c : counts) put32(c);
        const auto ifd = static_cast<std::uint32_t>(bytes.size());
        const auto n = static_cast<std::uint32_t>(strips);
        put16(10);
        tag(256, 3, 1, static_cast<std::uint32_t>(img.width()));
        tag(257, 3, 1, static_cast<std::uint32_t>(img.height()));
        tag(258, 3, 1, bits);
        tag(259, 3, 1, compression);
        tag(262, 3, 1, 1);
        tag(273, 4, n, n == 1 ? offsets[0] : offsets_at);
        tag(277, 3, 1, 1);
        tag(278, 3, 1, static_cast<std::uint32_t>(rps));
        tag(279, 4, n, n == 1 ? counts[0] : counts_at);
        tag(339, 3, 1, sample_format);
        put32(0);
        std::vector<std::uint8_t> tail(bytes.begin() + 8, bytes.end());
        bytes.resize(4);
        put32(ifd);
        bytes.insert(bytes.end(), tail.begin(), tail.end());
        std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                   static_cast<std::streamsize>(bytes.size()));
    }
};

}  // namespace

TEST_CASE("raw stacks") {
    TempDir dir;
    std::mt19937_64 rng(1);
    const std::vector<Image16> frames{random_image(rng, 5, 3), random_image(rng, 5, 3), random_image(rng, 5, 3)};
    write_raw_stack(dir / "s.raw", frames);
    CHECK(std::filesystem::file_size(dir / "s.raw") == 90);
    CHECK(raw_frame_count(dir / "s.raw", 5, 3) == 3);
    CHECK(read_raw_stack(dir / "s.raw", 5, 3) == frames);
    CHECK(read_raw_frame(dir / "s.raw", 5, 3, 2) == frames[2]);
    CHECK_THROWS_AS(read_raw_frame(dir / "s.raw", 5, 3, 3), IoError);
    CHECK_THROWS_AS(raw_frame_count(dir / "s.raw", 4, 4), MetadataError);

    // Little-endian on disk.
    Image16 one(1, 1);
    one.at(0, 0) = 0x1234;
    write_raw_image(dir / "one.raw", one);
    std::ifstream in(dir / "one.raw", std::ios::binary);
    char b[2];
    in.read(b, 2);
    CHECK(static_cast<unsigned char>(b[0]) == 0x34);
    CHECK(static_cast<unsigned char>(b[1]) == 0x12);
}

TEST_CASE("TIFF round trip") {
    TempDir dir;
    std::mt19937_64 rng(2);
    const std::vector<Image16> frames{random_image(rng, 7, 4), random_image(rng, 7, 4)};
    write_tiff_stack(dir / "s.tif", frames);
    const auto pages = read_tiff_directory(dir / "s.tif");
    REQUIRE(pages.size() == 2);
    CHECK(pages[1].width == 7);
    CHECK(pages[1].height == 4);
    CHECK(read_tiff_stack(dir / "s.tif") == frames);
    CHECK_THROWS_AS(write_tiff_stack(dir / "e.tif", {}), ParameterError);
}

TEST_CASE("TIFF files from another writer") {
    TempDir dir;
    std::mt19937_64 rng(3);
    const Image16 img = random_image(rng, 6, 5);
    TiffBuilder b;

    SUBCASE("little endian, one strip") {
        b.write(dir / "a.tif", img);
        CHECK(read_tiff_stack(dir / "a.tif") == std::vector{img});
    }
    SUBCASE("big endian, several strips") {
        b.big_endian = true;
        b.rows_per_strip = 2;
        b.write(dir / "a.tif", img);
        const auto pages = read_tiff_directory(dir / "a.tif");
        REQUIRE(pages.size() == 1);
        CHECK(pages[0].strip_offsets.size() == 3);
        CHECK(read_tiff_stack(dir / "a.tif") == std::vector{img});
    }
    SUBCASE("unsupported encodings are rejected") {
        b.compression = 5;
        b.write(dir / "lzw.tif", img);
        CHECK_THROWS_AS(read_tiff_directory(dir / "lzw.tif"), FormatError);
        b.compression = 1;
        b.bits = 8;
        b.write(dir / "b8.tif", img);
        CHECK_THROWS_AS(read_tiff_directory(dir / "b8.tif"), FormatError);
        b.bits = 16;
        b.sample_format = 3;
        b.write(dir / "f.tif", img);
        CHECK_THROWS_AS(read_tiff_directory(dir / "f.tif"), FormatError);
        std::ofstream(dir / "junk.tif") << "not a tiff at all";
        CHECK_THROWS_AS(read_tiff_directory(dir / "junk.tif"), FormatError);
    }
}

TEST_CASE("PNG") {
    TempDir dir;
    std::mt19937_64 rng(4);
    const Image16 img = random_image(rng, 9, 4);
    write_png16(dir / "a.png", img);
    CHECK(read_png16(dir / "a.png") == img);

    const std::vector<std::uint8_t> gray{0, 128, 255, 7, 8, 9};
    write_png8(dir / "b.png", gray, 3, 2);
    const Image16 back = read_png16(dir / "b.png");
    CHECK(back.width() == 3);
    CHECK(back.at(1, 0) == 128);
    CHECK(back.at(2, 1) == 9);
    CHECK_THROWS_AS(write_png8(dir / "c.png", gray, 4, 2), ParameterError);
    std::ofstream(dir / "bad.png") << "nope";
    CHECK_THROWS_AS(read_png16(dir / "bad.png"), FormatError);
}

TEST_CASE("sidecar metadata") {
    TempDir dir;
    SheetGeometry g;
    g.alpha_deg = 35.0;
    g.scan_step_um = 0.4;
    g.pixel_pitch_um = 0.2;
    g.slice_count = 10;
    g.frame_width_px = 12;
    g.frame_height_px = 9;
    const StackMetadata meta{g, CameraTiming{2.0, 3.0, TriggerMode::internal}, 10};

    SUBCASE("round trip") {
        write_sidecar(dir / "s.json", meta);
        const auto back = read_sidecar(dir / "s.json");
        CHECK(back.geometry == g);
        CHECK(back.timing.exposure_ms == 2.0);
        CHECK(back.timing.trigger_mode == TriggerMode::internal);
        CHECK(back.frame_count == 10);
    }
    SUBCASE("candidates") {
        const auto c = sidecar_candidates(dir / "stack.raw");
        REQUIRE(c.size() == 2);
        CHECK(c[0] == dir / "stack.json");
        CHECK(c[1] == dir / "stack.raw.json");
        CHECK(sidecar_candidates(dir.path()) == std::vector{dir / "metadata.json"});
    }
    SUBCASE("overrides win over the sidecar") {
        write_sidecar(dir / "stack.json", meta);
        MetadataOverrides o;
        o.alpha_deg = 45.0;
        o.exposure_ms = 0.5;
        const auto m = resolve_metadata(dir / "stack.raw", o);
        CHECK(m.geometry.alpha_deg == 45.0);
        CHECK(m.geometry.scan_step_um == 0.4);
        CHECK(m.timing.exposure_ms == 0.5);
        CHECK(m.timing.trigger_mode == TriggerMode::internal);
    }
    SUBCASE("missing fields are named") {
        auto j = nlohmann::json::parse(R"({"format":"raw16le","width":4,"height":4,
            "geometry":{"alpha_deg":30,"pixel_pitch_um":1,"slice_count":2}})");
        std::ofstream(dir / "stack.json") << j.dump();
        try {
            resolve_metadata(dir / "stack.raw", {});
            FAIL("expected MetadataError");
        } catch (const MetadataError& e) {
            CHECK(e.field() == "scan_step_um");
        }
        MetadataOverrides o;
        o.scan_step_um = 1.0;
        CHECK(resolve_metadata(dir / "stack.raw", o).geometry.scan_step_um == 1.0);
    }
    SUBCASE("no sidecar: overrides and container dimensions") {
        MetadataOverrides o;
        o.alpha_deg = 30.0;
        o.scan_step_um = 1.0;
        o.pixel_pitch_um = 1.0;
        o.slice_count = 3;
        try {
            resolve_metadata(dir / "x.tif", o);
            FAIL("expected MetadataError");
        } catch (const MetadataError& e) {
            CHECK(e.field() == "width");
        }
        const auto m = resolve_metadata(dir / "x.tif", o, std::pair{20, 30});
        CHECK(m.geometry.frame_width_px == 20);
        CHECK(m.geometry.frame_height_px == 30);
    }
    SUBCASE("malformed sidecars") {
        std::ofstream(dir / "a.json") << "{";
        CHECK_THROWS_AS(read_sidecar(dir / "a.json"), MetadataError);
        std::ofstream(dir / "b.json") << R"({"width":"wide"})";
        CHECK_THROWS_AS(read_sidecar(dir / "b.json"), MetadataError);
        auto bad = meta;
        bad.geometry.alpha_deg = 95.0;
        write_sidecar(dir / "c.json", bad);
        CHECK_THROWS_AS(read_sidecar(dir / "c.json"), MetadataError);
    }
}
