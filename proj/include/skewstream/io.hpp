#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "skewstream/geometry.hpp"
#include "skewstream/image.hpp"
#include "skewstream/source.hpp"

namespace skewstream {

// Raw stacks: little-endian 16-bit samples, row-major, frames concatenated.

void write_raw_stack(const std::filesystem::path& path, std::span<const Image16> frames);
void write_raw_image(const std::filesystem::path& path, const Image16& image);
std::vector<Image16> read_raw_stack(const std::filesystem::path& path, int width, int height);
/// Number of whole width x height frames in a raw file; MetadataError if the size is not a multiple.
std::size_t raw_frame_count(const std::filesystem::path& path, int width, int height);
Image16 read_raw_frame(const std::filesystem::path& path, int width, int height, std::size_t index);

// TIFF: uncompressed 16-bit single-sample grayscale, one image per page.

struct TiffPage {
    int width = 0;
    int height = 0;
    std::vector<std::uint64_t> strip_offsets;
    std::vector<std::uint64_t> strip_byte_counts;
};

/// Page directory of a TIFF file. Either byte order is accepted; anything other
/// than uncompressed 16-bit unsigned grayscale raises FormatError.
std::vector<TiffPage> read_tiff_directory(const std::filesystem::path& path);
Image16 read_tiff_page(const std::filesystem::path& path, const TiffPage& page);
std::vector<Image16> read_tiff_stack(const std::filesystem::path& path);
void write_tiff_stack(const std::filesystem::path& path, std::span<const Image16> frames);

// PNG (16-bit grayscale) for golden images and exported views.

void write_png16(const std::filesystem::path& path, const Image16& image);
void write_png8(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, int width, int height);
Image16 read_png16(const std::filesystem::path& path);

/// Partially specified metadata; command-line flags fill or override sidecar values.
struct MetadataOverrides {
    std::optional<double> alpha_deg;
    std::optional<double> scan_step_um;
    std::optional<double> pixel_pitch_um;
    std::optional<int> slice_count;
    std::optional<int> width;
    std::optional<int> height;
    std::optional<double> exposure_ms;
    std::optional<double> readout_ms;
};

void write_sidecar(const std::filesystem::path& path, const StackMetadata& meta);
/// Reads a sidecar; MetadataError naming the first missing field.
StackMetadata read_sidecar(const std::filesystem::path& path);

/// Sidecar paths tried for a stack: "<stem>.json", then "<name>.json"; for a directory "<dir>/metadata.json".
std::vector<std::filesystem::path> sidecar_candidates(const std::filesystem::path& stack_path);

/// Merges sidecar (if any) and overrides, overrides winning. Width/height default
/// to the image dimensions when the container records them (TIFF).
StackMetadata resolve_metadata(const std::filesystem::path& stack_path, const MetadataOverrides& overrides,
                               std::optional<std::pair<int, int>> container_dims = std::nullopt);

/// open_stack with metadata merged from the sidecar and overrides.
std::unique_ptr<FileSource> open_stack_with_overrides(const std::filesystem::path& path,
                                                      const MetadataOverrides& overrides,
                                                      FileSourceOptions options = {});

/// Version of the linked libpng.
std::string_view libpng_version() noexcept;

}  // namespace skewstream
