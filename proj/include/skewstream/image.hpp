#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "skewstream/error.hpp"

namespace skewstream {

/// Row-major 2-D pixel buffer. Column index runs along the invariant axis,
/// row index along the sheet-depth (raw frames) or shear axis (canvases).
template <typename T>
class Image2D {
public:
    using value_type = T;

    Image2D() = default;
    Image2D(int width, int height, T fill = T{})
        : width_(width), height_(height), pixels_(checked_size(width, height), fill) {}
    Image2D(int width, int height, std::vector<T> pixels)
        : width_(width), height_(height), pixels_(std::move(pixels)) {
        if (pixels_.size() != checked_size(width, height)) {
            throw ParameterError("pixel count does not match image dimensions");
        }
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return pixels_.size(); }
    bool empty() const noexcept { return pixels_.empty(); }

    T& at(int x, int y) noexcept { return pixels_[index(x, y)]; }
    const T& at(int x, int y) const noexcept { return pixels_[index(x, y)]; }

    std::span<T> row(int y) noexcept {
        return {pixels_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)};
    }
    std::span<const T> row(int y) const noexcept {
        return {pixels_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)};
    }

    std::span<T> pixels() noexcept { return pixels_; }
    std::span<const T> pixels() const noexcept { return pixels_; }
    std::vector<T>& storage() noexcept { return pixels_; }
    const std::vector<T>& storage() const noexcept { return pixels_; }

    void fill(T value) { std::fill(pixels_.begin(), pixels_.end(), value); }

    T max_value() const noexcept {
        return pixels_.empty() ? T{} : *std::max_element(pixels_.begin(), pixels_.end());
    }

    friend bool operator==(const Image2D&, const Image2D&) = default;

private:
    static std::size_t checked_size(int width, int height) {
        if (width < 0 || height < 0) {
            throw ParameterError("image dimensions must be non-negative");
        }
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> pixels_;
};

using Image16 = Image2D<std::uint16_t>;
using ImageF = Image2D<float>;

/// One camera exposure (or one channel of it after splitting).
struct RawFrame {
    Image16 pixels;
    int slice_index = 0;
    std::int64_t sweep_index = 0;
    int channel_id = 0;
    std::int64_t timestamp_ns = 0;

    int width() const noexcept { return pixels.width(); }
    int height() const noexcept { return pixels.height(); }
};

}  // namespace skewstream
