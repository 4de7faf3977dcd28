#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "skewstream/geometry.hpp"
#include "skewstream/image.hpp"
#include "skewstream/placement.hpp"

namespace skewstream {

enum class UpdateMode { global, rolling };

std::string_view to_string(UpdateMode mode) noexcept;
UpdateMode parse_update_mode(std::string_view text);

/// Max-projection buffer of size X x U. Rolling canvases also track which
/// slice index supplied each pixel (-1 where nothing has been placed).
class ProjectionCanvas {
public:
    ProjectionCanvas() = default;
    ProjectionCanvas(Extent extent, UpdateMode mode);

    int width() const noexcept { return pixels_.width(); }
    int height() const noexcept { return pixels_.height(); }
    Extent extent() const noexcept { return {width(), height()}; }
    UpdateMode mode() const noexcept { return mode_; }

    const Image16& pixels() const noexcept { return pixels_; }
    Image16& pixels() noexcept { return pixels_; }
    std::span<const std::int32_t> contributors() const noexcept { return contributors_; }
    std::span<std::int32_t> contributors() noexcept { return contributors_; }

    void clear();
    void clear_rows(RowInterval rows);

private:
    Image16 pixels_;
    std::vector<std::int32_t> contributors_;
    UpdateMode mode_ = UpdateMode::global;
};

/// Canvas rows written by a frame of frame_height rows placed at offset (unclipped).
RowInterval placement_rows(int frame_height, double offset, Interpolation interp);

/// Max-accumulates frame onto the canvas at slice_index * shear_px.
///
/// Linear interpolation splits a fractional offset across two adjacent rows;
/// nearest rounds the offset. Only rows inside `clip` are written. When
/// contributor >= 0 and the canvas tracks contributors, pixels that strictly
/// increase record it. Returns the rows written.
RowInterval deskew_place(ProjectionCanvas& canvas, const RawFrame& frame, double shear_px, Interpolation interp,
                         std::optional<RowInterval> clip = std::nullopt, int contributor = -1);

/// One emitted max projection (before warping).
struct ProjectionImage {
    Image16 pixels;
    int channel_id = 0;
    std::int64_t sweep_index = 0;
    int slice_index = 0;
    double shear_px = 0.0;
    UpdateMode mode = UpdateMode::global;
};

/// Global update: accumulates one sweep and emits once all N slices are in.
class GlobalAccumulator {
public:
    GlobalAccumulator(const SheetGeometry& geom, double shear_px, Interpolation interp);

    /// Places a frame of the current sweep. The first frame binds the sweep index;
    /// a frame from a different sweep raises ProtocolError.
    RowInterval place(const RawFrame& frame);

    bool complete() const noexcept { return placed_count_ == geom_.slice_count; }
    bool empty() const noexcept { return placed_count_ == 0; }
    int placed_count() const noexcept { return placed_count_; }
    std::optional<std::int64_t> sweep() const noexcept { return sweep_; }
    double shear_px() const noexcept { return shear_; }
    const ProjectionCanvas& canvas() const noexcept { return canvas_; }

    /// Emits the canvas and resets for the next sweep. ProtocolError unless complete().
    ProjectionImage finalize(int channel_id = 0);
    /// Drops the partial sweep.
    void reset();
    /// Changes the shear; only allowed while no sweep is in progress.
    void set_shear(double shear_px);

private:
    SheetGeometry geom_;
    double shear_;
    Interpolation interp_;
    ProjectionCanvas canvas_;
    std::vector<bool> placed_;
    int placed_count_ = 0;
    int last_slice_ = 0;
    std::optional<std::int64_t> sweep_;
};

/// Rolling update: keeps the N most recent slices and emits after every frame.
///
/// A new slice evicts the previous slice with the same index; only the rows
/// the two of them cover are recomputed from the ring.
class RollingAccumulator {
public:
    RollingAccumulator(const SheetGeometry& geom, double shear_px, Interpolation interp);

    struct Update {
        RowInterval touched;
        ProjectionImage emission;
    };

    Update replace(const RawFrame& frame, int channel_id = 0);
    /// Re-places the whole ring under the new shear (canvas is resized).
    void set_shear(double shear_px);

    const ProjectionCanvas& canvas() const noexcept { return canvas_; }
    double shear_px() const noexcept { return shear_; }
    int live_slices() const noexcept;
    bool is_live(int slice_index) const noexcept;
    /// Every nonzero pixel names a live slice as its contributor.
    bool contributors_consistent() const;

private:
    void rebuild_rows(RowInterval band);

    SheetGeometry geom_;
    double shear_;
    Interpolation interp_;
    ProjectionCanvas canvas_;
    std::vector<std::optional<RawFrame>> ring_;
};

}  // namespace skewstream
