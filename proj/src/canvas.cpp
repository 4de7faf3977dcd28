#include "skewstream/canvas.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "skewstream/error.hpp"

namespace skewstream {

ProjectionCanvas::ProjectionCanvas(Extent extent, UpdateMode mode)
    : pixels_(extent.width_px, extent.height_px), mode_(mode) {
    if (mode == UpdateMode::rolling) {
        contributors_.assign(pixels_.size(), -1);
    }
}

void ProjectionCanvas::clear() {
    pixels_.fill(0);
    std::fill(contributors_.begin(), contributors_.end(), -1);
}

void ProjectionCanvas::clear_rows(RowInterval rows) {
    rows = rows.intersected({0, height()});
    if (rows.empty()) return;
    const auto first = static_cast<std::size_t>(rows.begin) * width();
    const auto last = static_cast<std::size_t>(rows.end) * width();
    std::fill(pixels_.storage().begin() + first, pixels_.storage().begin() + last, 0);
    if (!contributors_.empty()) {
        std::fill(contributors_.begin() + first, contributors_.begin() + last, -1);
    }
}

RowInterval placement_rows(int frame_height, double offset, Interpolation interp) {
    if (interp == Interpolation::nearest) {
        const auto base = static_cast<int>(std::llround(offset));
        return {base, base + frame_height};
    }
    const SplitOffset split = split_offset(offset);
    const int base = static_cast<int>(split.base);
    return {base, base + frame_height + (split.frac > 0.0 ? 1 : 0)};
}

RowInterval deskew_place(ProjectionCanvas& canvas, const RawFrame& frame, double shear_px, Interpolation interp,
                         std::optional<RowInterval> clip, int contributor) {
    if (frame.width() != canvas.width()) {
        throw ParameterError(
            fmt::format("frame width {} does not match canvas width {}", frame.width(), canvas.width()));
    }
    if (frame.slice_index < 0) {
        throw ParameterError(fmt::format("negative slice index {}", frame.slice_index));
    }
    const double offset = frame.slice_index * shear_px;
    const RowInterval rows = placement_rows(frame.height(), offset, interp);
    if (rows.begin < 0 || rows.end > canvas.height()) {
        throw CapacityError(fmt::format("slice {} covers rows [{}, {}) outside a canvas of {} rows",
                                        frame.slice_index, rows.begin, rows.end, canvas.height()));
    }
    const RowInterval target = clip ? rows.intersected(*clip) : rows;
    if (target.empty()) {
        return {};
    }

    const int width = canvas.width();
    const int height = frame.height();
    const bool track = contributor >= 0 && !canvas.contributors().empty();
    auto& dst_img = canvas.pixels();
    auto contributors = canvas.contributors();

    auto store = [&](int u, int x, std::uint16_t v) {
        auto& dst = dst_img.at(x, u);
        if (v > dst) {
            dst = v;
            if (track) contributors[static_cast<std::size_t>(u) * width + x] = contributor;
        }
    };

    const SplitOffset split = split_offset(offset);
    if (interp == Interpolation::nearest || split.frac == 0.0) {
        for (int u = target.begin; u < target.end; ++u) {
            const auto src = frame.pixels.row(u - rows.begin);
            if (!track) {
                auto dst = dst_img.row(u);
                for (int x = 0; x < width; ++x) dst[x] = std::max(dst[x], src[x]);
            } else {
                for (int x = 0; x < width; ++x) store(u, x, src[x]);
            }
        }
        return target;
    }

    // Canvas row u blends frame rows r = u - base (weight 1-f) and r - 1 (weight f).
    const auto w0 = static_cast<float>(1.0 - split.frac);
    const auto w1 = static_cast<float>(split.frac);
    for (int u = target.begin; u < target.end; ++u) {
        const int r = u - rows.begin;
        const bool has0 = r < height;
        const bool has1 = r >= 1;
        const std::uint16_t* a = has0 ? frame.pixels.row(r).data() : nullptr;
        const std::uint16_t* b = has1 ? frame.pixels.row(r - 1).data() : nullptr;
        auto dst = dst_img.row(u);
        for (int x = 0; x < width; ++x) {
            float v = 0.5f;
            if (a) v += w0 * a[x];
            if (b) v += w1 * b[x];
            const auto q = static_cast<std::uint16_t>(std::min(v, 65535.0f));
            if (!track) {
                dst[x] = std::max(dst[x], q);
            } else {
                store(u, x, q);
            }
        }
    }
    return target;
}

GlobalAccumulator::GlobalAccumulator(const SheetGeometry& geom, double shear_px, Interpolation interp)
    : geom_(geom), shear_(shear_px), interp_(interp),
      canvas_(output_extent(geom, shear_px), UpdateMode::global),
      placed_(static_cast<std::size_t>(geom.slice_count), false) {}

RowInterval GlobalAccumulator::place(const RawFrame& frame) {
    if (frame.slice_index < 0 || frame.slice_index >= geom_.slice_count) {
        throw ParameterError(fmt::format("slice index {} outside [0, {})", frame.slice_index, geom_.slice_count));
    }
    if (sweep_ && *sweep_ != frame.sweep_index) {
        throw ProtocolError(fmt::format("frame of sweep {} arrived while sweep {} is open", frame.sweep_index,
                                        *sweep_));
    }
    sweep_ = frame.sweep_index;
    const RowInterval rows = deskew_place(canvas_, frame, shear_, interp_);
    if (!placed_[frame.slice_index]) {
        placed_[frame.slice_index] = true;
        ++placed_count_;
    }
    last_slice_ = frame.slice_index;
    return rows;
}

ProjectionImage GlobalAccumulator::finalize(int channel_id) {
    if (!complete()) {
        throw ProtocolError(
            fmt::format("finalize with {} of {} slices placed", placed_count_, geom_.slice_count));
    }
    ProjectionImage out;
    out.pixels = canvas_.pixels();
    out.channel_id = channel_id;
    out.sweep_index = sweep_.value_or(0);
    out.slice_index = last_slice_;
    out.shear_px = shear_;
    out.mode = UpdateMode::global;
    reset();
    return out;
}

void GlobalAccumulator::reset() {
    canvas_.clear();
    std::fill(placed_.begin(), placed_.end(), false);
    placed_count_ = 0;
    sweep_.reset();
}

void GlobalAccumulator::set_shear(double shear_px) {
    if (!empty()) {
        throw ProtocolError("shear changes must wait for the current sweep to finish");
    }
    if (shear_px == shear_) return;
    canvas_ = ProjectionCanvas(output_extent(geom_, shear_px), UpdateMode::global);
    shear_ = shear_px;
}

RollingAccumulator::RollingAccumulator(const SheetGeometry& geom, double shear_px, Interpolation interp)
    : geom_(geom), shear_(shear_px), interp_(interp),
      canvas_(output_extent(geom, shear_px), UpdateMode::rolling),
      ring_(static_cast<std::size_t>(geom.slice_count)) {}

void RollingAccumulator::rebuild_rows(RowInterval band) {
    canvas_.clear_rows(band);
    for (int m = 0; m < geom_.slice_count; ++m) {
        const auto& slot = ring_[m];
        if (!slot) continue;
        const RowInterval rows = placement_rows(geom_.frame_height_px, m * shear_, interp_);
        if (rows.overlaps(band)) {
            deskew_place(canvas_, *slot, shear_, interp_, band, m);
        }
    }
}

RollingAccumulator::Update RollingAccumulator::replace(const RawFrame& frame, int channel_id) {
    if (frame.slice_index < 0 || frame.slice_index >= geom_.slice_count) {
        throw ParameterError(fmt::format("slice index {} outside [0, {})", frame.slice_index, geom_.slice_count));
    }
    if (frame.width() != geom_.frame_width_px || frame.height() != geom_.frame_height_px) {
        throw ParameterError("frame size does not match the rolling geometry");
    }
    const int k = frame.slice_index;
    // Old and new occupants share an offset, so they cover the same band.
    const RowInterval band = placement_rows(geom_.frame_height_px, k * shear_, interp_);
    ring_[k] = frame;
    rebuild_rows(band);

    Update update;
    update.touched = band.intersected({0, canvas_.height()});
    update.emission.pixels = canvas_.pixels();
    update.emission.channel_id = channel_id;
    update.emission.sweep_index = frame.sweep_index;
    update.emission.slice_index = k;
    update.emission.shear_px = shear_;
    update.emission.mode = UpdateMode::rolling;
    return update;
}

void RollingAccumulator::set_shear(double shear_px) {
    if (shear_px == shear_) return;
    canvas_ = ProjectionCanvas(output_extent(geom_, shear_px), UpdateMode::rolling);
    shear_ = shear_px;
    rebuild_rows({0, canvas_.height()});
}

int RollingAccumulator::live_slices() const noexcept {
    return static_cast<int>(std::count_if(ring_.begin(), ring_.end(), [](const auto& s) { return s.has_value(); }));
}

bool RollingAccumulator::is_live(int slice_index) const noexcept {
    return slice_index >= 0 && slice_index < geom_.slice_count && ring_[slice_index].has_value();
}

bool RollingAccumulator::contributors_consistent() const {
    const auto pixels = canvas_.pixels().pixels();
    const auto contributors = canvas_.contributors();
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        if (pixels[i] != 0 && !is_live(contributors[i])) {
            return false;
        }
    }
    return true;
}

}  // namespace skewstream
