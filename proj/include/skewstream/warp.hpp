#pragma once

#include <cstdint>

#include "skewstream/canvas.hpp"
#include "skewstream/geometry.hpp"
#include "skewstream/timings.hpp"

namespace skewstream {

/// A warped projection ready for display.
struct DisplayImage {
    Image16 pixels;
    int channel_id = 0;
    std::int64_t sweep_index = 0;
    int slice_index = 0;
    double view_angle_deg = 0.0;
    double warp_scale = 1.0;
    /// Rows are resampled to the output pitch; columns keep the camera pitch.
    double row_pitch_um = 0.0;
    double column_pitch_um = 0.0;
    double shear_px = 0.0;
    UpdateMode mode = UpdateMode::global;
    StageTimings timings;
    std::uint32_t drops = 0;
};

/// Scales this close to 1 resample as the identity.
inline constexpr double kWarpIdentityTolerance = 1e-9;

/// Linear resample along the row axis. The output has round(H * scale) rows and
/// output row k samples source row k / scale (clamped to the last row).
Image16 warp_rows(const Image16& src, double scale);

DisplayImage warp_and_emit(const ProjectionImage& projection, const ViewTransform& view,
                           const StageTimings& timings = {}, double column_pitch_um = 0.0);

}  // namespace skewstream
