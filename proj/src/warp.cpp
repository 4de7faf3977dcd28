#include "skewstream/warp.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "skewstream/error.hpp"

namespace skewstream {

Image16 warp_rows(const Image16& src, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw ParameterError(fmt::format("warp scale must be positive, got {}", scale));
    }
    // Native-angle views land within rounding of 1; treat them as the identity.
    if (std::abs(scale - 1.0) <= kWarpIdentityTolerance) scale = 1.0;
    const double rows = std::round(src.height() * scale);
    if (rows < 1.0 || src.width() < 1) {
        throw ParameterError(fmt::format("warp of {} rows by {} leaves an empty image", src.height(), scale));
    }
    if (rows > 1e7) {
        throw CapacityError(fmt::format("warp output of {:.0f} rows is too large", rows));
    }
    const int out_rows = static_cast<int>(rows);
    Image16 out(src.width(), out_rows);
    if (scale == 1.0) {
        // Identity resample; rows beyond the source (none when scale is 1) stay clamped.
        for (int k = 0; k < out_rows; ++k) {
            auto s = src.row(std::min(k, src.height() - 1));
            std::copy(s.begin(), s.end(), out.row(k).begin());
        }
        return out;
    }
    const int last = src.height() - 1;
    for (int k = 0; k < out_rows; ++k) {
        const double u = std::min(k / scale, static_cast<double>(last));
        const int u0 = static_cast<int>(std::floor(u));
        const int u1 = std::min(u0 + 1, last);
        const auto f = static_cast<float>(u - u0);
        const auto a = src.row(u0);
        const auto b = src.row(u1);
        auto dst = out.row(k);
        for (int x = 0; x < src.width(); ++x) {
            const float v = (1.0f - f) * a[x] + f * b[x] + 0.5f;
            dst[x] = static_cast<std::uint16_t>(std::min(v, 65535.0f));
        }
    }
    return out;
}

DisplayImage warp_and_emit(const ProjectionImage& projection, const ViewTransform& view,
                           const StageTimings& timings, double column_pitch_um) {
    DisplayImage out;
    out.pixels = warp_rows(projection.pixels, view.warp_scale);
    out.channel_id = projection.channel_id;
    out.sweep_index = projection.sweep_index;
    out.slice_index = projection.slice_index;
    out.view_angle_deg = view.view_angle_deg;
    out.warp_scale = view.warp_scale;
    out.row_pitch_um = view.out_pitch_um;
    out.column_pitch_um = column_pitch_um;
    out.shear_px = projection.shear_px;
    out.mode = projection.mode;
    out.timings = timings;
    return out;
}

}  // namespace skewstream
