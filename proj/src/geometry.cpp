#include "skewstream/geometry.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "skewstream/error.hpp"

namespace skewstream {

double deg_to_rad(double deg) noexcept { return deg * std::numbers::pi / 180.0; }
double rad_to_deg(double rad) noexcept { return rad * 180.0 / std::numbers::pi; }

void SheetGeometry::validate() const {
    if (!(alpha_deg > 0.0 && alpha_deg < 90.0)) {
        throw ParameterError(fmt::format("alpha_deg must lie in (0, 90), got {}", alpha_deg));
    }
    if (!(scan_step_um > 0.0) || !std::isfinite(scan_step_um)) {
        throw ParameterError(fmt::format("scan_step_um must be positive, got {}", scan_step_um));
    }
    if (!(pixel_pitch_um > 0.0) || !std::isfinite(pixel_pitch_um)) {
        throw ParameterError(fmt::format("pixel_pitch_um must be positive, got {}", pixel_pitch_um));
    }
    if (slice_count < 1) {
        throw ParameterError(fmt::format("slice_count must be >= 1, got {}", slice_count));
    }
    if (frame_width_px < 1 || frame_height_px < 1) {
        throw ParameterError(
            fmt::format("frame size must be at least 1x1, got {}x{}", frame_width_px, frame_height_px));
    }
}

double shear_factor(double scan_step_um, double alpha_deg) {
    if (!(scan_step_um >= 0.0) || !std::isfinite(scan_step_um)) {
        throw ParameterError(fmt::format("scan step must be non-negative, got {}", scan_step_um));
    }
    if (!(alpha_deg >= 0.0 && alpha_deg <= 90.0)) {
        throw ParameterError(fmt::format("sheet angle must lie in [0, 90], got {}", alpha_deg));
    }
    // cos(pi/2) is 6e-17 in floating point; the right angle is exact by definition.
    if (alpha_deg == 90.0) {
        return 0.0;
    }
    return scan_step_um * std::cos(deg_to_rad(alpha_deg));
}

double native_shear_px(double scan_step_um, double alpha_deg, double pixel_pitch_um) {
    if (!(pixel_pitch_um > 0.0)) {
        throw ParameterError(fmt::format("pixel pitch must be positive, got {}", pixel_pitch_um));
    }
    return shear_factor(scan_step_um, alpha_deg) / pixel_pitch_um;
}

double native_shear_px(const SheetGeometry& geom) {
    geom.validate();
    return native_shear_px(geom.scan_step_um, geom.alpha_deg, geom.pixel_pitch_um);
}

double max_shear_px(const SheetGeometry& geom) { return 2.0 * native_shear_px(geom); }

SplitOffset split_offset(double offset) {
    double base = std::floor(offset);
    double frac = offset - base;
    if (frac < kOffsetSnap) {
        frac = 0.0;
    } else if (frac > 1.0 - kOffsetSnap) {
        base += 1.0;
        frac = 0.0;
    }
    return {static_cast<std::int64_t>(base), frac};
}

std::int64_t snapped_ceil(double value) {
    const SplitOffset split = split_offset(value);
    return split.frac > 0.0 ? split.base + 1 : split.base;
}

Extent output_extent(const SheetGeometry& geom, double shear_px, std::size_t max_pixels) {
    geom.validate();
    if (!(shear_px >= 0.0) || !std::isfinite(shear_px)) {
        throw ParameterError(fmt::format("shear must be a finite non-negative value, got {}", shear_px));
    }
    const double growth = static_cast<double>(geom.slice_count - 1) * shear_px;
    const double limit_rows = static_cast<double>(max_pixels) / geom.frame_width_px;
    if (growth + geom.frame_height_px > limit_rows) {
        throw CapacityError(fmt::format("canvas of {} x {:.0f} px exceeds the {} px limit", geom.frame_width_px,
                                        growth + geom.frame_height_px, max_pixels));
    }
    const auto height = static_cast<std::int64_t>(geom.frame_height_px) + snapped_ceil(growth);
    return {geom.frame_width_px, static_cast<int>(height)};
}

double view_angle_from_shear(double shear_px, const SheetGeometry& geom) {
    geom.validate();
    if (!(shear_px >= 0.0)) {
        throw ParameterError(fmt::format("shear must be non-negative, got {}", shear_px));
    }
    const double alpha = deg_to_rad(geom.alpha_deg);
    const double travel = shear_px * geom.pixel_pitch_um;
    return rad_to_deg(std::atan2(travel * std::sin(alpha), geom.scan_step_um - travel * std::cos(alpha)));
}

double shear_from_view_angle(double view_angle_deg, const SheetGeometry& geom) {
    geom.validate();
    if (!(view_angle_deg >= 0.0 && view_angle_deg < 180.0 - geom.alpha_deg)) {
        throw ParameterError(fmt::format("view angle must lie in [0, {}), got {}", 180.0 - geom.alpha_deg,
                                         view_angle_deg));
    }
    const double theta = deg_to_rad(view_angle_deg);
    const double alpha = deg_to_rad(geom.alpha_deg);
    return geom.scan_step_um * std::sin(theta) / (geom.pixel_pitch_um * std::sin(alpha + theta));
}

double warp_factor(double shear_px, const SheetGeometry& geom, double out_pitch_um) {
    geom.validate();
    if (!(shear_px >= 0.0)) {
        throw ParameterError(fmt::format("shear must be non-negative, got {}", shear_px));
    }
    if (!(out_pitch_um > 0.0)) {
        throw ParameterError(fmt::format("output pitch must be positive, got {}", out_pitch_um));
    }
    const double alpha = deg_to_rad(geom.alpha_deg);
    const double p = geom.pixel_pitch_um;
    const double step = geom.scan_step_um;
    // step*sin(theta)/s with sin(theta) = s*p*sin(a)/r and
    // r = hypot(s*p*sin(a), step - s*p*cos(a)); s cancels, leaving a form
    // that is smooth through s = 0.
    const double travel = shear_px * p;
    const double r = std::hypot(travel * std::sin(alpha), step - travel * std::cos(alpha));
    return step * p * std::sin(alpha) / (r * out_pitch_um);
}

PhysicalExtent physical_extent(Extent extent, double pixel_pitch_um) {
    return {extent.width_px * pixel_pitch_um, extent.height_px * pixel_pitch_um};
}

ViewTransform ViewTransform::from_shear(const SheetGeometry& geom, double shear_px, double out_pitch_um) {
    const double q = out_pitch_um > 0.0 ? out_pitch_um : geom.pixel_pitch_um;
    const double limit = max_shear_px(geom);
    if (!(shear_px >= 0.0) || shear_px > limit * (1.0 + 1e-12)) {
        throw ParameterError(fmt::format("shear {} px outside [0, {}]", shear_px, limit));
    }
    return {shear_px, warp_factor(shear_px, geom, q), view_angle_from_shear(shear_px, geom), q};
}

ViewTransform ViewTransform::from_view_angle(const SheetGeometry& geom, double view_angle_deg,
                                             double out_pitch_um) {
    return from_shear(geom, shear_from_view_angle(view_angle_deg, geom), out_pitch_um);
}

ViewTransform ViewTransform::native(const SheetGeometry& geom, double out_pitch_um) {
    return from_shear(geom, native_shear_px(geom), out_pitch_um);
}

}  // namespace skewstream
