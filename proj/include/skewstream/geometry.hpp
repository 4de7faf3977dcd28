#pragma once

#include <cstddef>
#include <cstdint>

namespace skewstream {

/// Acquisition geometry of an obliquely scanned lightsheet stack.
///
/// Frame columns run along the invariant lateral axis (width W). Frame rows
/// run along the tilted sheet, so pixel row j sits j*p*cos(alpha) further
/// along the scan axis and j*p*sin(alpha) above the coverslip. Consecutive
/// slices are scan_step_um apart along the scan axis.
struct SheetGeometry {
    double alpha_deg = 30.0;
    double scan_step_um = 0.115;
    double pixel_pitch_um = 0.115;
    int slice_count = 1;
    int frame_width_px = 1;
    int frame_height_px = 1;

    /// Throws ParameterError when any invariant is violated.
    void validate() const;

    friend bool operator==(const SheetGeometry&, const SheetGeometry&) = default;
};

struct Extent {
    int width_px = 0;
    int height_px = 0;

    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width_px) * static_cast<std::size_t>(height_px);
    }
    friend bool operator==(const Extent&, const Extent&) = default;
};

struct PhysicalExtent {
    double width_um = 0.0;
    double height_um = 0.0;
};

/// Default ceiling on canvas size (pixels); 256 MP of 16-bit data is 512 MB.
inline constexpr std::size_t kDefaultCanvasLimit = std::size_t{1} << 28;

/// Fractional offsets closer than this to an integer are treated as integral
/// everywhere offsets are discretized (extent sizing and slice placement).
inline constexpr double kOffsetSnap = 1e-9;

/// Lateral shift between consecutive slices in µm: scan_step * cos(alpha).
double shear_factor(double scan_step_um, double alpha_deg);

double native_shear_px(double scan_step_um, double alpha_deg, double pixel_pitch_um);
double native_shear_px(const SheetGeometry& geom);

/// Upper bound for the user shear (twice the native shear).
double max_shear_px(const SheetGeometry& geom);

/// Enlarged canvas for a stack deskewed at shear_px: the invariant axis is
/// unchanged, the shear axis grows to H + ceil((N-1) * shear_px).
Extent output_extent(const SheetGeometry& geom, double shear_px,
                     std::size_t max_pixels = kDefaultCanvasLimit);

/// Projection angle (degrees from the horizontal) produced by shear_px.
double view_angle_from_shear(double shear_px, const SheetGeometry& geom);

/// Inverse of view_angle_from_shear; valid for 0 <= angle < 180 - alpha.
double shear_from_view_angle(double view_angle_deg, const SheetGeometry& geom);

/// 1-D rescale along the shear axis that turns the sheared projection into an
/// orthographic view at view_angle_from_shear(shear_px) sampled at out_pitch_um.
double warp_factor(double shear_px, const SheetGeometry& geom, double out_pitch_um);

PhysicalExtent physical_extent(Extent extent, double pixel_pitch_um);

/// Shear, warp and resulting view angle for one rendering of a stack.
struct ViewTransform {
    double shear_px = 0.0;
    double warp_scale = 1.0;
    double view_angle_deg = 0.0;
    double out_pitch_um = 0.0;

    /// out_pitch_um <= 0 selects the geometry pixel pitch.
    static ViewTransform from_shear(const SheetGeometry& geom, double shear_px, double out_pitch_um = 0.0);
    static ViewTransform from_view_angle(const SheetGeometry& geom, double view_angle_deg,
                                         double out_pitch_um = 0.0);
    static ViewTransform native(const SheetGeometry& geom, double out_pitch_um = 0.0);
};

/// Integer row plus fractional remainder of a placement offset, snapped so the
/// canvas sizing and the placement code always agree.
struct SplitOffset {
    std::int64_t base = 0;
    double frac = 0.0;
};
SplitOffset split_offset(double offset);

/// ceil() with the same integer snapping as split_offset.
std::int64_t snapped_ceil(double value);

double deg_to_rad(double deg) noexcept;
double rad_to_deg(double rad) noexcept;

}  // namespace skewstream
