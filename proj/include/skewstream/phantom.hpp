#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skewstream/geometry.hpp"
#include "skewstream/image.hpp"
#include "skewstream/placement.hpp"

namespace skewstream {

/// Sample-space coordinates in µm: x lateral (invariant axis), y scan axis, z height above the coverslip.
struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    friend bool operator==(const Vec3&, const Vec3&) = default;
};

double dot(Vec3 a, Vec3 b) noexcept;
double norm(Vec3 a) noexcept;

enum class PrimitiveKind { sphere, cylinder, point };

/// A solid of constant intensity with an optional linear edge ramp.
///
/// Spheres and cylinders ramp from full intensity to zero over edge_um centred on
/// their surface (edge_um = 0 gives a hard edge). Points are Gaussian spots with
/// sigma = radius_um, truncated at three sigma. Cylinders are infinite along
/// their axis unless length_um > 0.
struct Primitive {
    PrimitiveKind kind = PrimitiveKind::sphere;
    Vec3 center_um;
    double radius_um = 1.0;
    Vec3 axis{1.0, 0.0, 0.0};
    double length_um = 0.0;
    double edge_um = 0.0;
    std::uint16_t intensity = 1000;

    double value_at(Vec3 p) const noexcept;
};

struct Box {
    Vec3 min;
    Vec3 max;

    bool contains(Vec3 p) const noexcept;
};

struct PhantomScene {
    std::vector<Primitive> primitives;
    Box extent_um;

    /// Brightest primitive at p (primitives composite by maximum).
    double intensity_at(Vec3 p) const noexcept;
    void validate() const;

    static PhantomScene from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

PhantomScene load_scene(const std::filesystem::path& path);
void save_scene(const PhantomScene& scene, const std::filesystem::path& path);

/// Scene that fills the volume sampled by geom: a sphere plus an off-centre
/// cylinder running along the invariant axis, both with soft edges.
PhantomScene default_scene(const SheetGeometry& geom);

/// Dense scalar field used by the brute-force projection oracle.
class VoxelGrid {
public:
    VoxelGrid(double voxel_pitch_um, Vec3 origin_um, int nx, int ny, int nz);

    static VoxelGrid from_scene(const PhantomScene& scene, double voxel_pitch_um, Vec3 origin_um, int nx,
                                int ny, int nz);

    double pitch_um() const noexcept { return pitch_; }
    Vec3 origin_um() const noexcept { return origin_; }
    int nx() const noexcept { return nx_; }
    int ny() const noexcept { return ny_; }
    int nz() const noexcept { return nz_; }
    Vec3 center_um() const noexcept;

    std::uint16_t& at(int ix, int iy, int iz) noexcept { return voxels_[index(ix, iy, iz)]; }
    std::uint16_t at(int ix, int iy, int iz) const noexcept { return voxels_[index(ix, iy, iz)]; }

    /// Trilinear sample at a point; zero outside the grid.
    double sample(Vec3 p) const noexcept;

private:
    std::size_t index(int ix, int iy, int iz) const noexcept {
        return (static_cast<std::size_t>(iz) * ny_ + iy) * nx_ + ix;
    }

    double pitch_;
    Vec3 origin_;
    int nx_, ny_, nz_;
    std::vector<std::uint16_t> voxels_;
};

/// A projected view. Row k sits at view-plane coordinate t0_um + k * pitch_um,
/// column c at lateral position x0_um + c * pitch_um.
struct Projection {
    Image16 image;
    double pitch_um = 1.0;
    double t0_um = 0.0;
    double x0_um = 0.0;
    double view_angle_deg = 0.0;
};

/// Samples the scene on the tilted sheet of slice_index. Pixel (x, j) maps to
/// (x*p, i*step + j*p*cos(alpha), j*p*sin(alpha)) shifted by stage_offset_um.
/// A noise seed adds Poisson shot noise, deterministic for a given seed.
RawFrame render_skewed_slice(const PhantomScene& scene, const SheetGeometry& geom, int slice_index,
                             std::optional<std::uint64_t> noise_seed = std::nullopt,
                             Vec3 stage_offset_um = {});

std::vector<RawFrame> render_stack(const PhantomScene& scene, const SheetGeometry& geom,
                                   std::optional<std::uint64_t> noise_seed = std::nullopt);

/// Brute-force view: rotates the grid about its centre by view_angle_deg in the
/// scan/height plane (trilinear resampling, rays marched at half-voxel steps)
/// and takes the maximum along the vertical.
Projection oracle_project(const VoxelGrid& grid, double view_angle_deg);

/// Obviously-correct batch deskew: materializes the enlarged canvas, places every
/// slice at slice_index * shear_px and takes the per-pixel maximum in one pass.
Image16 reference_deskew(std::span<const RawFrame> stack, const SheetGeometry& geom, double shear_px,
                         Interpolation interp = Interpolation::nearest);

}  // namespace skewstream
