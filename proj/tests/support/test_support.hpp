#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "skewstream/geometry.hpp"
#include "skewstream/image.hpp"
#include "skewstream/phantom.hpp"
#include "skewstream/placement.hpp"

namespace skewstream::testing {

class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::filesystem::path& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

/// N frames of W x H uniform random pixels (sparse when density < 1), slices 0..N-1 of one sweep.
std::vector<RawFrame> random_stack(std::mt19937_64& rng, int width, int height, int slices,
                                   std::int64_t sweep = 0, double density = 1.0, std::uint16_t max_value = 65535);

RawFrame make_frame(int width, int height, std::initializer_list<std::uint16_t> values, int slice = 0,
                    std::int64_t sweep = 0);

/// Second-moment ellipse of an image above a threshold fraction of its peak.
struct Moments {
    double total = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    double major = 0.0;  // standard deviation along the major axis
    double minor = 0.0;
    double axis_ratio() const { return major / minor; }
};
Moments image_moments(const Image16& image, double threshold_fraction = 0.0);

/// Kendall rank correlation between xs and ys (tau-a).
double kendall_tau(std::span<const double> xs, std::span<const double> ys);

/// The 64-voxel cube used for the shear-warp oracle comparison: a sphere and an
/// off-centre cylinder, sampled by a tilted-sheet stack that covers the cube.
struct OracleCase {
    SheetGeometry geometry;
    Vec3 stage_offset_um;
    PhantomScene scene;
    VoxelGrid grid;
};
OracleCase make_oracle_case();

struct OracleComparison {
    double view_angle_deg = 0.0;
    double shear_px = 0.0;
    double rms = 0.0;
    double peak = 0.0;
    double rms_fraction() const { return rms / peak; }
};

/// Renders the stack, runs it through the deterministic pipeline at the shear for
/// view_angle_deg and compares the warped output with oracle_project row by row
/// on the oracle's view-plane grid.
OracleComparison compare_with_oracle(const OracleCase& c, double view_angle_deg,
                                     Interpolation interp = Interpolation::linear);

}  // namespace skewstream::testing
