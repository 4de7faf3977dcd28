#include "skewstream/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "skewstream/error.hpp"

namespace skewstream {

double dot(Vec3 a, Vec3 b) noexcept { return a.x * b.x + a.y * b.y + a.z * b.z; }
double norm(Vec3 a) noexcept { return std::sqrt(dot(a, a)); }

namespace {

// Coverage of a solid at signed depth `inside` (positive inside the surface).
double edge_ramp(double inside, double edge) noexcept {
    if (edge <= 0.0) {
        return inside >= 0.0 ? 1.0 : 0.0;
    }
    return std::clamp(inside / edge + 0.5, 0.0, 1.0);
}

std::uint16_t to_u16(double v) noexcept {
    return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 65535.0)));
}

Vec3 vec_from_json(const nlohmann::json& j, const char* field) {
    if (!j.is_array() || j.size() != 3) {
        throw ParameterError(fmt::format("'{}' must be an array of three numbers", field));
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json vec_to_json(Vec3 v) { return nlohmann::json::array({v.x, v.y, v.z}); }

PrimitiveKind kind_from_string(const std::string& s) {
    if (s == "sphere") return PrimitiveKind::sphere;
    if (s == "cylinder") return PrimitiveKind::cylinder;
    if (s == "point") return PrimitiveKind::point;
    throw ParameterError(fmt::format("unknown primitive kind '{}'", s));
}

const char* kind_to_string(PrimitiveKind k) {
    switch (k) {
        case PrimitiveKind::sphere: return "sphere";
        case PrimitiveKind::cylinder: return "cylinder";
        case PrimitiveKind::point: return "point";
    }
    return "sphere";
}

}  // namespace

double Primitive::value_at(Vec3 p) const noexcept {
    const Vec3 d = p - center_um;
    switch (kind) {
        case PrimitiveKind::sphere:
            return intensity * edge_ramp(radius_um - norm(d), edge_um);
        case PrimitiveKind::cylinder: {
            const Vec3 a = (1.0 / norm(axis)) * axis;
            const double along = dot(d, a);
            const double radial = norm(d - along * a);
            double v = edge_ramp(radius_um - radial, edge_um);
            if (length_um > 0.0) {
                v *= edge_ramp(0.5 * length_um - std::abs(along), edge_um);
            }
            return intensity * v;
        }
        case PrimitiveKind::point: {
            const double r2 = dot(d, d);
            const double s2 = radius_um * radius_um;
            if (r2 > 9.0 * s2) {
                return 0.0;
            }
            return intensity * std::exp(-0.5 * r2 / s2);
        }
    }
    return 0.0;
}

bool Box::contains(Vec3 p) const noexcept {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z;
}

double PhantomScene::intensity_at(Vec3 p) const noexcept {
    double best = 0.0;
    for (const auto& prim : primitives) {
        best = std::max(best, prim.value_at(p));
    }
    return best;
}

void PhantomScene::validate() const {
    for (std::size_t i = 0; i < primitives.size(); ++i) {
        const auto& prim = primitives[i];
        if (!extent_um.contains(prim.center_um)) {
            throw ParameterError(fmt::format("primitive {} lies outside the scene extent", i));
        }
        if (!(prim.radius_um > 0.0)) {
            throw ParameterError(fmt::format("primitive {} needs a positive radius", i));
        }
        if (prim.kind == PrimitiveKind::cylinder && norm(prim.axis) == 0.0) {
            throw ParameterError(fmt::format("cylinder {} has a zero axis", i));
        }
        if (prim.edge_um < 0.0 || prim.length_um < 0.0) {
            throw ParameterError(fmt::format("primitive {} has a negative edge or length", i));
        }
    }
}

PhantomScene PhantomScene::from_json(const nlohmann::json& j) {
    PhantomScene scene;
    try {
        const auto& extent = j.at("extent_um");
        scene.extent_um = {vec_from_json(extent.at("min"), "extent_um.min"),
                           vec_from_json(extent.at("max"), "extent_um.max")};
        for (const auto& pj : j.at("primitives")) {
            Primitive prim;
            prim.kind = kind_from_string(pj.at("kind").get<std::string>());
            prim.center_um = vec_from_json(pj.at("center_um"), "center_um");
            prim.radius_um = pj.at("radius_um").get<double>();
            if (pj.contains("axis")) prim.axis = vec_from_json(pj["axis"], "axis");
            prim.length_um = pj.value("length_um", 0.0);
            prim.edge_um = pj.value("edge_um", 0.0);
            const double intensity = pj.at("intensity").get<double>();
            if (intensity < 0.0 || intensity > 65535.0) {
                throw ParameterError(fmt::format("intensity {} does not fit 16 bits", intensity));
            }
            prim.intensity = static_cast<std::uint16_t>(std::lround(intensity));
            scene.primitives.push_back(prim);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(fmt::format("invalid scene description: {}", e.what()));
    }
    scene.validate();
    return scene;
}

nlohmann::json PhantomScene::to_json() const {
    nlohmann::json prims = nlohmann::json::array();
    for (const auto& p : primitives) {
        nlohmann::json pj{{"kind", kind_to_string(p.kind)},
                          {"center_um", vec_to_json(p.center_um)},
                          {"radius_um", p.radius_um},
                          {"intensity", p.intensity},
                          {"edge_um", p.edge_um}};
        if (p.kind == PrimitiveKind::cylinder) {
            pj["axis"] = vec_to_json(p.axis);
            pj["length_um"] = p.length_um;
        }
        prims.push_back(std::move(pj));
    }
    return {{"extent_um", {{"min", vec_to_json(extent_um.min)}, {"max", vec_to_json(extent_um.max)}}},
            {"primitives", std::move(prims)}};
}

PhantomScene load_scene(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(fmt::format("cannot open scene file {}", path.string()));
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(fmt::format("scene file {} is not valid JSON: {}", path.string(), e.what()));
    }
    return PhantomScene::from_json(j);
}

void save_scene(const PhantomScene& scene, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError(fmt::format("cannot write scene file {}", path.string()));
    }
    out << scene.to_json().dump(2) << '\n';
}

PhantomScene default_scene(const SheetGeometry& geom) {
    geom.validate();
    const double alpha = deg_to_rad(geom.alpha_deg);
    const double p = geom.pixel_pitch_um;
    const double width = (geom.frame_width_px - 1) * p;
    const double depth = (geom.frame_height_px - 1) * p * std::sin(alpha);
    // Scan positions seen at every height: y in [depth*cot(a), (N-1)*step].
    const double y_lo = depth / std::tan(alpha);
    const double y_hi = std::max(y_lo, (geom.slice_count - 1) * geom.scan_step_um);
    const double scan = y_hi - y_lo;
    const double radius = 0.2 * std::min({width, depth, scan > 0.0 ? scan : depth});
    const double edge = 2.0 * p;

    PhantomScene scene;
    scene.extent_um = {{0.0, 0.0, 0.0}, {width, y_hi + depth, depth}};
    Primitive sphere;
    sphere.kind = PrimitiveKind::sphere;
    sphere.center_um = {0.5 * width, y_lo + 0.5 * scan, 0.5 * depth};
    sphere.radius_um = std::max(radius, p);
    sphere.edge_um = edge;
    sphere.intensity = 40000;
    scene.primitives.push_back(sphere);

    Primitive cylinder;
    cylinder.kind = PrimitiveKind::cylinder;
    cylinder.center_um = {0.5 * width, y_lo + 0.78 * scan, 0.3 * depth};
    cylinder.radius_um = std::max(0.45 * radius, p);
    cylinder.axis = {1.0, 0.0, 0.0};
    cylinder.edge_um = edge;
    cylinder.intensity = 25000;
    scene.primitives.push_back(cylinder);
    return scene;
}

VoxelGrid::VoxelGrid(double voxel_pitch_um, Vec3 origin_um, int nx, int ny, int nz)
    : pitch_(voxel_pitch_um), origin_(origin_um), nx_(nx), ny_(ny), nz_(nz) {
    if (!(voxel_pitch_um > 0.0)) {
        throw ParameterError("voxel pitch must be positive");
    }
    if (nx < 1 || ny < 1 || nz < 1) {
        throw ParameterError(fmt::format("voxel grid dims must be >= 1, got {}x{}x{}", nx, ny, nz));
    }
    voxels_.assign(static_cast<std::size_t>(nx) * ny * nz, 0);
}

VoxelGrid VoxelGrid::from_scene(const PhantomScene& scene, double voxel_pitch_um, Vec3 origin_um, int nx, int ny,
                                int nz) {
    VoxelGrid grid(voxel_pitch_um, origin_um, nx, ny, nz);
    for (int iz = 0; iz < nz; ++iz) {
        for (int iy = 0; iy < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                const Vec3 p = origin_um + Vec3{ix * voxel_pitch_um, iy * voxel_pitch_um, iz * voxel_pitch_um};
                grid.at(ix, iy, iz) = to_u16(scene.intensity_at(p));
            }
        }
    }
    return grid;
}

Vec3 VoxelGrid::center_um() const noexcept {
    return origin_ + Vec3{0.5 * (nx_ - 1) * pitch_, 0.5 * (ny_ - 1) * pitch_, 0.5 * (nz_ - 1) * pitch_};
}

double VoxelGrid::sample(Vec3 p) const noexcept {
    const double fx = (p.x - origin_.x) / pitch_;
    const double fy = (p.y - origin_.y) / pitch_;
    const double fz = (p.z - origin_.z) / pitch_;
    if (fx <= -1.0 || fy <= -1.0 || fz <= -1.0 || fx >= nx_ || fy >= ny_ || fz >= nz_) {
        return 0.0;
    }
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const int z0 = static_cast<int>(std::floor(fz));
    const double tx = fx - x0, ty = fy - y0, tz = fz - z0;
    auto value = [&](int ix, int iy, int iz) -> double {
        if (ix < 0 || iy < 0 || iz < 0 || ix >= nx_ || iy >= ny_ || iz >= nz_) return 0.0;
        return at(ix, iy, iz);
    };
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz) {
        const double wz = dz ? tz : 1.0 - tz;
        for (int dy = 0; dy < 2; ++dy) {
            const double wy = dy ? ty : 1.0 - ty;
            for (int dx = 0; dx < 2; ++dx) {
                const double wx = dx ? tx : 1.0 - tx;
                const double w = wx * wy * wz;
                if (w != 0.0) acc += w * value(x0 + dx, y0 + dy, z0 + dz);
            }
        }
    }
    return acc;
}

RawFrame render_skewed_slice(const PhantomScene& scene, const SheetGeometry& geom, int slice_index,
                             std::optional<std::uint64_t> noise_seed, Vec3 stage_offset_um) {
    geom.validate();
    if (slice_index < 0 || slice_index >= geom.slice_count) {
        throw ParameterError(
            fmt::format("slice index {} outside [0, {})", slice_index, geom.slice_count));
    }
    const double alpha = deg_to_rad(geom.alpha_deg);
    const double p = geom.pixel_pitch_um;
    const double dy = p * std::cos(alpha);
    const double dz = p * std::sin(alpha);

    RawFrame frame;
    frame.slice_index = slice_index;
    frame.pixels = Image16(geom.frame_width_px, geom.frame_height_px);

    std::optional<std::mt19937_64> rng;
    if (noise_seed) {
        std::seed_seq seq{static_cast<std::uint32_t>(*noise_seed), static_cast<std::uint32_t>(*noise_seed >> 32),
                          static_cast<std::uint32_t>(slice_index)};
        rng.emplace(seq);
    }
    for (int j = 0; j < geom.frame_height_px; ++j) {
        auto row = frame.pixels.row(j);
        const double y = slice_index * geom.scan_step_um + j * dy;
        const double z = j * dz;
        for (int x = 0; x < geom.frame_width_px; ++x) {
            double v = scene.intensity_at(Vec3{x * p, y, z} + stage_offset_um);
            if (rng && v > 0.0) {
                std::poisson_distribution<long> shot(v);
                v = static_cast<double>(shot(*rng));
            }
            row[x] = to_u16(v);
        }
    }
    return frame;
}

std::vector<RawFrame> render_stack(const PhantomScene& scene, const SheetGeometry& geom,
                                   std::optional<std::uint64_t> noise_seed) {
    std::vector<RawFrame> stack;
    stack.reserve(geom.slice_count);
    for (int i = 0; i < geom.slice_count; ++i) {
        stack.push_back(render_skewed_slice(scene, geom, i, noise_seed));
    }
    return stack;
}

Projection oracle_project(const VoxelGrid& grid, double view_angle_deg) {
    const double theta = deg_to_rad(view_angle_deg);
    const double st = std::sin(theta), ct = std::cos(theta);
    const double g = grid.pitch_um();
    const Vec3 c = grid.center_um();
    const double hy = 0.5 * (grid.ny() - 1) * g;
    const double hz = 0.5 * (grid.nz() - 1) * g;

    // View axis t = (sin, cos) and ray axis r = (cos, -sin) in the (scan, height) plane,
    // both measured in absolute sample coordinates.
    double t_lo = 1e300, t_hi = -1e300, r_lo = 1e300, r_hi = -1e300;
    for (int sy : {-1, 1}) {
        for (int sz : {-1, 1}) {
            const double y = c.y + sy * hy, z = c.z + sz * hz;
            t_lo = std::min(t_lo, y * st + z * ct);
            t_hi = std::max(t_hi, y * st + z * ct);
            r_lo = std::min(r_lo, y * ct - z * st);
            r_hi = std::max(r_hi, y * ct - z * st);
        }
    }
    const double t0 = std::floor(t_lo / g) * g;
    const int rows = static_cast<int>(std::ceil((t_hi - t0) / g)) + 1;
    const double step = 0.5 * g;
    const int samples = static_cast<int>(std::ceil((r_hi - r_lo) / step)) + 3;
    const double r_start = r_lo - step;

    Projection out;
    out.image = Image16(grid.nx(), rows);
    out.pitch_um = g;
    out.t0_um = t0;
    out.x0_um = grid.origin_um().x;
    out.view_angle_deg = view_angle_deg;
    for (int k = 0; k < rows; ++k) {
        const double t = t0 + k * g;
        for (int ix = 0; ix < grid.nx(); ++ix) {
            const double x = grid.origin_um().x + ix * g;
            double best = 0.0;
            for (int m = 0; m < samples; ++m) {
                const double r = r_start + m * step;
                const Vec3 p{x, t * st + r * ct, t * ct - r * st};
                best = std::max(best, grid.sample(p));
            }
            out.image.at(ix, k) = to_u16(best);
        }
    }
    return out;
}

Image16 reference_deskew(std::span<const RawFrame> stack, const SheetGeometry& geom, double shear_px,
                         Interpolation interp) {
    geom.validate();
    for (const auto& f : stack) {
        if (f.width() != geom.frame_width_px || f.height() != geom.frame_height_px) {
            throw ParameterError(fmt::format("frame {}x{} inconsistent with geometry {}x{}", f.width(), f.height(),
                                             geom.frame_width_px, geom.frame_height_px));
        }
        if (f.slice_index < 0 || f.slice_index >= geom.slice_count) {
            throw ParameterError(fmt::format("slice index {} out of range", f.slice_index));
        }
    }
    const Extent extent = output_extent(geom, shear_px);
    const int height = geom.frame_height_px;

    // Evaluate every canvas pixel against every frame: the frame row seen at
    // canvas row u is u - offset, interpolated between its two neighbours.
    std::vector<double> canvas(extent.pixel_count(), 0.0);
    for (const auto& f : stack) {
        const double offset = f.slice_index * shear_px;
        for (int u = 0; u < extent.height_px; ++u) {
            double w0 = 0.0, w1 = 0.0;
            std::int64_t r0 = 0;
            if (interp == Interpolation::nearest) {
                r0 = u - std::llround(offset);
                w0 = 1.0;
            } else {
                const SplitOffset split = split_offset(offset);
                r0 = u - split.base;  // weight 1-frac
                w0 = 1.0 - split.frac;
                w1 = split.frac;      // from row r0 - 1
            }
            const bool has0 = r0 >= 0 && r0 < height;
            const bool has1 = r0 - 1 >= 0 && r0 - 1 < height && w1 > 0.0;
            if (!has0 && !has1) continue;
            for (int x = 0; x < extent.width_px; ++x) {
                double v = 0.0;
                if (has0) v += w0 * f.pixels.at(x, static_cast<int>(r0));
                if (has1) v += w1 * f.pixels.at(x, static_cast<int>(r0 - 1));
                auto& dst = canvas[static_cast<std::size_t>(u) * extent.width_px + x];
                dst = std::max(dst, std::round(v));
            }
        }
    }
    Image16 out(extent.width_px, extent.height_px);
    std::transform(canvas.begin(), canvas.end(), out.pixels().begin(),
                   [](double v) { return to_u16(v); });
    return out;
}

}  // namespace skewstream
