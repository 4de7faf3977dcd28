#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skewstream/geometry.hpp"
#include "skewstream/phantom.hpp"
#include "skewstream/source.hpp"
#include "skewstream/timings.hpp"
#include "skewstream/warp.hpp"

namespace skewstream {

enum class BenchAxis { exposure, slices, fov };

std::string_view to_string(BenchAxis axis) noexcept;

/// Benchmark of the simulated end-to-end system.
///
/// Acquisition runs on a virtual clock; processing and plotting are measured
/// wall time. The scan-axis FOV is the distance between the first and last
/// slice, so the scan step is fov_um / (N - 1) and sweeping N at fixed FOV
/// leaves the canvas unchanged.
struct BenchSettings {
    SheetGeometry geometry;  // scan_step_um is derived from fov_um
    CameraTiming timing;
    double fov_um = 320.0;
    Interpolation interp = Interpolation::linear;
    /// Stacks per run; the first is a warm-up and not counted.
    int stacks = 4;
    /// Runs per sweep point; a stage time is its best run.
    int repeats = 12;
    /// Per-frame Poisson noise; without a seed each slice is rendered once and reused.
    std::optional<std::uint64_t> noise_seed;

    std::vector<double> exposures_ms{0.1, 0.2, 0.5, 1.0, 2.0};
    std::vector<int> slice_counts{10, 20, 30, 40, 50};
    std::vector<double> fovs_um{320.0, 640.0, 1280.0, 2560.0, 5120.0};

    /// Crossover search: FOV grows geometrically until the run stops being
    /// acquisition-limited, once per exposure.
    std::vector<double> crossover_exposures_ms{0.1, 0.5};
    double crossover_readout_ms = 0.05;
    double crossover_fov_start_um = 20.0;
    double crossover_fov_growth = 1.5;
    int crossover_max_points = 14;

    void validate() const;
    SheetGeometry geometry_for(int slices, double fov_um) const;
};

struct BenchPoint {
    BenchAxis axis = BenchAxis::exposure;
    double value = 0.0;
    double exposure_ms = 0.0;
    double readout_ms = 0.0;
    int slices = 0;
    double fov_um = 0.0;
    double scan_step_um = 0.0;
    int display_width = 0;
    int display_height = 0;
    /// Per stage, the fastest counted stack over all runs; lag is the median.
    StageTimings timings;
    /// Every counted stack of every run.
    std::vector<StageTimings> stacks;
    Bottleneck bottleneck = Bottleneck::acquisition_limited;

    double canvas_mp() const noexcept { return double(display_width) * display_height * 1e-6; }
};

struct BenchCell {
    BenchAxis axis = BenchAxis::exposure;
    std::string stage;
    std::string expected;
    std::string measured;  // increasing | invariant | varying
    double kendall_tau = 0.0;
    double relative_spread = 0.0;
    double noise_band = 0.0;
    bool pass = false;
};

struct CrossoverResult {
    double exposure_ms = 0.0;
    std::optional<double> canvas_mp;
    std::optional<double> fov_um;
    std::vector<BenchPoint> points;
};

struct BenchReport {
    BenchSettings settings;
    std::vector<BenchPoint> points;
    std::vector<BenchCell> cells;
    std::vector<CrossoverResult> crossovers;
    /// Each higher exposure reaches its crossover at a larger canvas.
    bool crossover_ordered = false;

    bool table_passed() const noexcept;
    std::string render_table() const;
};

void to_json(nlohmann::json& j, const BenchSettings& s);
void to_json(nlohmann::json& j, const BenchPoint& p);
void to_json(nlohmann::json& j, const BenchReport& r);

/// One benchmark configuration: a simulated camera on a virtual clock feeding
/// a deterministic pipeline whose output is encoded as an 8-bit display packet.
class BenchProbe {
public:
    BenchProbe(const BenchSettings& settings, const SheetGeometry& geom, const CameraTiming& timing);
    BenchProbe(const BenchProbe&) = delete;
    BenchProbe& operator=(const BenchProbe&) = delete;

    /// One run of settings.stacks stacks on a freshly built camera and
    /// pipeline; the warm-up stack is dropped.
    void run_once();
    BenchPoint summary(BenchAxis axis, double value) const;

private:
    SheetGeometry geom_;
    CameraTiming timing_;
    int stacks_per_run_;
    Interpolation interp_;
    std::optional<std::uint64_t> noise_seed_;
    PhantomScene scene_;
    std::vector<StageTimings> stacks_;
    int display_width_ = 0;
    int display_height_ = 0;
};

/// Runs one configuration `repeats` times and summarizes it.
BenchPoint measure_point(const BenchSettings& settings, const SheetGeometry& geom, const CameraTiming& timing);

/// Increasing, invariant or varying, from the medians of a sweep.
/// Invariant iff the relative spread (max - min) / median of the sweep stays
/// within max(0.2, 2 x noise); increasing iff Kendall's tau against the swept
/// value exceeds 0.9 and the spread is outside that band. `noise` is the
/// stack-to-stack relative dispersion at a single point.
BenchCell classify_cell(BenchAxis axis, std::string_view stage, std::span<const double> swept,
                        std::span<const double> times, double noise);

/// Median absolute deviation over median.
double relative_mad(std::span<const double> values);

std::vector<BenchCell> classify_table(std::span<const BenchPoint> points);

CrossoverResult find_crossover(const BenchSettings& settings, double exposure_ms);

BenchReport run_bench(const BenchSettings& settings, bool with_crossover = true);

/// Kendall's tau-b.
double kendall_tau(std::span<const double> xs, std::span<const double> ys);

/// Expected dependence of a stage time on a swept parameter.
std::string_view expected_trend(BenchAxis axis, std::string_view stage);

}  // namespace skewstream
