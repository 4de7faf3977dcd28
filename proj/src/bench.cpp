#include "skewstream/bench.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "skewstream/clock.hpp"
#include "skewstream/error.hpp"
#include "skewstream/packet.hpp"
#include "skewstream/phantom.hpp"
#include "skewstream/pipeline.hpp"

namespace skewstream {

namespace {

constexpr const char* kStages[] = {"acquisition", "processing", "plotting"};

double stage_time(const StageTimings& t, std::string_view stage) {
    if (stage == "acquisition") return t.acquisition_ms;
    if (stage == "processing") return t.processing_ms;
    return t.plotting_ms;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double relative_spread(std::span<const double> v) {
    if (v.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double mid = median({v.begin(), v.end()});
    if (mid <= 0.0) return *hi > *lo ? INFINITY : 0.0;
    return (*hi - *lo) / mid;
}

double swept_value(const BenchPoint& p) {
    switch (p.axis) {
        case BenchAxis::exposure: return p.exposure_ms;
        case BenchAxis::slices: return p.slices;
        case BenchAxis::fov: return p.fov_um;
    }
    return 0.0;
}

}  // namespace

std::string_view to_string(BenchAxis axis) noexcept {
    switch (axis) {
        case BenchAxis::exposure: return "exposure";
        case BenchAxis::slices: return "slices";
        case BenchAxis::fov: return "fov";
    }
    return "?";
}

void BenchSettings::validate() const {
    geometry_for(geometry.slice_count, fov_um).validate();
    timing.validate();
    if (stacks < 4) throw ParameterError(fmt::format("bench needs at least 4 stacks per run, got {}", stacks));
    if (repeats < 1) throw ParameterError(fmt::format("bench repeats must be >= 1, got {}", repeats));
    for (double e : exposures_ms) {
        CameraTiming t = timing;
        t.exposure_ms = e;
        t.validate();
    }
    for (int n : slice_counts) geometry_for(n, fov_um).validate();
    for (double f : fovs_um) geometry_for(geometry.slice_count, f).validate();
    for (double e : crossover_exposures_ms) {
        CameraTiming t = timing;
        t.exposure_ms = e;
        t.readout_ms = crossover_readout_ms;
        t.validate();
    }
    if (!(crossover_fov_start_um > 0.0)) {
        throw ParameterError(fmt::format("crossover_fov_start_um must be positive, got {}", crossover_fov_start_um));
    }
    if (!(crossover_fov_growth > 1.0)) {
        throw ParameterError(fmt::format("crossover_fov_growth must exceed 1, got {}", crossover_fov_growth));
    }
    if (crossover_max_points < 1) {
        throw ParameterError(fmt::format("crossover_max_points must be >= 1, got {}", crossover_max_points));
    }
}

SheetGeometry BenchSettings::geometry_for(int slices, double fov) const {
    if (slices < 2) throw ParameterError(fmt::format("bench needs at least 2 slices, got {}", slices));
    if (!(fov > 0.0) || !std::isfinite(fov)) throw ParameterError(fmt::format("fov_um must be positive, got {}", fov));
    SheetGeometry g = geometry;
    g.slice_count = slices;
    g.scan_step_um = fov / (slices - 1);
    return g;
}

BenchProbe::BenchProbe(const BenchSettings& settings, const SheetGeometry& geom, const CameraTiming& timing)
    : geom_(geom),
      timing_(timing),
      stacks_per_run_(settings.stacks),
      interp_(settings.interp),
      noise_seed_(settings.noise_seed),
      scene_(default_scene(geom)) {
    timing.validate();
}

void BenchProbe::run_once() {
    VirtualClock clock;
    SimulatedCameraOptions options;
    options.pacing = Pacing::as_fast_as_possible;
    options.noise_seed = noise_seed_;
    SimulatedCamera camera(scene_, geom_, timing_, clock, options);
    PipelineConfig config;
    config.geometry = geom_;
    config.interp = interp_;
    Pipeline pipeline(config);

    // Plotting: conversion to the 8-bit display packet a viewer would draw.
    std::size_t sink_bytes = 0;
    const FrameSink sink = [&](const DisplayImage& img) {
        display_width_ = img.pixels.width();
        display_height_ = img.pixels.height();
        sink_bytes += encode_frame_packet(img, PixelFormat::gray8).size();
    };
    RunLimits limits;
    limits.max_frames = std::int64_t{stacks_per_run_} * geom_.slice_count;
    pipeline.run_deterministic(camera, sink, limits);
    const auto history = pipeline.history();
    if (history.size() < 2) throw InsufficientDataError("bench run emitted fewer than two stacks");
    for (std::size_t k = 1; k < history.size(); ++k) stacks_.push_back(history[k].timings);
}

BenchPoint BenchProbe::summary(BenchAxis axis, double value) const {
    if (stacks_.empty()) throw InsufficientDataError("bench point has no runs");
    BenchPoint point;
    point.axis = axis;
    point.value = value;
    point.exposure_ms = timing_.exposure_ms;
    point.readout_ms = timing_.readout_ms;
    point.slices = geom_.slice_count;
    point.scan_step_um = geom_.scan_step_um;
    point.fov_um = geom_.scan_step_um * (geom_.slice_count - 1);
    point.display_width = display_width_;
    point.display_height = display_height_;
    point.stacks = stacks_;
    std::vector<double> lag;
    point.timings = stacks_.front();
    for (const auto& t : stacks_) {
        point.timings.acquisition_ms = std::min(point.timings.acquisition_ms, t.acquisition_ms);
        point.timings.processing_ms = std::min(point.timings.processing_ms, t.processing_ms);
        point.timings.plotting_ms = std::min(point.timings.plotting_ms, t.plotting_ms);
        lag.push_back(t.lag_ms);
    }
    point.timings.lag_ms = median(lag);
    const std::vector<StageTimings> steady(3, point.timings);
    point.bottleneck = classify_bottleneck(steady).stage;
    return point;
}

BenchPoint measure_point(const BenchSettings& settings, const SheetGeometry& geom, const CameraTiming& timing) {
    BenchProbe probe(settings, geom, timing);
    for (int r = 0; r < settings.repeats; ++r) probe.run_once();
    return probe.summary(BenchAxis::fov, geom.scan_step_um * (geom.slice_count - 1));
}

double relative_mad(std::span<const double> values) {
    const double mid = median({values.begin(), values.end()});
    if (mid <= 0.0) return 0.0;
    std::vector<double> dev;
    for (double v : values) dev.push_back(std::abs(v - mid));
    return median(dev) / mid;
}

double kendall_tau(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) {
        throw ParameterError(fmt::format("kendall_tau needs equal lengths, got {} and {}", xs.size(), ys.size()));
    }
    long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = i + 1; j < xs.size(); ++j) {
            const double dx = xs[j] - xs[i];
            const double dy = ys[j] - ys[i];
            if (dx == 0.0 && dy == 0.0) continue;
            if (dx == 0.0) {
                ++ties_x;
            } else if (dy == 0.0) {
                ++ties_y;
            } else if ((dx > 0) == (dy > 0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const double denom = std::sqrt(double(concordant + discordant + ties_x) * double(concordant + discordant + ties_y));
    return denom > 0.0 ? double(concordant - discordant) / denom : 0.0;
}

std::string_view expected_trend(BenchAxis axis, std::string_view stage) {
    const bool acq = stage == "acquisition";
    const bool proc = stage == "processing";
    const bool plot = stage == "plotting";
    if (!acq && !proc && !plot) throw ParameterError(fmt::format("unknown stage '{}'", stage));
    switch (axis) {
        case BenchAxis::exposure: return acq ? "increasing" : "invariant";
        case BenchAxis::slices: return plot ? "invariant" : "increasing";
        case BenchAxis::fov: return acq ? "invariant" : "increasing";
    }
    return "invariant";
}

BenchCell classify_cell(BenchAxis axis, std::string_view stage, std::span<const double> swept,
                        std::span<const double> times, double noise) {
    BenchCell cell;
    cell.axis = axis;
    cell.stage = std::string(stage);
    cell.expected = std::string(expected_trend(axis, stage));
    cell.kendall_tau = kendall_tau(swept, times);
    cell.relative_spread = relative_spread(times);
    cell.noise_band = std::max(0.2, 2.0 * noise);
    if (cell.relative_spread <= cell.noise_band) {
        cell.measured = "invariant";
    } else if (cell.kendall_tau > 0.9) {
        cell.measured = "increasing";
    } else {
        cell.measured = "varying";
    }
    cell.pass = cell.measured == cell.expected;
    return cell;
}

std::vector<BenchCell> classify_table(std::span<const BenchPoint> points) {
    std::vector<BenchCell> cells;
    for (BenchAxis axis : {BenchAxis::exposure, BenchAxis::slices, BenchAxis::fov}) {
        std::vector<const BenchPoint*> sweep;
        for (const auto& p : points) {
            if (p.axis == axis) sweep.push_back(&p);
        }
        if (sweep.empty()) continue;
        for (const char* stage : kStages) {
            std::vector<double> xs, ys, spreads;
            for (const auto* p : sweep) {
                xs.push_back(swept_value(*p));
                ys.push_back(stage_time(p->timings, stage));
                std::vector<double> samples;
                for (const auto& t : p->stacks) samples.push_back(stage_time(t, stage));
                spreads.push_back(relative_mad(samples));
            }
            cells.push_back(classify_cell(axis, stage, xs, ys, median(spreads)));
        }
    }
    return cells;
}

CrossoverResult find_crossover(const BenchSettings& settings, double exposure_ms) {
    CrossoverResult result;
    result.exposure_ms = exposure_ms;
    CameraTiming timing = settings.timing;
    timing.exposure_ms = exposure_ms;
    timing.readout_ms = settings.crossover_readout_ms;
    double fov = settings.crossover_fov_start_um;
    for (int k = 0; k < settings.crossover_max_points; ++k, fov *= settings.crossover_fov_growth) {
        auto point = measure_point(settings, settings.geometry_for(settings.geometry.slice_count, fov), timing);
        point.axis = BenchAxis::fov;
        point.value = fov;
        const bool limited_elsewhere = point.bottleneck != Bottleneck::acquisition_limited;
        result.points.push_back(std::move(point));
        if (limited_elsewhere) {
            result.canvas_mp = result.points.back().canvas_mp();
            result.fov_um = fov;
            break;
        }
    }
    return result;
}

BenchReport run_bench(const BenchSettings& settings, bool with_crossover) {
    settings.validate();
    BenchReport report;
    report.settings = settings;
    const int n = settings.geometry.slice_count;
    struct Planned {
        BenchAxis axis;
        double value;
        std::unique_ptr<BenchProbe> probe;
    };
    std::vector<Planned> plan;
    for (double e : settings.exposures_ms) {
        CameraTiming t = settings.timing;
        t.exposure_ms = e;
        plan.push_back({BenchAxis::exposure, e, std::make_unique<BenchProbe>(settings, settings.geometry_for(n, settings.fov_um), t)});
    }
    for (int slices : settings.slice_counts) {
        plan.push_back({BenchAxis::slices, double(slices),
                        std::make_unique<BenchProbe>(settings, settings.geometry_for(slices, settings.fov_um), settings.timing)});
    }
    for (double f : settings.fovs_um) {
        plan.push_back({BenchAxis::fov, f, std::make_unique<BenchProbe>(settings, settings.geometry_for(n, f), settings.timing)});
    }
    // Round-robin over points so slow drifts in machine speed hit every point alike.
    for (int r = 0; r < settings.repeats; ++r) {
        for (auto& p : plan) p.probe->run_once();
    }
    for (const auto& p : plan) report.points.push_back(p.probe->summary(p.axis, p.value));
    report.cells = classify_table(report.points);

    if (with_crossover) {
        auto exposures = settings.crossover_exposures_ms;
        std::sort(exposures.begin(), exposures.end());
        for (double e : exposures) report.crossovers.push_back(find_crossover(settings, e));
        // A higher exposure must cross over later; one that never crosses within
        // the search counts as larger than any measured crossover.
        report.crossover_ordered = report.crossovers.size() >= 2 && report.crossovers.front().canvas_mp.has_value();
        for (std::size_t k = 1; k < report.crossovers.size() && report.crossover_ordered; ++k) {
            const auto& lo = report.crossovers[k - 1].canvas_mp;
            const auto& hi = report.crossovers[k].canvas_mp;
            if (!lo || (hi && !(*hi > *lo))) report.crossover_ordered = false;
        }
    }
    return report;
}

bool BenchReport::table_passed() const noexcept {
    return cells.size() == 9 && std::all_of(cells.begin(), cells.end(), [](const BenchCell& c) { return c.pass; });
}

std::string BenchReport::render_table() const {
    std::string out = fmt::format("{:<24}{:<14}{:<14}{:<14}\n", "sweep", "acquisition", "processing", "plotting");
    for (BenchAxis axis : {BenchAxis::exposure, BenchAxis::slices, BenchAxis::fov}) {
        std::string row;
        for (const char* stage : kStages) {
            for (const auto& c : cells) {
                if (c.axis == axis && c.stage == stage) {
                    row += fmt::format("{:<14}", c.measured + (c.pass ? "" : "*"));
                }
            }
        }
        if (row.empty()) continue;
        const char* label = axis == BenchAxis::exposure ? "increasing exposure"
                            : axis == BenchAxis::slices ? "increasing N"
                                                        : "increasing scan FOV";
        out += fmt::format("{:<24}{}\n", label, row);
    }
    for (const auto& c : crossovers) {
        out += c.canvas_mp ? fmt::format("crossover at exposure {} ms: {:.2f} MP (fov {:.1f} um)\n", c.exposure_ms,
                                         *c.canvas_mp, *c.fov_um)
                           : fmt::format("crossover at exposure {} ms: not reached\n", c.exposure_ms);
    }
    return out;
}

void to_json(nlohmann::json& j, const BenchSettings& s) {
    j = {{"geometry",
          {{"alpha_deg", s.geometry.alpha_deg},
           {"pixel_pitch_um", s.geometry.pixel_pitch_um},
           {"slice_count", s.geometry.slice_count},
           {"frame_width_px", s.geometry.frame_width_px},
           {"frame_height_px", s.geometry.frame_height_px}}},
         {"timing",
          {{"exposure_ms", s.timing.exposure_ms},
           {"readout_ms", s.timing.readout_ms},
           {"trigger", to_string(s.timing.trigger_mode)}}},
         {"fov_um", s.fov_um},
         {"interp", to_string(s.interp)},
         {"stacks", s.stacks},
         {"repeats", s.repeats},
         {"noise_seed", s.noise_seed ? nlohmann::json(*s.noise_seed) : nlohmann::json(nullptr)},
         {"exposures_ms", s.exposures_ms},
         {"slice_counts", s.slice_counts},
         {"fovs_um", s.fovs_um},
         {"crossover",
          {{"exposures_ms", s.crossover_exposures_ms},
           {"readout_ms", s.crossover_readout_ms},
           {"fov_start_um", s.crossover_fov_start_um},
           {"fov_growth", s.crossover_fov_growth},
           {"max_points", s.crossover_max_points}}}};
}

void to_json(nlohmann::json& j, const BenchPoint& p) {
    j = {{"axis", to_string(p.axis)},
         {"value", p.value},
         {"exposure_ms", p.exposure_ms},
         {"readout_ms", p.readout_ms},
         {"slices", p.slices},
         {"fov_um", p.fov_um},
         {"scan_step_um", p.scan_step_um},
         {"display", {{"width", p.display_width}, {"height", p.display_height}}},
         {"canvas_mp", p.canvas_mp()},
         {"timings", p.timings},
         {"stacks", p.stacks},
         {"bottleneck", to_string(p.bottleneck)}};
}

void to_json(nlohmann::json& j, const BenchReport& r) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells) {
        cells.push_back({{"sweep", to_string(c.axis)},
                         {"stage", c.stage},
                         {"expected", c.expected},
                         {"measured", c.measured},
                         {"kendall_tau", c.kendall_tau},
                         {"relative_spread", c.relative_spread},
                         {"noise_band", c.noise_band},
                         {"pass", c.pass}});
    }
    nlohmann::json crossovers = nlohmann::json::array();
    for (const auto& c : r.crossovers) {
        crossovers.push_back({{"exposure_ms", c.exposure_ms},
                              {"canvas_mp", c.canvas_mp ? nlohmann::json(*c.canvas_mp) : nlohmann::json(nullptr)},
                              {"fov_um", c.fov_um ? nlohmann::json(*c.fov_um) : nlohmann::json(nullptr)},
                              {"points", c.points}});
    }
    j = {{"schema", "skewstream.bench_report/1"},
         {"settings", r.settings},
         {"points", r.points},
         {"cells", cells},
         {"table_passed", r.table_passed()},
         {"crossovers", crossovers},
         {"crossover_ordered", r.crossover_ordered}};
}

}  // namespace skewstream
