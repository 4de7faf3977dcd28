#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "skewstream/bench.hpp"
#include "skewstream/canvas.hpp"
#include "skewstream/clock.hpp"
#include "skewstream/geometry.hpp"
#include "skewstream/phantom.hpp"
#include "skewstream/pipeline.hpp"
#include "skewstream/source.hpp"
#include "skewstream/timings.hpp"
#include "test_support.hpp"

using namespace skewstream;
namespace support = skewstream::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Outcome eq1_suite() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> z_dist(1e-3, 1e3);
    std::uniform_real_distribution<double> a_dist(0.0, 90.0);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const double z = z_dist(rng);
        const double a = a_dist(rng);
        const long double want = static_cast<long double>(z) * std::cos(static_cast<long double>(a) * 3.14159265358979323846264338327950288L / 180.0L);
        const long double got = shear_factor(z, a);
        // Relative to z so the cos -> 0 end is judged on the same scale as the rest.
        worst = std::max(worst, static_cast<double>(std::fabs(got - want) / z));
    }
    const bool analytic = std::abs(shear_factor(1.0, 0.0) - 1.0) <= 1e-12 &&
                          std::abs(shear_factor(1.0, 90.0)) <= 1e-12 &&
                          std::abs(shear_factor(2.0, 60.0) - 1.0) <= 1e-12;
    const double elapsed = seconds_since(t0);
    return {worst <= 1e-12 && analytic && elapsed < 1.0,
            fmt::format("worst relative error {:.2e} (tol 1e-12), analytic cases {}, {:.3f} s (limit 1 s)", worst,
                        analytic ? "exact" : "WRONG", elapsed)};
}

Outcome native_angle_identity() {
    double worst_angle = 0.0, worst_warp = 0.0;
    for (int a = 5; a <= 85; a += 5) {
        SheetGeometry g;
        g.alpha_deg = a;
        g.scan_step_um = 0.3;
        g.pixel_pitch_um = 0.115;
        g.slice_count = 50;
        const double s0 = native_shear_px(g);
        worst_angle = std::max(worst_angle, std::abs(view_angle_from_shear(s0, g) - (90.0 - a)));
        worst_warp = std::max(worst_warp, std::abs(warp_factor(s0, g, g.pixel_pitch_um) - 1.0));
    }
    return {worst_angle <= 1e-9 && worst_warp <= 1e-9,
            fmt::format("alpha 5..85: max |theta - (90 - alpha)| {:.2e} deg, max |w - 1| {:.2e} (tol 1e-9)",
                        worst_angle, worst_warp)};
}

Outcome oracle_equivalence() {
    const auto t0 = Clock::now();
    const auto c = support::make_oracle_case();
    const double alpha = c.geometry.alpha_deg;
    std::string detail;
    bool pass = true;
    for (double theta : {0.0, 30.0, 90.0 - alpha, 80.0}) {
        const double rms = support::compare_with_oracle(c, theta).rms_fraction();
        pass = pass && rms < 0.02;
        detail += fmt::format("theta {:g}: {:.2f}%  ", theta, 100.0 * rms);
    }
    const double elapsed = seconds_since(t0);
    return {pass && elapsed < 60.0, fmt::format("{}(tol 2% of peak), {:.1f} s (limit 60 s)", detail, elapsed)};
}

Outcome streaming_equals_batch() {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> wh(1, 32), n_dist(1, 16);
    std::uniform_real_distribution<double> s_dist(0.0, 4.0);
    int identical = 0;
    for (int trial = 0; trial < 50; ++trial) {
        SheetGeometry g;
        g.frame_width_px = wh(rng);
        g.frame_height_px = wh(rng);
        g.slice_count = n_dist(rng);
        const double shear = s_dist(rng);
        auto stack = support::random_stack(rng, g.frame_width_px, g.frame_height_px, g.slice_count, trial);
        const Image16 batch = reference_deskew(stack, g, shear, Interpolation::nearest);
        std::shuffle(stack.begin(), stack.end(), rng);
        GlobalAccumulator acc(g, shear, Interpolation::nearest);
        for (const auto& f : stack) acc.place(f);
        if (acc.finalize().pixels == batch) ++identical;
    }
    return {identical == 50, fmt::format("{}/50 randomized stacks bit-identical (W,H <= 32, N <= 16, shuffled order)",
                                         identical)};
}

std::vector<DisplayImage> run_mode(UpdateMode mode, const PhantomScene& scene, const SheetGeometry& g, int sweeps) {
    VirtualClock clock;
    SimulatedCamera camera(scene, g, CameraTiming{}, clock,
                           {.pacing = Pacing::as_fast_as_possible, .frame_limit = sweeps * g.slice_count});
    PipelineConfig config;
    config.geometry = g;
    config.mode = mode;
    Pipeline pipeline(config);
    std::vector<DisplayImage> out;
    pipeline.run_deterministic(camera, [&](const DisplayImage& d) { out.push_back(d); });
    return out;
}

Outcome rolling_equals_global() {
    SheetGeometry g;
    g.alpha_deg = 30.0;
    g.pixel_pitch_um = 0.2;
    g.scan_step_um = 0.45;
    g.slice_count = 24;
    g.frame_width_px = 48;
    g.frame_height_px = 40;
    const auto scene = default_scene(g);
    constexpr int sweeps = 3;
    const auto global = run_mode(UpdateMode::global, scene, g, sweeps);
    const auto rolling = run_mode(UpdateMode::rolling, scene, g, sweeps);
    int compared = 0, equal = 0;
    for (const auto& r : rolling) {
        if (r.slice_index != g.slice_count - 1) continue;
        for (const auto& gl : global) {
            if (gl.sweep_index != r.sweep_index) continue;
            ++compared;
            if (gl.pixels == r.pixels) ++equal;
        }
    }

    // Accumulator level, nearest and linear, on random static stacks.
    std::mt19937_64 rng(11);
    int acc_checks = 0, acc_equal = 0;
    for (auto interp : {Interpolation::nearest, Interpolation::linear}) {
        for (int trial = 0; trial < 10; ++trial) {
            SheetGeometry sg;
            sg.frame_width_px = 9 + trial;
            sg.frame_height_px = 7;
            sg.slice_count = 6 + trial % 4;
            const double shear = 0.37 * (trial + 1);
            const auto stack = support::random_stack(rng, sg.frame_width_px, sg.frame_height_px, sg.slice_count);
            GlobalAccumulator glob(sg, shear, interp);
            for (const auto& f : stack) glob.place(f);
            const Image16 want = glob.finalize().pixels;
            RollingAccumulator roll(sg, shear, interp);
            for (int sweep = 0; sweep < 3; ++sweep) {
                for (auto f : stack) {
                    f.sweep_index = sweep;
                    roll.replace(f);
                }
                ++acc_checks;
                if (roll.canvas().pixels() == want) ++acc_equal;
            }
        }
    }
    return {compared == sweeps && equal == compared && acc_equal == acc_checks,
            fmt::format("pipeline: {}/{} completed sweeps identical; accumulators: {}/{} identical", equal, compared,
                        acc_equal, acc_checks)};
}

Outcome sphere_isotropy() {
    SheetGeometry g;
    g.alpha_deg = 30.0;
    g.pixel_pitch_um = 0.2;
    g.scan_step_um = 0.4;
    g.slice_count = 48;
    g.frame_width_px = 64;
    g.frame_height_px = 64;
    const double sin_a = std::sin(deg_to_rad(g.alpha_deg));
    const double depth = (g.frame_height_px - 1) * g.pixel_pitch_um * sin_a;
    const double y_lo = depth / std::tan(deg_to_rad(g.alpha_deg));
    const double y_hi = (g.slice_count - 1) * g.scan_step_um;
    PhantomScene scene;
    scene.extent_um = {{0, 0, 0}, {(g.frame_width_px - 1) * g.pixel_pitch_um, y_hi + depth, depth}};
    Primitive sphere;
    sphere.kind = PrimitiveKind::sphere;
    sphere.center_um = {0.5 * scene.extent_um.max.x, 0.5 * (y_lo + y_hi), 0.5 * depth};
    sphere.radius_um = 2.5;
    sphere.edge_um = 0.2;
    sphere.intensity = 30000;
    scene.primitives.push_back(sphere);

    PipelineConfig config;
    config.geometry = g;
    Pipeline pipeline(config);
    VectorSource source(render_stack(scene, g), g);
    std::optional<DisplayImage> shown;
    pipeline.run_deterministic(source, [&](const DisplayImage& d) { shown = d; });
    if (!shown) return {false, "no emission"};
    const double ratio = support::image_moments(shown->pixels, 0.5).axis_ratio();
    return {std::abs(ratio - 1.0) <= 0.02,
            fmt::format("axis ratio {:.4f} at native shear {:.3f} px, view {:.1f} deg (tol 1 +/- 0.02)", ratio,
                        native_shear_px(g), shown->view_angle_deg)};
}

Outcome headline_rate() {
    SheetGeometry g;
    g.alpha_deg = 30.0;
    g.pixel_pitch_um = 0.115;
    g.scan_step_um = 0.4;
    g.slice_count = 50;
    g.frame_width_px = 1304;
    g.frame_height_px = 87;
    const CameraTiming timing{0.1, 1.5};
    VirtualClock clock;
    SimulatedCamera camera(default_scene(g), g, timing, clock,
                           {.pacing = Pacing::as_fast_as_possible, .frame_limit = 20 * g.slice_count});
    PipelineConfig config;
    config.geometry = g;
    Pipeline pipeline(config);
    const auto t = pipeline.run_deterministic(camera, [](const DisplayImage&) {});
    std::vector<StageTimings> history;
    for (const auto& r : pipeline.history()) history.push_back(r.timings);
    const auto report = classify_bottleneck(history);
    const bool pass = std::abs(t.volumes_per_s - 12.5) <= 0.2 &&
                      report.stage == Bottleneck::acquisition_limited && report.lag_bounded;
    return {pass, fmt::format("{:.3f} volumes/s (12.5 +/- 0.2), {}, lag slope {:.4f} ms/stack (bounded: {})",
                              t.volumes_per_s, to_string(report.stage), report.lag_slope_ms_per_stack,
                              report.lag_bounded)};
}

Outcome dependency_table() {
    BenchSettings s;
    s.geometry.alpha_deg = 30.0;
    s.geometry.pixel_pitch_um = 0.115;
    s.geometry.slice_count = 50;
    s.geometry.frame_width_px = 256;
    s.geometry.frame_height_px = 87;
    s.timing = {0.1, 1.5};
    s.repeats = 12;
    const auto report = run_bench(s);
    std::fputs(report.render_table().c_str(), stdout);
    for (const auto& c : report.cells) {
        std::printf("      %-8s %-11s tau %+.2f spread %.3f band %.3f %s\n", std::string(to_string(c.axis)).c_str(),
                    c.stage.c_str(), c.kendall_tau, c.relative_spread, c.noise_band, c.measured.c_str());
    }
    int passed = 0;
    for (const auto& c : report.cells) passed += c.pass;
    std::string crossover = "crossover not established";
    if (report.crossovers.size() == 2) {
        const auto show = [](const CrossoverResult& c) {
            return c.canvas_mp ? fmt::format("{:.2f} MP", *c.canvas_mp) : std::string("beyond search");
        };
        crossover = fmt::format("crossover {} ms: {} vs {} ms: {}", report.crossovers[0].exposure_ms,
                                show(report.crossovers[0]), report.crossovers[1].exposure_ms,
                                show(report.crossovers[1]));
    }
    return {report.table_passed() && report.crossover_ordered,
            fmt::format("{}/9 cells (tau > 0.9 increasing, spread within max(0.2, 2x stack noise) invariant); {} "
                        "(ordering {})",
                        passed, crossover, report.crossover_ordered ? "holds" : "violated")};
}

Outcome bottleneck_regimes() {
    struct Case {
        double acq, proc, plot;
        Bottleneck want;
        double slope;  // expected lag growth per stack
    };
    const Case cases[] = {
        {80.0, 20.0, 10.0, Bottleneck::acquisition_limited, 0.0},
        {20.0, 80.0, 10.0, Bottleneck::processing_limited, 60.0},
        {20.0, 10.0, 80.0, Bottleneck::plotting_limited, 60.0},
    };
    bool pass = true;
    std::string detail;
    for (const auto& c : cases) {
        const auto r = classify_bottleneck(simulate_stage_queue(c.acq, c.proc, c.plot, 20, 50));
        const bool ok = r.stage == c.want && std::abs(r.lag_slope_ms_per_stack - c.slope) <= 1e-6 &&
                        r.lag_bounded == (c.slope == 0.0);
        pass = pass && ok;
        detail += fmt::format("({:g},{:g},{:g}) -> {} slope {:.2f}; ", c.acq, c.proc, c.plot, to_string(r.stage),
                              r.lag_slope_ms_per_stack);
    }
    return {pass, detail};
}

Outcome unit_conversion() {
    SheetGeometry g;
    g.alpha_deg = 30.0;
    g.pixel_pitch_um = 0.115;
    g.slice_count = 50;
    g.frame_width_px = 1304;
    g.frame_height_px = 87;
    const double implied_shear = (3652.0 - 87.0) / 49.0;
    const Extent e = output_extent(g, implied_shear);
    const auto phys = physical_extent(e, g.pixel_pitch_um);
    const bool pass = e.height_px == 3652 && e.width_px == 1304 && std::abs(phys.height_um - 420.0) <= 0.1 &&
                      std::abs(phys.width_um - 150.0) <= 0.1;
    return {pass, fmt::format("{}x{} px at 0.115 um -> {:.2f} x {:.2f} um (tol 0.1 um)", e.height_px, e.width_px,
                              phys.height_um, phys.width_um)};
}

Outcome galvo_sync() {
    SheetGeometry g;
    g.slice_count = 50;
    bool pass = true;
    int checks = 0;
    for (double readout : {0.5, 1.5, 3.0}) {
        const CameraTiming timing{0.1, readout};
        const auto sched = schedule(timing, g);
        for (double f : {0.0, 0.25, 0.5, 1.0, 1.01, 1.5, 3.0}) {
            const double settle = readout * f;
            const auto r = validate_settle(sched, settle);
            const bool ok = settle <= readout ? r.pass && r.violations.empty()
                                              : !r.pass && r.violations.size() == std::size_t(g.slice_count - 1);
            pass = pass && ok;
            ++checks;
        }
    }
    return {pass, fmt::format("{} settle/readout combinations: pass iff settle <= readout, otherwise all {} gaps "
                              "flagged",
                              checks, g.slice_count - 1)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"shear factor", eq1_suite},
        {"native-angle identity", native_angle_identity},
        {"oracle equivalence", oracle_equivalence},
        {"streaming equals batch", streaming_equals_batch},
        {"rolling equals global", rolling_equals_global},
        {"sphere isotropy", sphere_isotropy},
        {"headline rate", headline_rate},
        {"stage dependency table", dependency_table},
        {"bottleneck regimes", bottleneck_regimes},
        {"unit conversion", unit_conversion},
        {"galvo sync", galvo_sync},
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, fmt::format("exception: {}", e.what())};
        }
        failures += !o.pass;
        std::printf("%s  %-24s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
