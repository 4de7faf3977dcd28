#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <csignal>
#include <fstream>
#include <mutex>
#include <ostream>
#include <stop_token>
#include <thread>

#include <fmt/format.h>

#include "cli.hpp"
#include "skewstream/channels.hpp"
#include "skewstream/control.hpp"
#include "skewstream/error.hpp"
#include "skewstream/phantom.hpp"
#include "skewstream/pipeline.hpp"
#include "skewstream/server.hpp"

namespace fs = std::filesystem;

namespace skewstream::cli {

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

/// "native" or a number of degrees.
std::optional<double> parse_angle(const std::string& text) {
    if (text == "native") return std::nullopt;
    double value = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ParameterError(fmt::format("view angle must be a number of degrees or 'native', got '{}'", text));
    }
    return value;
}

std::string angle_label(const std::string& text) {
    const auto angle = parse_angle(text);
    return angle ? fmt::format("{:g}deg", *angle) : "native";
}

std::optional<double> shear_for(const std::string& angle, const SheetGeometry& region) {
    const auto deg = parse_angle(angle);
    if (!deg) return std::nullopt;
    return shear_from_view_angle(*deg, region);
}

ChannelLayout layout_for(int frame_width, int frame_height, int channels) {
    return channels == 1 ? ChannelLayout::single(frame_width, frame_height)
                         : ChannelLayout::side_by_side(frame_width, frame_height, channels);
}

SheetGeometry region_geometry(SheetGeometry camera, const ChannelLayout& layout) {
    camera.frame_width_px = layout.regions.front().width;
    camera.frame_height_px = layout.regions.front().height;
    return camera;
}

nlohmann::json geometry_json(const SheetGeometry& g) {
    return {{"alpha_deg", g.alpha_deg},       {"scan_step_um", g.scan_step_um},
            {"pixel_pitch_um", g.pixel_pitch_um}, {"slice_count", g.slice_count},
            {"width", g.frame_width_px},      {"height", g.frame_height_px}};
}

std::vector<fs::path> input_files(const fs::path& input) {
    std::vector<fs::path> files;
    if (fs::is_regular_file(input)) {
        files.push_back(input);
    } else if (fs::is_directory(input)) {
        for (const auto& e : fs::directory_iterator(input)) {
            if (e.is_regular_file()) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
    }
    for (const auto& candidate : sidecar_candidates(input)) {
        if (fs::is_regular_file(candidate) &&
            std::find(files.begin(), files.end(), candidate) == files.end()) {
            files.push_back(candidate);
        }
    }
    return files;
}

PhantomScene scene_for(const RunConfig& c, const SheetGeometry& geom) {
    return c.scene_file ? load_scene(*c.scene_file) : default_scene(geom);
}

std::vector<ChannelScene> side_by_side_scenes(const PhantomScene& scene, const SheetGeometry& geom, int channels) {
    if (channels < 1) throw ParameterError(fmt::format("channel count must be >= 1, got {}", channels));
    std::vector<ChannelScene> scenes;
    for (int k = 0; k < channels; ++k) scenes.push_back({scene, k * geom.frame_width_px, 0});
    return scenes;
}

}  // namespace

int run_batch(const RunConfig& c, std::ostream& out, std::ostream& err) {
    if (c.channels < 1) throw ParameterError(fmt::format("channel count must be >= 1, got {}", c.channels));
    const auto probe = open_stack_with_overrides(c.input, c.metadata);
    const SheetGeometry camera = probe->geometry();
    const CameraTiming timing = probe->timing();
    const std::size_t frames = probe->frame_count();
    const ChannelLayout layout = layout_for(camera.frame_width_px, camera.frame_height_px, c.channels);
    const SheetGeometry region = region_geometry(camera, layout);

    fs::create_directories(c.output);
    std::vector<fs::path> outputs;
    auto views = nlohmann::json::array();
    for (const auto& angle : c.angles) {
        PipelineConfig pc;
        pc.geometry = region;
        pc.layout = layout;
        pc.shear_px = shear_for(angle, region);
        pc.out_pitch_um = c.out_pitch_um;
        pc.interp = c.interp;
        Pipeline pipeline(pc);
        auto source = open_stack_with_overrides(c.input, c.metadata);
        std::vector<DisplayImage> shown;
        pipeline.run_deterministic(*source, [&](const DisplayImage& d) { shown.push_back(d); });

        for (const auto& d : shown) {
            const auto name = fmt::format("mip_{}_sweep{:03}_ch{}.{}", angle_label(angle), d.sweep_index,
                                          d.channel_id, c.image_format);
            const fs::path path = c.output / name;
            if (c.image_format == "png") {
                write_png16(path, d.pixels);
            } else {
                write_raw_image(path, d.pixels);
            }
            outputs.push_back(path);
            const auto physical =
                PhysicalExtent{d.pixels.width() * d.column_pitch_um, d.pixels.height() * d.row_pitch_um};
            views.push_back({{"file", name},
                             {"angle", angle},
                             {"view_angle_deg", d.view_angle_deg},
                             {"shear_px", d.shear_px},
                             {"warp_scale", d.warp_scale},
                             {"sweep_index", d.sweep_index},
                             {"channel_id", d.channel_id},
                             {"width_px", d.pixels.width()},
                             {"height_px", d.pixels.height()},
                             {"column_pitch_um", d.column_pitch_um},
                             {"row_pitch_um", d.row_pitch_um},
                             {"width_um", physical.width_um},
                             {"height_um", physical.height_um}});
        }
        if (shown.empty()) {
            err << fmt::format("warning: {} frames hold no complete sweep of {} slices\n", frames,
                               region.slice_count);
        }
    }
    if (frames % static_cast<std::size_t>(region.slice_count) != 0) {
        err << fmt::format("warning: trailing {} frames of an incomplete sweep were ignored\n",
                           frames % static_cast<std::size_t>(region.slice_count));
    }

    const nlohmann::json metadata{
        {"schema", "skewstream.deskew/1"},
        {"input", c.input.generic_string()},
        {"frame_count", frames},
        {"geometry", geometry_json(camera)},
        {"channel_geometry", geometry_json(region)},
        {"timing",
         {{"exposure_ms", timing.exposure_ms},
          {"readout_ms", timing.readout_ms},
          {"trigger_mode", std::string(to_string(timing.trigger_mode))}}},
        {"interp", to_string(c.interp)},
        {"channels", layout.channel_ids()},
        {"views", views},
    };
    const fs::path metadata_path = c.output / "metadata.json";
    {
        std::ofstream f(metadata_path);
        if (!f) throw IoError(fmt::format("cannot write {}", metadata_path.string()));
        f << metadata.dump(2) << '\n';
    }
    outputs.push_back(metadata_path);

    const auto inputs = input_files(c.input);
    write_manifest(c.manifest.value_or(c.output / "manifest.json"), make_manifest(c, inputs, outputs));
    out << fmt::format("wrote {} views to {}\n", views.size(), c.output.string());
    return kExitOk;
}

int run_phantom_gen(const RunConfig& c, std::ostream& out, std::ostream&) {
    const SheetGeometry geom = simulated_geometry(c.metadata);
    const CameraTiming timing = simulated_timing(c.metadata, c.trigger_mode);
    geom.validate();
    timing.validate();
    if (c.sweeps < 1) throw ParameterError(fmt::format("sweeps must be >= 1, got {}", c.sweeps));
    const PhantomScene scene = scene_for(c, geom);

    VirtualClock clock;
    SimulatedCameraOptions options;
    options.pacing = Pacing::as_fast_as_possible;
    options.noise_seed = c.noise_seed;
    options.frame_limit = std::int64_t{c.sweeps} * geom.slice_count;
    SimulatedCamera camera(side_by_side_scenes(scene, geom, c.channels), geom, timing, clock, options);
    std::vector<Image16> frames;
    while (auto f = camera.next_frame()) frames.push_back(std::move(f->pixels));

    fs::create_directories(c.output);
    const fs::path stack_path = c.output / (c.stack_format == "tiff" ? "stack.tif" : "stack.raw");
    if (c.stack_format == "tiff") {
        write_tiff_stack(stack_path, frames);
    } else {
        write_raw_stack(stack_path, frames);
    }
    const fs::path sidecar_path = c.output / "stack.json";
    write_sidecar(sidecar_path, StackMetadata{camera.geometry(), timing, frames.size()});
    const fs::path scene_path = c.output / "scene.json";
    save_scene(scene, scene_path);

    std::vector<fs::path> inputs;
    if (c.scene_file) inputs.push_back(*c.scene_file);
    const std::vector<fs::path> outputs{stack_path, sidecar_path, scene_path};
    write_manifest(c.manifest.value_or(c.output / "manifest.json"), make_manifest(c, inputs, outputs));
    out << fmt::format("wrote {} frames of {}x{} to {}\n", frames.size(), camera.geometry().frame_width_px,
                       camera.geometry().frame_height_px, stack_path.string());
    return kExitOk;
}

int run_live(const RunConfig& c, std::ostream& out, std::ostream& err) {
    if (c.channels < 1) throw ParameterError(fmt::format("channel count must be >= 1, got {}", c.channels));
    if (c.duration_s < 0.0) throw ParameterError(fmt::format("duration must be >= 0, got {}", c.duration_s));
    if (!(c.telemetry_interval_s > 0.0)) {
        throw ParameterError(fmt::format("telemetry interval must be positive, got {}", c.telemetry_interval_s));
    }
    ServerConfig server_config;
    server_config.listen = parse_listen_address(c.listen);
    server_config.raw_tcp_port = c.raw_tcp_port;
    server_config.static_dir = c.static_dir;
    server_config.pixel_format = c.pixel_format;

    SteadyClock clock;
    std::unique_ptr<FrameSource> source;
    SheetGeometry region;
    ChannelLayout layout;
    if (c.input.empty()) {
        region = simulated_geometry(c.metadata);
        const CameraTiming timing = simulated_timing(c.metadata, c.trigger_mode);
        SimulatedCameraOptions options;
        options.noise_seed = c.noise_seed;
        auto camera = std::make_unique<SimulatedCamera>(side_by_side_scenes(scene_for(c, region), region, c.channels),
                                                        region, timing, clock, options);
        layout = layout_for(camera->geometry().frame_width_px, camera->geometry().frame_height_px, c.channels);
        source = std::move(camera);
    } else {
        source = open_stack_with_overrides(c.input, c.metadata, {Pacing::realtime});
        layout = layout_for(source->geometry().frame_width_px, source->geometry().frame_height_px, c.channels);
        region = region_geometry(source->geometry(), layout);
    }

    PipelineConfig pc;
    pc.geometry = region;
    pc.layout = layout;
    pc.shear_px = shear_for(c.angles.front(), region);
    pc.out_pitch_um = c.out_pitch_um;
    pc.interp = c.interp;
    pc.mode = c.update_mode;
    Pipeline pipeline(pc);

    std::mutex control_mutex;
    ControlContext context{region, source->capabilities(), layout.channel_ids(), &pipeline.parameters()};
    auto telemetry = [&pipeline] {
        nlohmann::json j = pipeline.telemetry();
        j["type"] = "telemetry";
        return j;
    };
    LiveServer server(
        server_config,
        [&](std::string_view text) {
            std::lock_guard lock(control_mutex);
            return handle_control_text(text, context);
        },
        telemetry);
    server.start();
    out << fmt::format("serving ws://{}:{}/", server_config.listen.host, server.port());
    if (server.raw_tcp_port()) out << fmt::format(" and raw tcp port {}", *server.raw_tcp_port());
    out << std::endl;

    g_interrupted.store(false);
    const auto previous_int = std::signal(SIGINT, on_signal);
    const auto previous_term = std::signal(SIGTERM, on_signal);
    std::stop_source stop;
    std::jthread watcher([&](std::stop_token own) {
        const auto start = std::chrono::steady_clock::now();
        auto next_telemetry = start;
        const auto interval = std::chrono::duration<double>(c.telemetry_interval_s);
        while (!own.stop_requested()) {
            const auto now = std::chrono::steady_clock::now();
            if (g_interrupted.load() ||
                (c.duration_s > 0.0 && now - start >= std::chrono::duration<double>(c.duration_s))) {
                stop.request_stop();
                return;
            }
            if (now >= next_telemetry) {
                server.publish_json(telemetry());
                next_telemetry = now + std::chrono::duration_cast<std::chrono::steady_clock::duration>(interval);
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
    });

    RunLimits limits;
    limits.max_emissions = c.max_emissions;
    TelemetrySnapshot final_telemetry;
    try {
        final_telemetry =
            pipeline.run_threaded(*source, [&](const DisplayImage& d) { server.publish(d); }, stop.get_token(),
                                  limits);
    } catch (...) {
        watcher.request_stop();
        watcher.join();
        std::signal(SIGINT, previous_int);
        std::signal(SIGTERM, previous_term);
        throw;
    }
    watcher.request_stop();
    watcher.join();
    std::signal(SIGINT, previous_int);
    std::signal(SIGTERM, previous_term);
    server.stop();
    if (g_interrupted.load()) err << "interrupted\n";

    nlohmann::json summary = final_telemetry;
    summary["frames_sent"] = server.frames_sent();
    summary["frames_dropped_by_clients"] = server.frames_dropped();
    out << summary.dump() << '\n';

    std::vector<fs::path> inputs;
    if (!c.input.empty()) inputs = input_files(c.input);
    if (c.scene_file) inputs.push_back(*c.scene_file);
    write_manifest(c.manifest.value_or("live_manifest.json"), make_manifest(c, inputs, {}));
    return kExitOk;
}

int run_bench_command(const RunConfig& c, std::ostream& out, std::ostream& err) {
    c.bench.validate();
    const auto& s = c.bench;
    err << fmt::format("bench: {} sweep points x {} runs of {} stacks at {}x{}{}\n",
                       s.exposures_ms.size() + s.slice_counts.size() + s.fovs_um.size(), s.repeats, s.stacks,
                       s.geometry.frame_width_px, s.geometry.frame_height_px,
                       c.crossover ? ", then the crossover search" : "");
    const BenchReport report = run_bench(s, c.crossover);
    out << report.render_table();

    if (c.report.has_parent_path()) fs::create_directories(c.report.parent_path());
    {
        std::ofstream f(c.report);
        if (!f) throw IoError(fmt::format("cannot write {}", c.report.string()));
        f << nlohmann::json(report).dump(2) << '\n';
    }
    const fs::path manifest_path =
        c.manifest.value_or(c.report.parent_path() / (c.report.stem().string() + ".manifest.json"));
    const std::vector<fs::path> outputs{c.report};
    write_manifest(manifest_path, make_manifest(c, {}, outputs));

    const bool passed = report.table_passed() && (!c.crossover || report.crossover_ordered);
    out << fmt::format("table {}; crossover ordering {}\n", report.table_passed() ? "reproduced" : "NOT reproduced",
                       !c.crossover ? "skipped" : report.crossover_ordered ? "holds" : "does NOT hold");
    return c.strict && !passed ? kExitFailure : kExitOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    const auto parsed = parse_command_line(args, out, err);
    if (!parsed.config) return parsed.exit_code;
    const RunConfig& c = *parsed.config;
    try {
        if (c.print_config) {
            out << to_json(c).dump(2) << '\n';
            return kExitOk;
        }
        switch (c.mode) {
            case Mode::batch: return run_batch(c, out, err);
            case Mode::phantom_gen: return run_phantom_gen(c, out, err);
            case Mode::live: return run_live(c, out, err);
            case Mode::bench: return run_bench_command(c, out, err);
        }
    } catch (const MetadataError& e) {
        err << "error: " << e.what();
        if (!e.field().empty()) err << " [field: " << e.field() << "]";
        err << '\n';
        return kExitUsage;
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}

}  // namespace skewstream::cli
