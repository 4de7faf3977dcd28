#include <algorithm>
#include <array>
#include <cstdlib>
#include <ostream>

#include <CLI11.hpp>

#include "cli.hpp"
#include "skewstream/server.hpp"

namespace skewstream::cli {

std::string_view to_string(Mode mode) noexcept {
    switch (mode) {
        case Mode::batch: return "deskew";
        case Mode::live: return "live";
        case Mode::bench: return "bench";
        case Mode::phantom_gen: return "phantom-gen";
    }
    return "unknown";
}

SheetGeometry simulated_geometry(const MetadataOverrides& m) {
    SheetGeometry g;
    g.alpha_deg = m.alpha_deg.value_or(30.0);
    g.scan_step_um = m.scan_step_um.value_or(0.4);
    g.pixel_pitch_um = m.pixel_pitch_um.value_or(0.115);
    g.slice_count = m.slice_count.value_or(50);
    g.frame_width_px = m.width.value_or(1304);
    g.frame_height_px = m.height.value_or(87);
    return g;
}

CameraTiming simulated_timing(const MetadataOverrides& m, std::string_view trigger_mode) {
    CameraTiming t;
    t.exposure_ms = m.exposure_ms.value_or(0.1);
    t.readout_ms = m.readout_ms.value_or(kDefaultReadoutMs);
    t.trigger_mode = parse_trigger_mode(trigger_mode);
    return t;
}

namespace {

template <typename T>
nlohmann::json opt(const std::optional<T>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json overrides_json(const MetadataOverrides& m) {
    return {{"alpha_deg", opt(m.alpha_deg)},   {"scan_step_um", opt(m.scan_step_um)},
            {"pixel_pitch_um", opt(m.pixel_pitch_um)}, {"slice_count", opt(m.slice_count)},
            {"width", opt(m.width)},           {"height", opt(m.height)},
            {"exposure_ms", opt(m.exposure_ms)}, {"readout_ms", opt(m.readout_ms)}};
}

nlohmann::json geometry_json(const SheetGeometry& g) {
    return {{"alpha_deg", g.alpha_deg},       {"scan_step_um", g.scan_step_um},
            {"pixel_pitch_um", g.pixel_pitch_um}, {"slice_count", g.slice_count},
            {"width", g.frame_width_px},      {"height", g.frame_height_px}};
}

nlohmann::json timing_json(const CameraTiming& t) {
    return {{"exposure_ms", t.exposure_ms},
            {"readout_ms", t.readout_ms},
            {"trigger_mode", std::string(to_string(t.trigger_mode))}};
}

std::optional<std::string> path_or_null(const std::optional<std::filesystem::path>& p) {
    if (!p) return std::nullopt;
    return p->generic_string();
}

}  // namespace

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j{{"mode", to_string(c.mode)}};
    switch (c.mode) {
        case Mode::batch:
            j["input"] = c.input.generic_string();
            j["output"] = c.output.generic_string();
            j["metadata_overrides"] = overrides_json(c.metadata);
            j["angles"] = c.angles;
            j["out_pitch_um"] = c.out_pitch_um;
            j["interp"] = to_string(c.interp);
            j["channels"] = c.channels;
            j["image_format"] = c.image_format;
            break;
        case Mode::phantom_gen:
            j["output"] = c.output.generic_string();
            j["geometry"] = geometry_json(simulated_geometry(c.metadata));
            j["timing"] = timing_json(simulated_timing(c.metadata, c.trigger_mode));
            j["scene"] = opt(path_or_null(c.scene_file));
            j["noise_seed"] = opt(c.noise_seed);
            j["sweeps"] = c.sweeps;
            j["channels"] = c.channels;
            j["stack_format"] = c.stack_format;
            break;
        case Mode::live:
            if (c.input.empty()) {
                j["source"] = "simulated";
                j["geometry"] = geometry_json(simulated_geometry(c.metadata));
                j["timing"] = timing_json(simulated_timing(c.metadata, c.trigger_mode));
                j["scene"] = opt(path_or_null(c.scene_file));
                j["noise_seed"] = opt(c.noise_seed);
            } else {
                j["source"] = "replay";
                j["input"] = c.input.generic_string();
                j["metadata_overrides"] = overrides_json(c.metadata);
            }
            j["angle"] = c.angles.front();
            j["out_pitch_um"] = c.out_pitch_um;
            j["interp"] = to_string(c.interp);
            j["update_mode"] = to_string(c.update_mode);
            j["channels"] = c.channels;
            j["listen"] = c.listen;
            j["raw_tcp_port"] = opt(c.raw_tcp_port);
            j["static_dir"] = c.static_dir.generic_string();
            j["pixel_format"] = to_string(c.pixel_format);
            j["duration_s"] = c.duration_s;
            j["max_emissions"] = opt(c.max_emissions);
            j["telemetry_interval_s"] = c.telemetry_interval_s;
            break;
        case Mode::bench:
            j["bench"] = c.bench;
            j["crossover"] = c.crossover;
            j["strict"] = c.strict;
            j["report"] = c.report.generic_string();
            break;
    }
    return j;
}

namespace {

void add_geometry_options(CLI::App* cmd, RunConfig& c, bool with_step) {
    cmd->add_option("--alpha", c.metadata.alpha_deg, "Sheet angle to the scan axis (deg)")->group("Geometry");
    if (with_step) {
        cmd->add_option("--step", c.metadata.scan_step_um, "Scan step between slices (um)")->group("Geometry");
    }
    cmd->add_option("--pitch", c.metadata.pixel_pitch_um, "Camera pixel pitch in the sample (um)")
        ->group("Geometry");
    cmd->add_option("--slices", c.metadata.slice_count, "Slices per sweep (N)")->group("Geometry");
    cmd->add_option("--width", c.metadata.width, "Frame width along the invariant axis (px)")->group("Geometry");
    cmd->add_option("--height", c.metadata.height, "Frame height along the sheet (px)")->group("Geometry");
    cmd->add_option("--exposure", c.metadata.exposure_ms, "Camera exposure (ms)")->group("Timing");
    cmd->add_option("--readout", c.metadata.readout_ms, "Camera readout (ms)")->group("Timing");
}

void add_trigger_option(CLI::App* cmd, RunConfig& c) {
    cmd->add_option("--trigger", c.trigger_mode, "Galvo trigger mode")
        ->check(CLI::IsMember({"external", "internal"}))
        ->capture_default_str()
        ->group("Timing");
}

void add_interp_option(CLI::App* cmd, std::string& interp) {
    cmd->add_option("--interp", interp, "Sub-pixel placement")
        ->check(CLI::IsMember({"nearest", "linear"}))
        ->capture_default_str();
}

void add_common(CLI::App* cmd, RunConfig& c) {
    cmd->add_option("--manifest", c.manifest, "Reproducibility manifest path");
    cmd->add_flag("--print-config", c.print_config, "Print the effective configuration as JSON and exit");
}

bool flag_on_command_line(const std::vector<std::string>& args, std::string_view flag) {
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
        return a == flag || (a.size() > flag.size() && a.compare(0, flag.size(), flag) == 0 &&
                             a[flag.size()] == '=');
    });
}

/// Per-subcommand storage: CLI11 applies every config section to its
/// subcommand's options even when another subcommand runs.
struct Staging {
    RunConfig c;
    std::string interp = "linear";
    std::string update_mode = "global";
    std::string pixel_format = "gray16";
    std::optional<std::string> angle;
    bool no_crossover = false;
};

CLI::App* add_deskew(CLI::App& app, Staging& st) {
    RunConfig& c = st.c;
    c.mode = Mode::batch;
    auto* cmd = app.add_subcommand("deskew", "Deskew a recorded stack into maximum-intensity views");
    cmd->add_option("input", c.input, "Stack file (.raw/.bin/.tif/.tiff) or directory")->required();
    cmd->add_option("-o,--out", c.output, "Output directory")->required();
    add_geometry_options(cmd, c, true);
    cmd->add_option("--angles", c.angles, "View angles in degrees, or 'native'")
        ->delimiter(',')
        ->capture_default_str();
    cmd->add_option("--out-pitch", c.out_pitch_um, "Output pitch (um); 0 keeps the camera pitch");
    add_interp_option(cmd, st.interp);
    cmd->add_option("--channels", c.channels, "Equal side-by-side channel regions")->capture_default_str();
    cmd->add_option("--format", c.image_format, "Image format")
        ->check(CLI::IsMember({"png", "raw"}))
        ->capture_default_str();
    add_common(cmd, c);
    return cmd;
}

CLI::App* add_phantom_gen(CLI::App& app, Staging& st) {
    RunConfig& c = st.c;
    c.mode = Mode::phantom_gen;
    auto* cmd = app.add_subcommand("phantom-gen", "Render a simulated stack of a phantom scene");
    cmd->add_option("-o,--out", c.output, "Output directory")->required();
    add_geometry_options(cmd, c, true);
    add_trigger_option(cmd, c);
    cmd->add_option("--scene", c.scene_file, "Scene JSON; default is a sphere plus a cylinder");
    cmd->add_option("--noise-seed", c.noise_seed, "Poisson noise seed; noiseless when absent");
    cmd->add_option("--sweeps", c.sweeps, "Sweeps to record")->capture_default_str();
    cmd->add_option("--channels", c.channels, "Side-by-side copies of the scene")->capture_default_str();
    cmd->add_option("--format", c.stack_format, "Stack format")
        ->check(CLI::IsMember({"raw", "tiff"}))
        ->capture_default_str();
    add_common(cmd, c);
    return cmd;
}

CLI::App* add_live(CLI::App& app, Staging& st) {
    RunConfig& c = st.c;
    c.mode = Mode::live;
    auto* cmd = app.add_subcommand("live", "Run the live pipeline and serve frames over WebSocket");
    cmd->add_option("--replay", c.input, "Replay a recorded stack instead of the simulated camera");
    add_geometry_options(cmd, c, true);
    add_trigger_option(cmd, c);
    cmd->add_option("--scene", c.scene_file, "Scene JSON for the simulated camera");
    cmd->add_option("--noise-seed", c.noise_seed, "Poisson noise seed");
    cmd->add_option("--angle", st.angle, "Initial view angle in degrees, or 'native'");
    cmd->add_option("--out-pitch", c.out_pitch_um, "Output pitch (um); 0 keeps the camera pitch");
    add_interp_option(cmd, st.interp);
    cmd->add_option("--mode", st.update_mode, "Display update mode")
        ->check(CLI::IsMember({"global", "rolling"}))
        ->capture_default_str();
    cmd->add_option("--channels", c.channels, "Equal side-by-side channel regions")->capture_default_str();
    cmd->add_option("--listen", c.listen, "host:port of the WebSocket/HTTP endpoint (env SKEWSTREAM_LISTEN)")
        ->capture_default_str();
    cmd->add_option("--raw-tcp-port", c.raw_tcp_port, "Also serve length-prefixed packets on this port");
    cmd->add_option("--static-dir", c.static_dir, "Serve the viewer from this directory");
    cmd->add_option("--pixel-format", st.pixel_format, "Frame packet pixels")
        ->check(CLI::IsMember({"gray16", "gray8"}))
        ->capture_default_str();
    cmd->add_option("--duration", c.duration_s, "Stop after this many seconds; 0 runs until interrupted")
        ->capture_default_str();
    cmd->add_option("--max-emissions", c.max_emissions, "Stop after this many display frames");
    cmd->add_option("--telemetry-interval", c.telemetry_interval_s, "Seconds between telemetry messages")
        ->capture_default_str();
    add_common(cmd, c);
    return cmd;
}

CLI::App* add_bench(CLI::App& app, Staging& st) {
    RunConfig& c = st.c;
    BenchSettings& b = c.bench;
    c.mode = Mode::bench;
    auto* cmd = app.add_subcommand("bench", "Sweep exposure, N and scan FOV and classify stage dependencies");
    add_geometry_options(cmd, c, false);
    add_trigger_option(cmd, c);
    cmd->add_option("--fov", b.fov_um, "Scan-axis FOV of the base configuration (um)")->capture_default_str();
    add_interp_option(cmd, st.interp);
    cmd->add_option("--stacks", b.stacks, "Stacks per run, the first is a warm-up")->capture_default_str();
    cmd->add_option("--repeats", b.repeats, "Runs per sweep point")->capture_default_str();
    cmd->add_option("--noise-seed", b.noise_seed, "Per-frame Poisson noise seed");
    cmd->add_option("--exposures", b.exposures_ms, "Exposure sweep (ms)")->delimiter(',')->capture_default_str();
    cmd->add_option("--slice-counts", b.slice_counts, "N sweep")->delimiter(',')->capture_default_str();
    cmd->add_option("--fovs", b.fovs_um, "Scan FOV sweep (um)")->delimiter(',')->capture_default_str();
    cmd->add_option("--crossover-exposures", b.crossover_exposures_ms, "Exposures of the crossover search (ms)")
        ->delimiter(',')
        ->capture_default_str();
    cmd->add_option("--crossover-readout", b.crossover_readout_ms, "Readout of the crossover search (ms)")
        ->capture_default_str();
    cmd->add_option("--crossover-fov-start", b.crossover_fov_start_um, "First FOV of the crossover search (um)")
        ->capture_default_str();
    cmd->add_option("--crossover-fov-growth", b.crossover_fov_growth, "FOV ratio between crossover steps")
        ->capture_default_str();
    cmd->add_option("--crossover-max-points", b.crossover_max_points, "FOV steps before giving up")
        ->capture_default_str();
    cmd->add_flag("--no-crossover", st.no_crossover, "Skip the crossover search");
    cmd->add_flag("--strict", c.strict, "Exit 1 unless every cell and the crossover ordering pass");
    cmd->add_option("--report", c.report, "JSON report path")->capture_default_str();
    add_common(cmd, c);
    return cmd;
}

}  // namespace

ParseOutcome parse_command_line(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Real-time deskew and projection of oblique lightsheet stacks", "skewstream"};
    app.set_version_flag("--version", std::string(library_versions()["skewstream"]));
    app.set_config("--config", "", "TOML config file; each subcommand reads its own [section]");
    app.require_subcommand(1);

    std::array<Staging, 4> staging;
    const std::array<CLI::App*, 4> commands{add_deskew(app, staging[0]), add_phantom_gen(app, staging[1]),
                                            add_live(app, staging[2]), add_bench(app, staging[3])};

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return {std::nullopt, code == 0 ? kExitOk : kExitUsage};
    }

    std::size_t chosen = 0;
    while (!commands[chosen]->parsed()) ++chosen;
    Staging& st = staging[chosen];
    RunConfig& c = st.c;

    if (const auto* cfg = app.get_config_ptr(); cfg && cfg->count() > 0) {
        c.config_file = cfg->as<std::string>();
    }
    // CLI11 would let the config file beat the environment; the environment must win.
    if (c.mode == Mode::live && !flag_on_command_line(args, "--listen")) {
        if (const char* env = std::getenv(kListenEnv); env && *env) c.listen = env;
    }

    c.interp = parse_interpolation(st.interp);
    c.update_mode = parse_update_mode(st.update_mode);
    c.pixel_format = parse_pixel_format(st.pixel_format);
    if (st.angle) c.angles = {*st.angle};
    c.crossover = !st.no_crossover;
    if (c.mode == Mode::bench) {
        BenchSettings& b = c.bench;
        b.geometry = simulated_geometry(c.metadata);
        b.timing = simulated_timing(c.metadata, c.trigger_mode);
        b.interp = c.interp;
    }
    return {c, kExitOk};
}

}  // namespace skewstream::cli
