#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "skewstream/bench.hpp"
#include "skewstream/canvas.hpp"
#include "skewstream/io.hpp"
#include "skewstream/packet.hpp"
#include "skewstream/placement.hpp"

namespace skewstream::cli {

enum class Mode { batch, live, bench, phantom_gen };

std::string_view to_string(Mode mode) noexcept;

inline constexpr const char* kListenEnv = "SKEWSTREAM_LISTEN";

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // IO errors, failed bench with --strict
inline constexpr int kExitUsage = 2;    // bad flags, config or stack metadata

/// Effective settings of one invocation after flags, environment, config file and defaults are merged.
struct RunConfig {
    Mode mode = Mode::batch;
    std::optional<std::filesystem::path> config_file;
    std::optional<std::filesystem::path> manifest;

    // Geometry and timing. For deskew these override the sidecar; otherwise they override the simulated defaults.
    MetadataOverrides metadata;
    std::string trigger_mode = "external";

    // View.
    std::vector<std::string> angles{"native"};
    double out_pitch_um = 0.0;
    Interpolation interp = Interpolation::linear;
    UpdateMode update_mode = UpdateMode::global;
    int channels = 1;

    // Paths.
    std::filesystem::path input;
    std::filesystem::path output;
    std::string image_format = "png";
    std::string stack_format = "raw";
    std::optional<std::filesystem::path> scene_file;

    // Simulation.
    std::optional<std::uint64_t> noise_seed;
    int sweeps = 1;

    // Live.
    std::string listen = "127.0.0.1:8765";
    std::optional<std::uint16_t> raw_tcp_port;
    std::filesystem::path static_dir;
    PixelFormat pixel_format = PixelFormat::gray16;
    double duration_s = 0.0;
    std::optional<std::int64_t> max_emissions;
    double telemetry_interval_s = 0.5;

    // Bench.
    BenchSettings bench;
    bool crossover = true;
    bool strict = false;
    std::filesystem::path report = "bench_report.json";

    bool print_config = false;
};

/// Geometry of the simulated camera (live, bench, phantom-gen).
SheetGeometry simulated_geometry(const MetadataOverrides& m);
CameraTiming simulated_timing(const MetadataOverrides& m, std::string_view trigger_mode);

nlohmann::json to_json(const RunConfig& config);

struct ParseOutcome {
    std::optional<RunConfig> config;
    int exit_code = kExitOk;
};

/// Parses arguments (without the program name). Precedence: flag, then
/// SKEWSTREAM_LISTEN for --listen, then the --config TOML file, then defaults.
ParseOutcome parse_command_line(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_batch(const RunConfig& config, std::ostream& out, std::ostream& err);
int run_live(const RunConfig& config, std::ostream& out, std::ostream& err);
int run_bench_command(const RunConfig& config, std::ostream& out, std::ostream& err);
int run_phantom_gen(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Parses and dispatches; library errors become messages and exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Reproducibility manifest.

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text);
std::string hash_hex(std::uint64_t hash);
/// FNV-1a 64 of a file's contents as "fnv1a64:<16 hex digits>".
std::string file_hash(const std::filesystem::path& path);

nlohmann::json library_versions();

/// Config hash over the canonical (sorted key, compact) JSON of the effective config.
nlohmann::json make_manifest(const RunConfig& config, std::span<const std::filesystem::path> inputs,
                             std::span<const std::filesystem::path> outputs);
void write_manifest(const std::filesystem::path& path, const nlohmann::json& manifest);

}  // namespace skewstream::cli
