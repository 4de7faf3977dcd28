#include <fstream>
#include <iterator>

#include <CLI11.hpp>
#include <boost/version.hpp>
#include <fmt/format.h>

#include "cli.hpp"
#include "skewstream/error.hpp"

#ifndef SKEWSTREAM_VERSION
#define SKEWSTREAM_VERSION "unknown"
#endif

namespace skewstream::cli {

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t hash) {
    for (const std::uint8_t b : bytes) {
        hash ^= b;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::uint64_t fnv1a64(std::string_view text) {
    return fnv1a64({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string hash_hex(std::uint64_t hash) { return fmt::format("fnv1a64:{:016x}", hash); }

std::string file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot read {}", path.string()));
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    std::vector<char> buffer(std::size_t{1} << 20);
    while (in) {
        in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
        const auto n = static_cast<std::size_t>(in.gcount());
        hash = fnv1a64({reinterpret_cast<const std::uint8_t*>(buffer.data()), n}, hash);
    }
    return hash_hex(hash);
}

nlohmann::json library_versions() {
    return {
        {"skewstream", SKEWSTREAM_VERSION},
#if defined(__clang__)
        {"compiler", fmt::format("clang {}.{}.{}", __clang_major__, __clang_minor__, __clang_patchlevel__)},
#elif defined(__GNUC__)
        {"compiler", fmt::format("gcc {}.{}.{}", __GNUC__, __GNUC_MINOR__, __GNUC_PATCHLEVEL__)},
#else
        {"compiler", "unknown"},
#endif
        {"cxx_standard", __cplusplus},
        {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                      NLOHMANN_JSON_VERSION_PATCH)},
        {"fmt", fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100, FMT_VERSION % 100)},
        {"libpng", std::string(libpng_version())},
        {"boost", fmt::format("{}.{}.{}", BOOST_VERSION / 100000, BOOST_VERSION / 100 % 1000, BOOST_VERSION % 100)},
        {"cli11", CLI11_VERSION},
    };
}

namespace {

nlohmann::json file_entries(std::span<const std::filesystem::path> paths) {
    auto entries = nlohmann::json::array();
    for (const auto& p : paths) {
        entries.push_back({{"path", p.generic_string()},
                           {"bytes", std::filesystem::file_size(p)},
                           {"hash", file_hash(p)}});
    }
    return entries;
}

}  // namespace

nlohmann::json make_manifest(const RunConfig& config, std::span<const std::filesystem::path> inputs,
                             std::span<const std::filesystem::path> outputs) {
    const nlohmann::json effective = to_json(config);
    std::optional<std::uint64_t> seed = config.noise_seed;
    if (config.mode == Mode::bench) seed = config.bench.noise_seed;
    return {
        {"schema", "skewstream.manifest/1"},
        {"command", to_string(config.mode)},
        {"config", effective},
        {"config_hash", hash_hex(fnv1a64(effective.dump()))},
        {"seed", seed ? nlohmann::json(*seed) : nlohmann::json(nullptr)},
        {"versions", library_versions()},
        {"inputs", file_entries(inputs)},
        {"outputs", file_entries(outputs)},
    };
}

void write_manifest(const std::filesystem::path& path, const nlohmann::json& manifest) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out << manifest.dump(2) << '\n';
}

}  // namespace skewstream::cli
