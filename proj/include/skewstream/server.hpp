#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

#include "skewstream/packet.hpp"

namespace skewstream {

struct ListenAddress {
    std::string host = "127.0.0.1";
    std::uint16_t port = 8765;
};

/// "host:port", ":port" or "port". ParameterError on anything else.
ListenAddress parse_listen_address(std::string_view text);

struct ServerConfig {
    ListenAddress listen;
    /// Headless clients: length-prefixed packets on a second port (0 picks a free one).
    std::optional<std::uint16_t> raw_tcp_port;
    /// Static files served over HTTP on the WebSocket port; empty disables them.
    std::filesystem::path static_dir;
    /// Frames buffered per client before the oldest is dropped.
    std::size_t client_queue_frames = 2;
    PixelFormat pixel_format = PixelFormat::gray16;
};

/// Raw-TCP framing: u32 little-endian length of type + payload, then a u8 type.
enum class RawMessageType : std::uint8_t { frame = 1, json = 2 };

/// WebSocket + HTTP endpoint that broadcasts frame packets and answers control messages.
///
/// Binary messages server -> client carry one frame packet each; text messages
/// carry JSON (control replies and telemetry). Each client has its own bounded
/// outgoing queue: when it falls behind, its oldest pending frame is dropped.
/// Replies are never dropped. HTTP GET /telemetry returns the latest telemetry.
class LiveServer {
public:
    using ControlHandler = std::function<nlohmann::json(std::string_view)>;
    using TelemetryProvider = std::function<nlohmann::json()>;

    LiveServer(ServerConfig config, ControlHandler on_control, TelemetryProvider telemetry = {});
    ~LiveServer();

    LiveServer(const LiveServer&) = delete;
    LiveServer& operator=(const LiveServer&) = delete;

    /// Binds the listeners and starts the network thread. IoError when binding fails.
    void start();
    void stop();

    std::uint16_t port() const;
    std::optional<std::uint16_t> raw_tcp_port() const;

    void publish(const DisplayImage& image);
    void publish_packet(std::vector<std::uint8_t> packet);
    void publish_json(const nlohmann::json& message);

    std::size_t client_count() const;
    std::uint64_t frames_dropped() const;
    std::uint64_t frames_sent() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace skewstream
