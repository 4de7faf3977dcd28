#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "doctest.h"
#include "skewstream/control.hpp"
#include "skewstream/phantom.hpp"
#include "skewstream/pipeline.hpp"
#include "skewstream/server.hpp"

using namespace skewstream;
namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;
using SteadyTime = std::chrono::steady_clock;

namespace {

struct Message {
    bool binary = false;
    std::string payload;

    PacketHeader header() const {
        return decode_frame_packet({reinterpret_cast<const std::uint8_t*>(payload.data()), payload.size()}).header;
    }
};

struct Client {
    asio::io_context ioc;
    websocket::stream<tcp::socket> ws{ioc};

    explicit Client(std::uint16_t port) {
        tcp::resolver resolver(ioc);
        asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
        ws.handshake("127.0.0.1", "/");
    }
    Message read() {
        beast::flat_buffer buffer;
        ws.read(buffer);
        return {ws.got_binary(), beast::buffers_to_string(buffer.data())};
    }
    void send(const json& j) {
        ws.text(true);
        ws.write(asio::buffer(j.dump()));
    }
    /// Frames until the reply to request_id arrives.
    json await_reply(int request_id) {
        for (;;) {
            const auto m = read();
            if (!m.binary && json::parse(m.payload)["request_id"] == request_id) return json::parse(m.payload);
        }
    }
    int count_frames(std::chrono::milliseconds window, UpdateMode* last_mode = nullptr) {
        const auto end = SteadyTime::now() + window;
        int frames = 0;
        while (SteadyTime::now() < end) {
            const auto m = read();
            if (!m.binary) continue;
            ++frames;
            if (last_mode) *last_mode = m.header().mode;
        }
        return frames;
    }
};

}  // namespace

TEST_CASE("operator controls reach the streamed frames") {
    SheetGeometry g;
    g.alpha_deg = 30.0;
    g.scan_step_um = 0.4;
    g.pixel_pitch_um = 0.115;
    g.slice_count = 8;
    g.frame_width_px = 32;
    g.frame_height_px = 16;
    const CameraTiming timing{1.0, 1.5, TriggerMode::external};  // 20 ms per stack, 2.5 ms per exposure

    SteadyClock clock;
    SimulatedCamera camera(default_scene(g), g, timing, clock);
    PipelineConfig config;
    config.geometry = g;
    Pipeline pipeline(config);

    std::atomic<std::int64_t> last_sweep{-1};
    std::int64_t sweep_at_ack = -1;
    std::mutex control_mutex;
    ControlContext ctx{g, camera.capabilities(), {0}, &pipeline.parameters()};
    ServerConfig sc;
    sc.listen.port = 0;
    sc.client_queue_frames = 64;
    LiveServer server(sc, [&](std::string_view text) {
        std::lock_guard lock(control_mutex);
        auto reply = handle_control_text(text, ctx);
        sweep_at_ack = last_sweep.load();
        return reply;
    });
    server.start();
    std::jthread runner([&](std::stop_token stop) {
        pipeline.run_threaded(
            camera,
            [&](const DisplayImage& d) {
                last_sweep.store(d.sweep_index);
                server.publish(d);
            },
            stop);
    });

    Client client(server.port());
    while (!client.read().binary) {
    }

    SUBCASE("view angle follows the ack within two emission periods") {
        client.send({{"request_id", 1}, {"type", "set_view_angle"}, {"deg", 45.0}});
        const auto reply = client.await_reply(1);
        REQUIRE(reply["type"] == "ack");
        const double applied = reply["applied"]["view_angle_deg"].get<double>();
        CHECK(applied == doctest::Approx(45.0));
        std::int64_t acked_sweep = 0;
        {
            std::lock_guard lock(control_mutex);
            acked_sweep = sweep_at_ack;
        }
        const auto deadline = SteadyTime::now() + std::chrono::seconds(5);
        std::optional<PacketHeader> first;
        while (!first && SteadyTime::now() < deadline) {
            const auto m = client.read();
            if (!m.binary) continue;
            const auto h = m.header();
            if (std::abs(h.view_angle_centideg / 100.0 - applied) <= 0.01) first = h;
        }
        REQUIRE(first);
        CHECK(static_cast<std::int64_t>(first->sweep_index) <= acked_sweep + 2);
    }

    SUBCASE("rolling mode streams one frame per exposure") {
        UpdateMode mode = UpdateMode::rolling;
        const int global_frames = client.count_frames(std::chrono::milliseconds(400), &mode);
        CHECK(mode == UpdateMode::global);
        client.send({{"request_id", 2}, {"type", "set_mode"}, {"mode", "rolling"}});
        REQUIRE(client.await_reply(2)["type"] == "ack");
        client.count_frames(std::chrono::milliseconds(60));
        const int rolling_frames = client.count_frames(std::chrono::milliseconds(400), &mode);
        CHECK(mode == UpdateMode::rolling);
        MESSAGE("frames in 400 ms: global ", global_frames, ", rolling ", rolling_frames);
        CHECK(global_frames > 0);
        CHECK(rolling_frames >= global_frames * g.slice_count / 2);
    }

    runner.request_stop();
    runner.join();
    server.stop();
}
