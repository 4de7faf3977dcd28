#include "skewstream/server.hpp"

#include <atomic>
#include <charconv>
#include <deque>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "skewstream/error.hpp"

namespace skewstream {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

ListenAddress parse_listen_address(std::string_view text) {
    ListenAddress out;
    std::string_view port_text = text;
    if (const auto colon = text.rfind(':'); colon != std::string_view::npos) {
        if (colon > 0) out.host = std::string(text.substr(0, colon));
        port_text = text.substr(colon + 1);
    }
    unsigned value = 0;
    const auto [end, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), value);
    if (port_text.empty() || ec != std::errc{} || end != port_text.data() + port_text.size() || value > 65535) {
        throw ParameterError(fmt::format("invalid listen address '{}', expected host:port", text));
    }
    out.port = static_cast<std::uint16_t>(value);
    return out;
}

namespace {

struct Outgoing {
    std::shared_ptr<const std::string> data;
    bool binary = false;
    bool droppable = false;
};

/// Per-client outgoing queue shared by both transports. Pending frames beyond
/// the limit are dropped oldest first; the message being written stays put.
class OutgoingQueue {
public:
    explicit OutgoingQueue(std::size_t frame_limit) : limit_(frame_limit) {}

    /// Returns the number of frames dropped to make room.
    std::size_t push(Outgoing msg) {
        std::size_t dropped = 0;
        if (msg.droppable) {
            std::size_t frames = 0;
            for (std::size_t i = writing_ ? 1 : 0; i < items_.size(); ++i) frames += items_[i].droppable;
            while (frames >= limit_) {
                for (auto it = items_.begin() + (writing_ ? 1 : 0); it != items_.end(); ++it) {
                    if (it->droppable) {
                        items_.erase(it);
                        break;
                    }
                }
                --frames;
                ++dropped;
            }
        }
        items_.push_back(std::move(msg));
        return dropped;
    }

    bool writing() const noexcept { return writing_; }
    bool empty() const noexcept { return items_.empty(); }
    const Outgoing& front() const { return items_.front(); }
    void start_write() noexcept { writing_ = true; }
    void finish_write() {
        items_.pop_front();
        writing_ = false;
    }

private:
    std::size_t limit_;
    std::deque<Outgoing> items_;
    bool writing_ = false;
};

class Session : public std::enable_shared_from_this<Session> {
public:
    virtual ~Session() = default;
    virtual void send(Outgoing msg) = 0;
    virtual void close() = 0;
};

struct Shared {
    ServerConfig config;
    LiveServer::ControlHandler on_control;
    LiveServer::TelemetryProvider telemetry;
    std::mutex sessions_mutex;
    std::vector<std::weak_ptr<Session>> sessions;
    std::atomic<std::uint64_t> dropped{0};
    std::atomic<std::uint64_t> sent{0};

    void add(const std::shared_ptr<Session>& s) {
        std::lock_guard lock(sessions_mutex);
        sessions.push_back(s);
    }

    std::vector<std::shared_ptr<Session>> live_sessions() {
        std::lock_guard lock(sessions_mutex);
        std::vector<std::shared_ptr<Session>> out;
        std::erase_if(sessions, [&](const std::weak_ptr<Session>& w) {
            auto s = w.lock();
            if (!s) return true;
            out.push_back(std::move(s));
            return false;
        });
        return out;
    }

    std::string control_reply(std::string_view text) {
        try {
            return on_control(text).dump();
        } catch (const std::exception& e) {
            return nlohmann::json{{"type", "nack"}, {"request_id", nullptr}, {"reason", e.what()}}.dump();
        }
    }
};

// --- WebSocket ---------------------------------------------------------------

class WebSocketSession final : public Session {
public:
    WebSocketSession(tcp::socket socket, std::shared_ptr<Shared> shared)
        : ws_(std::move(socket)), shared_(std::move(shared)), queue_(shared_->config.client_queue_frames) {}

    void run(http::request<http::string_body> request) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.binary(true);
        ws_.async_accept(request, beast::bind_front_handler(&WebSocketSession::on_accept, self()));
    }

    void send(Outgoing msg) override {
        asio::post(ws_.get_executor(), [self = self(), msg = std::move(msg)]() mutable {
            self->shared_->dropped += self->queue_.push(std::move(msg));
            if (self->open_ && !self->queue_.writing()) self->write_next();
        });
    }

    void close() override {
        asio::post(ws_.get_executor(), [self = self()] {
            beast::error_code ec;
            beast::get_lowest_layer(self->ws_).socket().close(ec);
        });
    }

private:
    std::shared_ptr<WebSocketSession> self() {
        return std::static_pointer_cast<WebSocketSession>(shared_from_this());
    }

    void on_accept(beast::error_code ec) {
        if (ec) return;
        open_ = true;
        shared_->add(shared_from_this());
        if (!queue_.empty() && !queue_.writing()) write_next();
        read_next();
    }

    void read_next() {
        ws_.async_read(buffer_, beast::bind_front_handler(&WebSocketSession::on_read, self()));
    }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) {
            open_ = false;
            return;
        }
        const std::string text = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        queue_.push({std::make_shared<const std::string>(shared_->control_reply(text)), false, false});
        if (!queue_.writing()) write_next();
        read_next();
    }

    void write_next() {
        if (queue_.empty() || !open_) return;
        queue_.start_write();
        const auto& msg = queue_.front();
        ws_.binary(msg.binary);
        ws_.async_write(asio::buffer(*msg.data), beast::bind_front_handler(&WebSocketSession::on_write, self()));
    }

    void on_write(beast::error_code ec, std::size_t) {
        if (queue_.front().binary) ++shared_->sent;
        queue_.finish_write();
        if (ec) {
            open_ = false;
            return;
        }
        write_next();
    }

    websocket::stream<beast::tcp_stream> ws_;
    std::shared_ptr<Shared> shared_;
    beast::flat_buffer buffer_;
    OutgoingQueue queue_;
    bool open_ = false;
};

// --- HTTP ----------------------------------------------------------------------

std::string_view mime_type(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".html" || ext == ".htm") return "text/html";
    if (ext == ".js" || ext == ".mjs") return "application/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json") return "application/json";
    if (ext == ".png") return "image/png";
    if (ext == ".svg") return "image/svg+xml";
    if (ext == ".wasm") return "application/wasm";
    return "application/octet-stream";
}

class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
    HttpSession(tcp::socket socket, std::shared_ptr<Shared> shared)
        : stream_(std::move(socket)), shared_(std::move(shared)) {}

    void run() { read_next(); }

private:
    void read_next() {
        request_ = {};
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buffer_, request_,
                         beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) return;
        if (websocket::is_upgrade(request_)) {
            stream_.expires_never();
            std::make_shared<WebSocketSession>(stream_.release_socket(), shared_)->run(std::move(request_));
            return;
        }
        respond();
    }

    void respond() {
        auto res = std::make_shared<http::response<http::string_body>>();
        res->version(request_.version());
        res->keep_alive(request_.keep_alive());
        res->set(http::field::server, "skewstream");
        const std::string target(request_.target());

        auto finish = [&](http::status status, std::string_view type, std::string body) {
            res->result(status);
            res->set(http::field::content_type, beast::string_view(type.data(), type.size()));
            res->body() = std::move(body);
            res->prepare_payload();
        };

        if (request_.method() != http::verb::get && request_.method() != http::verb::head) {
            finish(http::status::method_not_allowed, "text/plain", "method not allowed\n");
        } else if (target == "/telemetry") {
            finish(http::status::ok, "application/json",
                   shared_->telemetry ? shared_->telemetry().dump() : std::string("{}"));
        } else if (shared_->config.static_dir.empty() || target.empty() || target[0] != '/' ||
                   target.find("..") != std::string::npos) {
            finish(http::status::not_found, "text/plain", "not found\n");
        } else {
            std::string rel = target.substr(1, target.find('?') == std::string::npos ? std::string::npos
                                                                                     : target.find('?') - 1);
            if (rel.empty() || rel.back() == '/') rel += "index.html";
            const auto path = shared_->config.static_dir / rel;
            std::ifstream in(path, std::ios::binary);
            if (!in) {
                finish(http::status::not_found, "text/plain", "not found\n");
            } else {
                std::ostringstream body;
                body << in.rdbuf();
                finish(http::status::ok, mime_type(path), body.str());
            }
        }
        if (request_.method() == http::verb::head) res->body().clear();
        http::async_write(stream_, *res,
                          [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
                              if (ec || !res->keep_alive()) {
                                  beast::error_code ignored;
                                  self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                                  return;
                              }
                              self->read_next();
                          });
    }

    beast::tcp_stream stream_;
    std::shared_ptr<Shared> shared_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> request_;
};

// --- raw TCP -----------------------------------------------------------------

constexpr std::uint32_t kMaxInboundRawMessage = 1u << 20;

std::shared_ptr<const std::string> raw_frame(RawMessageType type, std::string_view payload) {
    auto out = std::make_shared<std::string>();
    const auto length = static_cast<std::uint32_t>(payload.size() + 1);
    out->reserve(payload.size() + 5);
    for (int i = 0; i < 4; ++i) out->push_back(static_cast<char>((length >> (8 * i)) & 0xFF));
    out->push_back(static_cast<char>(type));
    out->append(payload);
    return out;
}

class RawSession final : public Session {
public:
    RawSession(tcp::socket socket, std::shared_ptr<Shared> shared)
        : socket_(std::move(socket)), shared_(std::move(shared)), queue_(shared_->config.client_queue_frames) {}

    void run() {
        shared_->add(shared_from_this());
        read_header();
    }

    void send(Outgoing msg) override {
        asio::post(socket_.get_executor(), [self = self(), msg = std::move(msg)]() mutable {
            // Raw clients receive frames with the length/type prefix.
            msg.data = raw_frame(msg.binary ? RawMessageType::frame : RawMessageType::json, *msg.data);
            self->shared_->dropped += self->queue_.push(std::move(msg));
            if (!self->queue_.writing()) self->write_next();
        });
    }

    void close() override {
        asio::post(socket_.get_executor(), [self = self()] {
            beast::error_code ec;
            self->socket_.close(ec);
        });
    }

private:
    std::shared_ptr<RawSession> self() { return std::static_pointer_cast<RawSession>(shared_from_this()); }

    void read_header() {
        asio::async_read(socket_, asio::buffer(header_), [self = self()](beast::error_code ec, std::size_t) {
            if (ec) return;
            std::uint32_t length = 0;
            for (int i = 0; i < 4; ++i) length |= std::uint32_t{self->header_[i]} << (8 * i);
            if (length < 1 || length > kMaxInboundRawMessage) {
                self->close();
                return;
            }
            self->body_.resize(length - 1);
            self->read_body(static_cast<RawMessageType>(self->header_[4]));
        });
    }

    void read_body(RawMessageType type) {
        asio::async_read(socket_, asio::buffer(body_), [self = self(), type](beast::error_code ec, std::size_t) {
            if (ec) return;
            if (type == RawMessageType::json) {
                const auto reply = self->shared_->control_reply(self->body_);
                self->queue_.push({raw_frame(RawMessageType::json, reply), false, false});
                if (!self->queue_.writing()) self->write_next();
            }
            self->read_header();
        });
    }

    void write_next() {
        if (queue_.empty()) return;
        queue_.start_write();
        asio::async_write(socket_, asio::buffer(*queue_.front().data),
                          [self = self()](beast::error_code ec, std::size_t) {
                              if (self->queue_.front().binary) ++self->shared_->sent;
                              self->queue_.finish_write();
                              if (!ec) self->write_next();
                          });
    }

    tcp::socket socket_;
    std::shared_ptr<Shared> shared_;
    std::array<std::uint8_t, 5> header_{};
    std::string body_;
    OutgoingQueue queue_;
};

// --- listener -----------------------------------------------------------------

template <typename OnAccept>
class Listener : public std::enable_shared_from_this<Listener<OnAccept>> {
public:
    Listener(asio::io_context& ioc, tcp::endpoint endpoint, OnAccept on_accept)
        : ioc_(ioc), acceptor_(ioc), on_accept_(std::move(on_accept)) {
        beast::error_code ec;
        acceptor_.open(endpoint.protocol(), ec);
        if (!ec) acceptor_.set_option(asio::socket_base::reuse_address(true), ec);
        if (!ec) acceptor_.bind(endpoint, ec);
        if (!ec) acceptor_.listen(asio::socket_base::max_listen_connections, ec);
        if (ec) {
            throw IoError(fmt::format("cannot listen on {}:{}: {}", endpoint.address().to_string(), endpoint.port(),
                                      ec.message()));
        }
    }

    std::uint16_t port() const { return acceptor_.local_endpoint().port(); }

    void run() { accept_next(); }

    void close() {
        beast::error_code ec;
        acceptor_.close(ec);
    }

private:
    void accept_next() {
        acceptor_.async_accept(asio::make_strand(ioc_), [self = this->shared_from_this()](beast::error_code ec,
                                                                                         tcp::socket socket) {
            if (ec == asio::error::operation_aborted) return;
            if (!ec) self->on_accept_(std::move(socket));
            self->accept_next();
        });
    }

    asio::io_context& ioc_;
    tcp::acceptor acceptor_;
    OnAccept on_accept_;
};

tcp::endpoint resolve_endpoint(asio::io_context& ioc, const std::string& host, std::uint16_t port) {
    beast::error_code ec;
    tcp::resolver resolver(ioc);
    auto results = resolver.resolve(host, std::to_string(port), tcp::resolver::passive, ec);
    if (ec || results.empty()) {
        throw IoError(fmt::format("cannot resolve listen host '{}': {}", host, ec.message()));
    }
    return results.begin()->endpoint();
}

}  // namespace

struct LiveServer::Impl {
    using AcceptFn = std::function<void(tcp::socket)>;

    asio::io_context ioc;
    std::shared_ptr<Shared> shared = std::make_shared<Shared>();
    std::shared_ptr<Listener<AcceptFn>> http_listener;
    std::shared_ptr<Listener<AcceptFn>> raw_listener;
    std::optional<asio::executor_work_guard<asio::io_context::executor_type>> work;
    std::thread thread;
    bool running = false;
};

LiveServer::LiveServer(ServerConfig config, ControlHandler on_control, TelemetryProvider telemetry)
    : impl_(std::make_unique<Impl>()) {
    if (config.client_queue_frames == 0) throw ParameterError("client queue must hold at least one frame");
    impl_->shared->config = std::move(config);
    impl_->shared->on_control = std::move(on_control);
    impl_->shared->telemetry = std::move(telemetry);
}

LiveServer::~LiveServer() { stop(); }

void LiveServer::start() {
    if (impl_->running) return;
    auto& ioc = impl_->ioc;
    auto shared = impl_->shared;
    const auto& cfg = shared->config;
    Impl::AcceptFn on_http = [shared](tcp::socket s) { std::make_shared<HttpSession>(std::move(s), shared)->run(); };
    impl_->http_listener = std::make_shared<Listener<Impl::AcceptFn>>(
        ioc, resolve_endpoint(ioc, cfg.listen.host, cfg.listen.port), on_http);
    if (cfg.raw_tcp_port) {
        Impl::AcceptFn on_raw = [shared](tcp::socket s) { std::make_shared<RawSession>(std::move(s), shared)->run(); };
        impl_->raw_listener = std::make_shared<Listener<Impl::AcceptFn>>(
            ioc, resolve_endpoint(ioc, cfg.listen.host, *cfg.raw_tcp_port), on_raw);
        impl_->raw_listener->run();
    }
    impl_->http_listener->run();
    impl_->work.emplace(ioc.get_executor());
    impl_->thread = std::thread([&ioc] { ioc.run(); });
    impl_->running = true;
}

void LiveServer::stop() {
    if (!impl_ || !impl_->running) return;
    impl_->work.reset();
    impl_->ioc.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
    impl_->running = false;
}

std::uint16_t LiveServer::port() const {
    if (!impl_->http_listener) throw ProtocolError("server not started");
    return impl_->http_listener->port();
}

std::optional<std::uint16_t> LiveServer::raw_tcp_port() const {
    if (!impl_->raw_listener) return std::nullopt;
    return impl_->raw_listener->port();
}

void LiveServer::publish(const DisplayImage& image) {
    publish_packet(encode_frame_packet(image, impl_->shared->config.pixel_format));
}

void LiveServer::publish_packet(std::vector<std::uint8_t> packet) {
    auto data = std::make_shared<const std::string>(packet.begin(), packet.end());
    for (auto& s : impl_->shared->live_sessions()) s->send({data, true, true});
}

void LiveServer::publish_json(const nlohmann::json& message) {
    auto data = std::make_shared<const std::string>(message.dump());
    for (auto& s : impl_->shared->live_sessions()) s->send({data, false, true});
}

std::size_t LiveServer::client_count() const { return impl_->shared->live_sessions().size(); }
std::uint64_t LiveServer::frames_dropped() const { return impl_->shared->dropped.load(); }
std::uint64_t LiveServer::frames_sent() const { return impl_->shared->sent.load(); }

}  // namespace skewstream
