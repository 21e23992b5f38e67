#include "lanemerge/gateway/server.hpp"

#include <algorithm>
#include <chrono>

#include "lanemerge/core/wire.hpp"

namespace lanemerge::gateway {

namespace {

double steady_ms() {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::chrono::steady_clock::time_point from_ms(double ms) {
    return std::chrono::steady_clock::time_point(
        std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double, std::milli>(ms)));
}

Millis wall_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

struct GatewayServer::Connection {
    net::Fd fd;
    SessionId session = 0;
    std::shared_ptr<SessionQueue> queue;
    std::unique_ptr<LinkSimulator> up, down;
    std::unique_ptr<DelayLine> uplink;
    std::uint64_t ack_seq = 0;
    std::thread read_thread, write_thread;
    std::atomic<bool> reader_done{false};
    std::mutex start_mu;
};

GatewayServer::GatewayServer(ServerOptions options) : options_(std::move(options)), broker_(options_.broker) {
    if (options_.vehicle_link) options_.vehicle_link->validate();
}

GatewayServer::~GatewayServer() { stop(); }

void GatewayServer::start() {
    listener_ = net::listen_tcp(options_.listen);
    port_ = net::local_port(listener_);
    stopping_ = false;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void GatewayServer::stop() {
    if (stopping_.exchange(true)) return;
    if (acceptor_.joinable()) acceptor_.join();
    listener_.reset();
    {
        std::lock_guard lock(conn_mu_);
        for (auto& c : connections_) net::shutdown_both(c->fd);
    }
    reap(true);
}

ServerStats GatewayServer::stats() const {
    return ServerStats{n_connections_.load(), malformed_.load(), rejected_.load(), link_lost_.load()};
}

std::vector<std::int64_t> GatewayServer::forwarding_samples() const {
    std::lock_guard lock(fwd_mu_);
    return forwarding_us_;
}

std::size_t GatewayServer::live_connections() const {
    std::lock_guard lock(conn_mu_);
    return connections_.size();
}

void GatewayServer::accept_loop() {
    while (!stopping_) {
        std::optional<net::Fd> fd;
        try {
            fd = net::accept_tcp(listener_, std::chrono::milliseconds(100));
        } catch (const net::SocketError&) {
            if (stopping_) break;
            continue;
        }
        reap(false);
        if (!fd) continue;
        ++n_connections_;
        auto conn = std::make_unique<Connection>();
        conn->fd = std::move(*fd);
        Connection& c = *conn;
        {
            std::lock_guard lock(conn_mu_);
            connections_.push_back(std::move(conn));
        }
        std::lock_guard start(c.start_mu);
        c.read_thread = std::thread([this, &c] { reader(c); });
    }
}

void GatewayServer::reap(bool all) {
    std::list<std::unique_ptr<Connection>> finished;
    {
        std::lock_guard lock(conn_mu_);
        for (auto it = connections_.begin(); it != connections_.end();) {
            if (all || (*it)->reader_done.load()) {
                finished.push_back(std::move(*it));
                it = connections_.erase(it);
            } else {
                ++it;
            }
        }
    }
    for (auto& c : finished) {
        std::lock_guard start(c->start_mu);
        if (c->read_thread.joinable()) c->read_thread.join();
        if (c->write_thread.joinable()) c->write_thread.join();
        if (c->uplink) c->uplink->stop();
    }
}

void GatewayServer::reader(Connection& c) {
    net::LineReader lines(c.fd);
    auto push_ack = [&](const SubscribeRequest& req) {
        V2XEnvelope ack;
        ack.topic = req.topic.empty() ? "session" : req.topic;
        ack.sender = "gateway";
        ack.seq = ++c.ack_seq;
        ack.sent_at = wall_ms();
        SubscribeRequest body = req;
        body.action = SubscribeAction::Ack;
        ack.payload = body;
        c.queue->push(Outbound{MsgType::Subscribe, std::make_shared<const std::string>(wire::encode_envelope(ack)),
                               0, 0});
    };
    try {
        // Handshake.
        const auto first = lines.read_line();
        if (!first) throw net::SocketError("closed before handshake");
        V2XEnvelope hello;
        try {
            hello = wire::decode_envelope(*first);
        } catch (const wire::WireError&) {
            throw net::SocketError("malformed handshake");
        }
        const auto* req = std::get_if<SubscribeRequest>(&hello.payload);
        if (req == nullptr || req->action != SubscribeAction::Hello) throw net::SocketError("handshake must be Hello");
        c.session = broker_.open_session(req->role, hello.sender);
        c.queue = broker_.queue(c.session);
        if (options_.vehicle_link && req->role == ClientRole::Vehicle && !options_.vehicle_link->is_ideal()) {
            const auto& p = *options_.vehicle_link;
            const std::uint64_t s = p.seed * 0x9E3779B97F4A7C15ULL + (++next_link_seed_);
            c.up = std::make_unique<LinkSimulator>(p.uplink_kbps, p.latency_ms, p.jitter_ms, p.loss, s);
            c.down = std::make_unique<LinkSimulator>(p.downlink_kbps, p.latency_ms, p.jitter_ms, p.loss, s ^ 0xD1B54A32D192ED03ULL);
            c.uplink = std::make_unique<DelayLine>();
        }
        push_ack(*req);
        c.write_thread = std::thread([this, &c] { writer(c); });

        while (auto line = lines.read_line()) {
            if (line->empty()) continue;
            V2XEnvelope env;
            try {
                env = wire::decode_envelope(*line);
            } catch (const wire::WireError&) {
                ++malformed_;
                continue;
            }
            if (const auto* sub = std::get_if<SubscribeRequest>(&env.payload)) {
                try {
                    if (sub->action == SubscribeAction::Subscribe) broker_.subscribe(c.session, sub->topic, sub->bound);
                    if (sub->action == SubscribeAction::Unsubscribe) broker_.unsubscribe(c.session, sub->topic);
                } catch (const InvariantError&) {
                    ++malformed_;
                    continue;
                }
                push_ack(*sub);
                continue;
            }
            line->push_back('\n');
            auto bytes = std::make_shared<const std::string>(std::move(*line));
            if (c.up) {
                const auto arrival = c.up->transmit(steady_ms(), bytes->size());
                if (!arrival) {
                    ++link_lost_;
                    continue;
                }
                c.uplink->submit(from_ms(*arrival), [this, &c, env = std::move(env), bytes] {
                    broker_.publish(c.session, env, bytes);
                });
            } else {
                broker_.publish(c.session, env, bytes);
            }
        }
    } catch (const std::exception&) {
        if (c.session == 0) ++rejected_;
    }
    if (c.uplink) c.uplink->stop();
    if (c.session != 0) broker_.close_session(c.session);
    net::shutdown_both(c.fd);
    // The writer exits once the queue is closed; reap() joins both threads.
    c.reader_done = true;
}

void GatewayServer::writer(Connection& c) {
    try {
        while (auto msg = c.queue->pop_wait()) {
            double ready_ms = static_cast<double>(msg->enqueued_us) / 1000.0;
            if (c.down && msg->from != 0) {
                const auto arrival = c.down->transmit(static_cast<double>(msg->enqueued_us) / 1000.0, msg->line->size());
                if (!arrival) {
                    ++link_lost_;
                    continue;
                }
                std::this_thread::sleep_until(from_ms(*arrival));
                ready_ms = std::max(ready_ms, *arrival);
            }
            net::write_all(c.fd, *msg->line);
            if (msg->from != 0) {
                const auto delay = static_cast<std::int64_t>((steady_ms() - ready_ms) * 1000.0);
                std::lock_guard lock(fwd_mu_);
                forwarding_us_.push_back(std::max<std::int64_t>(0, delay));
            }
        }
    } catch (const net::SocketError&) {
        net::shutdown_both(c.fd);
    }
}

}  // namespace lanemerge::gateway
