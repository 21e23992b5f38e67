#pragma once

#include <atomic>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "lanemerge/gateway/broker.hpp"
#include "lanemerge/gateway/link.hpp"
#include "lanemerge/gateway/socket.hpp"

namespace lanemerge::gateway {

struct ServerOptions {
    net::Endpoint listen{"127.0.0.1", 5700};
    BrokerOptions broker;
    /// Applied to Vehicle-role sessions: uplink before routing, downlink before the socket write.
    std::optional<LinkProfile> vehicle_link;
};

struct ServerStats {
    std::uint64_t connections = 0;
    std::uint64_t malformed = 0;
    std::uint64_t rejected_handshakes = 0;
    std::uint64_t link_lost = 0;
};

/// TCP front end of the broker. Every accepted socket gets TCP_NODELAY, a
/// reader thread and a writer thread. The first line must be a Subscribe
/// envelope with action Hello; it is answered with an Ack.
class GatewayServer {
public:
    explicit GatewayServer(ServerOptions options);
    ~GatewayServer();
    GatewayServer(const GatewayServer&) = delete;
    GatewayServer& operator=(const GatewayServer&) = delete;

    /// Binds and starts accepting. Throws net::SocketError if the port is taken.
    void start();
    void stop();
    [[nodiscard]] std::uint16_t port() const { return port_; }
    [[nodiscard]] Broker& broker() { return broker_; }
    [[nodiscard]] ServerStats stats() const;
    [[nodiscard]] std::size_t live_connections() const;
    /// Broker forwarding delays in microseconds: socket write completion minus
    /// the later of routing time and emulated downlink arrival.
    [[nodiscard]] std::vector<std::int64_t> forwarding_samples() const;

private:
    struct Connection;
    void accept_loop();
    void reader(Connection& c);
    void writer(Connection& c);
    void reap(bool all);

    ServerOptions options_;
    Broker broker_;
    net::Fd listener_;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread acceptor_;
    mutable std::mutex conn_mu_;
    std::list<std::unique_ptr<Connection>> connections_;
    std::atomic<std::uint64_t> n_connections_{0}, malformed_{0}, rejected_{0}, link_lost_{0};
    std::uint64_t next_link_seed_ = 0;
    mutable std::mutex fwd_mu_;
    std::vector<std::int64_t> forwarding_us_;
};

}  // namespace lanemerge::gateway
