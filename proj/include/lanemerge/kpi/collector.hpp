#pragma once

#include <atomic>
#include <list>
#include <memory>
#include <mutex>
#include <thread>

#include "lanemerge/core/node.hpp"
#include "lanemerge/gateway/socket.hpp"
#include "lanemerge/kpi/kpi.hpp"

namespace lanemerge::kpi {

/// Direct TCP ingestion: one envelope (or bare LogRecord) per line, no handshake.
class LogCollector {
public:
    LogCollector(LogStore& store, net::Endpoint listen);
    ~LogCollector();
    LogCollector(const LogCollector&) = delete;
    LogCollector& operator=(const LogCollector&) = delete;

    void start();
    void stop();
    [[nodiscard]] std::uint16_t port() const { return port_; }

private:
    struct Conn {
        net::Fd fd;
        std::thread thread;
        std::atomic<bool> done{false};
    };
    void accept_loop();
    void reap(bool all);

    LogStore& store_;
    net::Endpoint listen_;
    net::Fd listener_;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread acceptor_;
    std::mutex mu_;
    std::list<std::unique_ptr<Conn>> conns_;
};

/// Gateway-side ingestion of the "logs" topic.
class KpiService final : public ServiceNode {
public:
    explicit KpiService(LogStore& store, std::string name = "kpi") : store_(store), name_(std::move(name)) {}
    [[nodiscard]] std::string name() const override { return name_; }
    [[nodiscard]] ClientRole role() const override { return ClientRole::Kpi; }
    [[nodiscard]] std::vector<TopicSubscription> subscriptions() const override { return {{kTopicLogs, std::nullopt}}; }
    void on_message(const V2XEnvelope& envelope, Millis now, Outbox& out) override;

private:
    LogStore& store_;
    std::string name_;
};

}  // namespace lanemerge::kpi
