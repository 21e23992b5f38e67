#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "lanemerge/core/types.hpp"
#include "lanemerge/gateway/socket.hpp"

namespace lanemerge::gateway {

struct ClientOptions {
    net::Endpoint gateway{"127.0.0.1", 5700};
    ClientRole role = ClientRole::Vehicle;
    std::string name;
    std::chrono::milliseconds connect_timeout{5000};
};

/// Blocking TCP client of the gateway. Performs the Hello handshake on
/// construction. Incoming messages go to the handler if one is set, else to
/// an internal queue read with receive().
class GatewayClient {
public:
    using Handler = std::function<void(V2XEnvelope&&)>;

    explicit GatewayClient(ClientOptions options, Handler handler = {});
    ~GatewayClient();
    GatewayClient(const GatewayClient&) = delete;
    GatewayClient& operator=(const GatewayClient&) = delete;

    /// Returns once the broker acknowledged the subscription.
    void subscribe(const std::string& topic, std::optional<BoundingBox> bound = std::nullopt);
    void unsubscribe(const std::string& topic);

    /// Stamps sender and a per-topic sequence number, then writes one line.
    void publish(const std::string& topic, Payload payload, Millis sent_at);
    /// Writes an already-encoded line verbatim.
    void send_raw(std::string_view line);

    std::optional<V2XEnvelope> receive(std::chrono::milliseconds timeout);

    [[nodiscard]] bool connected() const { return !closed_.load(); }
    [[nodiscard]] const std::string& name() const { return options_.name; }
    [[nodiscard]] std::uint64_t malformed() const { return malformed_.load(); }
    [[nodiscard]] const net::Fd& socket() const { return fd_; }
    void close();

private:
    void read_loop();
    void send_control(SubscribeAction action, const std::string& topic, std::optional<BoundingBox> bound);
    void wait_acks(std::uint64_t target);

    ClientOptions options_;
    Handler handler_;
    net::Fd fd_;
    std::mutex write_mu_;
    std::map<std::string, std::uint64_t> seq_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<V2XEnvelope> inbox_;
    std::uint64_t acks_ = 0;
    std::uint64_t controls_sent_ = 0;
    std::atomic<bool> closed_{false};
    std::atomic<std::uint64_t> malformed_{0};
    std::thread reader_;
};

}  // namespace lanemerge::gateway
