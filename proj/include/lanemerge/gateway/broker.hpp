#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "lanemerge/core/types.hpp"

namespace lanemerge::gateway {

using SessionId = std::uint64_t;

/// A routed message: the original wire bytes plus routing metadata.
struct Outbound {
    MsgType type = MsgType::RudUpdate;
    std::shared_ptr<const std::string> line;  // exactly what the publisher sent, '\n' included
    std::int64_t enqueued_us = 0;
    SessionId from = 0;
};

struct QueueStats {
    std::uint64_t enqueued = 0;
    std::uint64_t delivered = 0;      // popped by the transport
    std::uint64_t dropped_rud = 0;    // evicted under backpressure
    std::uint64_t enqueued_rud = 0;
    std::uint64_t delivered_rud = 0;
};

/// Per-subscriber outbound FIFO with a high-water mark. Above the mark the
/// oldest queued RudUpdate is evicted; other message types are never dropped.
class SessionQueue {
public:
    explicit SessionQueue(std::size_t high_water) : high_water_(high_water) {}

    void push(Outbound msg);
    /// Blocks until a message is available or the queue is closed.
    std::optional<Outbound> pop_wait();
    std::optional<Outbound> try_pop();
    void close();
    [[nodiscard]] bool closed() const;
    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] QueueStats stats() const;

private:
    std::size_t high_water_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Outbound> items_;
    QueueStats stats_;
    bool closed_ = false;
};

struct BrokerOptions {
    std::size_t high_water = 1024;
};

struct SessionInfo {
    SessionId id = 0;
    ClientRole role = ClientRole::Vehicle;
    std::string name;
};

/// Transport-independent publish/subscribe core. Topics match exactly; a
/// subscription may carry a bound that filters RUD payloads by position.
/// Thread-safe: publishes take a shared lock, (un)subscribe and session
/// changes take an exclusive one.
class Broker {
public:
    using Clock = std::function<std::int64_t()>;  // microseconds

    explicit Broker(BrokerOptions options = {}, Clock clock = {});

    SessionId open_session(ClientRole role, std::string name);
    void close_session(SessionId id);
    [[nodiscard]] std::shared_ptr<SessionQueue> queue(SessionId id) const;
    [[nodiscard]] std::optional<SessionInfo> session(SessionId id) const;
    [[nodiscard]] std::size_t session_count() const;

    /// Idempotent; re-subscribing replaces the bound. Throws InvariantError on an empty topic.
    void subscribe(SessionId id, const std::string& topic, std::optional<BoundingBox> bound = std::nullopt);
    /// Unknown topics are a no-op.
    void unsubscribe(SessionId id, const std::string& topic);

    /// Routes `line` (the encoded form of `envelope`) to every matching
    /// subscriber except the publisher. Returns the number of recipients.
    std::size_t publish(SessionId from, const V2XEnvelope& envelope, std::shared_ptr<const std::string> line);

    /// Recipients `publish` would deliver to, in session-id order, without enqueueing.
    [[nodiscard]] std::vector<SessionId> route(SessionId from, const V2XEnvelope& envelope) const;

    [[nodiscard]] std::uint64_t published() const;

private:
    struct Session {
        SessionInfo info;
        std::shared_ptr<SessionQueue> queue;
    };

    BrokerOptions options_;
    Clock clock_;
    mutable std::shared_mutex mu_;
    SessionId next_id_ = 1;
    std::unordered_map<SessionId, Session> sessions_;
    std::unordered_map<std::string, std::map<SessionId, std::optional<BoundingBox>>> routes_;
    std::atomic<std::uint64_t> published_{0};
};

}  // namespace lanemerge::gateway
