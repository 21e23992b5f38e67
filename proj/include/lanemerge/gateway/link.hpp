#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

#include "lanemerge/core/flat_config.hpp"

namespace lanemerge::gateway {

/// Emulated radio link, one direction. Bandwidth 0 means unlimited.
struct LinkProfile {
    double uplink_kbps = 320.0;
    double downlink_kbps = 4700.0;
    double latency_ms = 0.0;
    double jitter_ms = 0.0;
    double loss = 0.0;
    std::uint64_t seed = 1;

    /// Profile with no delay, no cap and no loss.
    static LinkProfile ideal();
    /// Reads `uplink_kbps`, `downlink_kbps`, `latency_ms`, `jitter_ms`, `loss`, `seed`.
    static LinkProfile from_config(const FlatConfig& cfg, const std::string& prefix = "");
    void validate() const;
    [[nodiscard]] bool is_ideal() const;
};

/// Deterministic per seed. Each message first waits for the link to be free,
/// occupies it for bytes*8/bandwidth, then travels latency + U[0, jitter].
/// Arrival order equals send order.
class LinkSimulator {
public:
    LinkSimulator(double bandwidth_kbps, double latency_ms, double jitter_ms, double loss, std::uint64_t seed);

    /// Arrival time in ms for a message handed to the link at `send_ms`, or
    /// nullopt if it is lost. `send_ms` must not decrease between calls.
    std::optional<double> transmit(double send_ms, std::size_t bytes);

    /// Serialization delay in ms for `bytes` at this link's bandwidth.
    [[nodiscard]] double serialization_ms(std::size_t bytes) const;

    [[nodiscard]] std::uint64_t sent() const { return sent_; }
    [[nodiscard]] std::uint64_t lost() const { return lost_; }

private:
    double bandwidth_kbps_;
    double latency_ms_;
    double jitter_ms_;
    double loss_;
    std::mt19937_64 rng_;
    double busy_until_ = -1e300;
    double last_arrival_ = -1e300;
    std::uint64_t sent_ = 0;
    std::uint64_t lost_ = 0;
};

/// Runs callbacks at their due time on one worker, in submission order.
class DelayLine {
public:
    using TimePoint = std::chrono::steady_clock::time_point;

    DelayLine();
    ~DelayLine();
    DelayLine(const DelayLine&) = delete;
    DelayLine& operator=(const DelayLine&) = delete;

    void submit(TimePoint due, std::function<void()> fn);
    /// Drops pending work and joins the worker.
    void stop();

private:
    void run();

    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::pair<TimePoint, std::function<void()>>> items_;
    bool stopping_ = false;
    std::thread worker_;
};

}  // namespace lanemerge::gateway
