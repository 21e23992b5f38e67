#include "lanemerge/gateway/link.hpp"

#include <algorithm>
#include <stdexcept>

namespace lanemerge::gateway {

LinkProfile LinkProfile::ideal() {
    LinkProfile p;
    p.uplink_kbps = 0.0;
    p.downlink_kbps = 0.0;
    return p;
}

LinkProfile LinkProfile::from_config(const FlatConfig& cfg, const std::string& prefix) {
    LinkProfile p;
    p.uplink_kbps = cfg.get_double(prefix + "uplink_kbps", p.uplink_kbps);
    p.downlink_kbps = cfg.get_double(prefix + "downlink_kbps", p.downlink_kbps);
    p.latency_ms = cfg.get_double(prefix + "latency_ms", p.latency_ms);
    p.jitter_ms = cfg.get_double(prefix + "jitter_ms", p.jitter_ms);
    p.loss = cfg.get_double(prefix + "loss", p.loss);
    p.seed = static_cast<std::uint64_t>(cfg.get_int(prefix + "seed", static_cast<long long>(p.seed)));
    p.validate();
    return p;
}

void LinkProfile::validate() const {
    if (uplink_kbps < 0 || downlink_kbps < 0 || latency_ms < 0 || jitter_ms < 0) {
        throw std::invalid_argument("link profile values must be non-negative");
    }
    if (!(loss >= 0.0 && loss <= 1.0)) throw std::invalid_argument("link loss must lie in [0, 1]");
}

bool LinkProfile::is_ideal() const {
    return uplink_kbps == 0.0 && downlink_kbps == 0.0 && latency_ms == 0.0 && jitter_ms == 0.0 && loss == 0.0;
}

LinkSimulator::LinkSimulator(double bandwidth_kbps, double latency_ms, double jitter_ms, double loss,
                             std::uint64_t seed)
    : bandwidth_kbps_(bandwidth_kbps), latency_ms_(latency_ms), jitter_ms_(jitter_ms), loss_(loss), rng_(seed) {}

double LinkSimulator::serialization_ms(std::size_t bytes) const {
    // kbps = 1000 bit/s per unit, so bits / kbps is milliseconds.
    return bandwidth_kbps_ > 0.0 ? static_cast<double>(bytes) * 8.0 / bandwidth_kbps_ : 0.0;
}

std::optional<double> LinkSimulator::transmit(double send_ms, std::size_t bytes) {
    ++sent_;
    const double start = std::max(send_ms, busy_until_);
    busy_until_ = start + serialization_ms(bytes);
    const double u_loss = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    const double u_jitter = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    if (loss_ > 0.0 && u_loss < loss_) {
        ++lost_;
        return std::nullopt;
    }
    const double arrival = std::max(busy_until_ + latency_ms_ + u_jitter * jitter_ms_, last_arrival_);
    last_arrival_ = arrival;
    return arrival;
}

DelayLine::DelayLine() : worker_([this] { run(); }) {}

DelayLine::~DelayLine() { stop(); }

void DelayLine::submit(TimePoint due, std::function<void()> fn) {
    {
        std::lock_guard lock(mu_);
        if (stopping_) return;
        items_.emplace_back(due, std::move(fn));
    }
    cv_.notify_one();
}

void DelayLine::stop() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
        items_.clear();
    }
    cv_.notify_all();
    if (worker_.joinable() && worker_.get_id() != std::this_thread::get_id()) worker_.join();
}

void DelayLine::run() {
    std::unique_lock lock(mu_);
    while (true) {
        cv_.wait(lock, [&] { return stopping_ || !items_.empty(); });
        if (stopping_) return;
        const TimePoint due = items_.front().first;
        if (cv_.wait_until(lock, due, [&] { return stopping_; })) return;
        auto fn = std::move(items_.front().second);
        items_.pop_front();
        lock.unlock();
        fn();
        lock.lock();
    }
}

}  // namespace lanemerge::gateway
