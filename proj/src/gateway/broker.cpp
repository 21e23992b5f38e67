#include "lanemerge/gateway/broker.hpp"

#include <algorithm>
#include <chrono>

namespace lanemerge::gateway {

void SessionQueue::push(Outbound msg) {
    {
        std::lock_guard lock(mu_);
        if (closed_) return;
        ++stats_.enqueued;
        if (msg.type == MsgType::RudUpdate) ++stats_.enqueued_rud;
        items_.push_back(std::move(msg));
        while (items_.size() > high_water_) {
            const auto oldest = std::find_if(items_.begin(), items_.end(),
                                             [](const Outbound& o) { return o.type == MsgType::RudUpdate; });
            if (oldest == items_.end()) break;
            items_.erase(oldest);
            ++stats_.dropped_rud;
        }
    }
    cv_.notify_one();
}

std::optional<Outbound> SessionQueue::pop_wait() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    Outbound o = std::move(items_.front());
    items_.pop_front();
    ++stats_.delivered;
    if (o.type == MsgType::RudUpdate) ++stats_.delivered_rud;
    return o;
}

std::optional<Outbound> SessionQueue::try_pop() {
    std::lock_guard lock(mu_);
    if (items_.empty()) return std::nullopt;
    Outbound o = std::move(items_.front());
    items_.pop_front();
    ++stats_.delivered;
    if (o.type == MsgType::RudUpdate) ++stats_.delivered_rud;
    return o;
}

void SessionQueue::close() {
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool SessionQueue::closed() const {
    std::lock_guard lock(mu_);
    return closed_;
}

std::size_t SessionQueue::size() const {
    std::lock_guard lock(mu_);
    return items_.size();
}

QueueStats SessionQueue::stats() const {
    std::lock_guard lock(mu_);
    return stats_;
}

Broker::Broker(BrokerOptions options, Clock clock) : options_(options), clock_(std::move(clock)) {
    if (!clock_) {
        clock_ = [] {
            return std::chrono::duration_cast<std::chrono::microseconds>(
                       std::chrono::steady_clock::now().time_since_epoch())
                .count();
        };
    }
}

SessionId Broker::open_session(ClientRole role, std::string name) {
    std::unique_lock lock(mu_);
    const SessionId id = next_id_++;
    sessions_.emplace(id, Session{SessionInfo{id, role, std::move(name)},
                                  std::make_shared<SessionQueue>(options_.high_water)});
    return id;
}

void Broker::close_session(SessionId id) {
    std::shared_ptr<SessionQueue> q;
    {
        std::unique_lock lock(mu_);
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) return;
        q = it->second.queue;
        sessions_.erase(it);
        for (auto r = routes_.begin(); r != routes_.end();) {
            r->second.erase(id);
            r = r->second.empty() ? routes_.erase(r) : std::next(r);
        }
    }
    q->close();
}

std::shared_ptr<SessionQueue> Broker::queue(SessionId id) const {
    std::shared_lock lock(mu_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second.queue;
}

std::optional<SessionInfo> Broker::session(SessionId id) const {
    std::shared_lock lock(mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) return std::nullopt;
    return it->second.info;
}

std::size_t Broker::session_count() const {
    std::shared_lock lock(mu_);
    return sessions_.size();
}

void Broker::subscribe(SessionId id, const std::string& topic, std::optional<BoundingBox> bound) {
    if (topic.empty()) throw InvariantError("subscription topic must be non-empty");
    std::unique_lock lock(mu_);
    if (!sessions_.contains(id)) return;
    routes_[topic][id] = bound;
}

void Broker::unsubscribe(SessionId id, const std::string& topic) {
    std::unique_lock lock(mu_);
    const auto it = routes_.find(topic);
    if (it == routes_.end()) return;
    it->second.erase(id);
    if (it->second.empty()) routes_.erase(it);
}

std::size_t Broker::publish(SessionId from, const V2XEnvelope& envelope, std::shared_ptr<const std::string> line) {
    published_.fetch_add(1, std::memory_order_relaxed);
    const MsgType type = envelope.msg_type();
    const Rud* rud = std::get_if<Rud>(&envelope.payload);
    const std::int64_t now = clock_();
    std::size_t count = 0;
    std::shared_lock lock(mu_);
    const auto route = routes_.find(envelope.topic);
    if (route == routes_.end()) return 0;
    for (const auto& [id, bound] : route->second) {
        if (id == from) continue;
        if (rud != nullptr && bound && !bound->contains(rud->position)) continue;
        const auto s = sessions_.find(id);
        if (s == sessions_.end()) continue;
        s->second.queue->push(Outbound{type, line, now, from});
        ++count;
    }
    return count;
}

std::vector<SessionId> Broker::route(SessionId from, const V2XEnvelope& envelope) const {
    std::vector<SessionId> out;
    const Rud* rud = std::get_if<Rud>(&envelope.payload);
    std::shared_lock lock(mu_);
    const auto route = routes_.find(envelope.topic);
    if (route == routes_.end()) return out;
    for (const auto& [id, bound] : route->second) {
        if (id == from) continue;
        if (rud != nullptr && bound && !bound->contains(rud->position)) continue;
        if (sessions_.contains(id)) out.push_back(id);
    }
    return out;
}

std::uint64_t Broker::published() const { return published_.load(std::memory_order_relaxed); }

}  // namespace lanemerge::gateway
