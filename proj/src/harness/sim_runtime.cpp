#include "lanemerge/harness/sim_runtime.hpp"

#include <cmath>

#include "lanemerge/core/wire.hpp"

namespace lanemerge::harness {

SimRuntime::SimRuntime(SimOptions options, LogSink sink)
    : options_(std::move(options)), sink_(std::move(sink)), broker_({}, [this] { return now_us_; }) {
    if (options_.vehicle_link) options_.vehicle_link->validate();
    now_us_ = options_.start_ms * 1000;
}

gateway::SessionId SimRuntime::open(const std::string& name, ClientRole role) {
    const auto id = broker_.open_session(role, name);
    Session s;
    s.name = name;
    s.role = role;
    if (options_.vehicle_link && role == ClientRole::Vehicle && !options_.vehicle_link->is_ideal()) {
        const auto& p = *options_.vehicle_link;
        const std::uint64_t seed = p.seed * 0x9E3779B97F4A7C15ULL + (++link_seed_);
        s.up = std::make_unique<gateway::LinkSimulator>(p.uplink_kbps, p.latency_ms, p.jitter_ms, p.loss, seed);
        s.down = std::make_unique<gateway::LinkSimulator>(p.downlink_kbps, p.latency_ms, p.jitter_ms, p.loss,
                                                          seed ^ 0xD1B54A32D192ED03ULL);
    }
    sessions_.emplace(id, std::move(s));
    return id;
}

void SimRuntime::add_node(ServiceNode& node) {
    const auto id = open(node.name(), node.role());
    sessions_.at(id).node = &node;
    for (const auto& sub : node.subscriptions()) broker_.subscribe(id, sub.topic, sub.bound);
    schedule_tick(id, now());
}

void SimRuntime::schedule_tick(gateway::SessionId id, Millis after) {
    auto& s = sessions_.at(id);
    if (const auto t = s.node->next_tick(after)) {
        schedule({*t * 1000, 0, Kind::Tick, id, nullptr, 0});
    }
}

void SimRuntime::set_frame_driver(std::function<void(Millis)> frame, Millis first, Millis period,
                                  std::function<bool()> keep_going) {
    frame_ = std::move(frame);
    keep_going_ = std::move(keep_going);
    frame_period_ = period;
    schedule({first * 1000, 0, Kind::Frame, 0, nullptr, 0});
}

void SimRuntime::schedule(Event e) {
    e.order = order_++;
    events_.push(std::move(e));
}

std::size_t SimRuntime::open_sessions() const {
    std::size_t n = 0;
    for (const auto& [id, s] : sessions_) n += s.open ? 1 : 0;
    return n;
}

SessionHandle SimRuntime::connect(const std::string& name, ClientRole role, Handler handler) {
    const auto id = open(name, role);
    sessions_.at(id).handler = std::move(handler);
    return id;
}

void SimRuntime::subscribe(SessionHandle session, const std::string& topic) { broker_.subscribe(session, topic); }

void SimRuntime::disconnect(SessionHandle session) {
    auto it = sessions_.find(session);
    if (it == sessions_.end() || !it->second.open) return;
    it->second.open = false;
    broker_.close_session(session);
}

void SimRuntime::publish(SessionHandle session, const std::string& topic, Payload payload, Millis now) {
    auto& s = sessions_.at(session);
    if (!s.open) return;
    auto env = std::make_shared<V2XEnvelope>();
    env->topic = topic;
    env->sender = s.name;
    env->seq = ++s.seq[topic];
    env->sent_at = now;
    env->payload = std::move(payload);
    std::size_t bytes = 0;
    if (s.up) {
        bytes = wire::encode_envelope(*env).size();
        const auto arrival = s.up->transmit(static_cast<double>(now_us_) / 1000.0, bytes);
        if (!arrival) {
            ++lost_;
            return;
        }
        schedule({static_cast<std::int64_t>(std::llround(*arrival * 1000.0)), 0, Kind::Route, session, env, bytes});
        return;
    }
    route(session, env, bytes);
}

void SimRuntime::route(gateway::SessionId from, const std::shared_ptr<const V2XEnvelope>& env, std::size_t bytes) {
    for (const auto to : broker_.route(from, *env)) {
        auto& r = sessions_.at(to);
        std::int64_t at = now_us_;
        if (r.down) {
            if (bytes == 0) bytes = wire::encode_envelope(*env).size();
            const auto arrival = r.down->transmit(static_cast<double>(now_us_) / 1000.0, bytes);
            if (!arrival) {
                ++lost_;
                continue;
            }
            at = static_cast<std::int64_t>(std::llround(*arrival * 1000.0));
        }
        schedule({at, 0, Kind::Deliver, to, env, bytes});
    }
}

void SimRuntime::flush(gateway::SessionId from, Outbox& out) {
    for (auto& m : out.take()) {
        if (m.topic == kTopicLogs) {
            if (const auto* rec = std::get_if<LogRecord>(&m.payload)) sink_(*rec);
            continue;
        }
        publish(from, m.topic, std::move(m.payload), now());
    }
}

Millis SimRuntime::run(Millis deadline) {
    bool frames_on = static_cast<bool>(frame_);
    while (!events_.empty()) {
        const Event e = events_.top();
        if (e.t_us > deadline * 1000) break;
        events_.pop();
        now_us_ = std::max(now_us_, e.t_us);
        switch (e.kind) {
            case Kind::Route: route(e.session, e.envelope, e.bytes); break;
            case Kind::Deliver: {
                auto& s = sessions_.at(e.session);
                if (!s.open) break;
                ++delivered_;
                if (s.node != nullptr) {
                    Outbox out;
                    s.node->on_message(*e.envelope, now(), out);
                    flush(e.session, out);
                } else if (s.handler) {
                    s.handler(*e.envelope, now());
                }
                break;
            }
            case Kind::Tick: {
                auto& s = sessions_.at(e.session);
                Outbox out;
                s.node->on_tick(now(), out);
                flush(e.session, out);
                schedule_tick(e.session, now());
                break;
            }
            case Kind::Frame:
                if (!frames_on || !keep_going_()) {
                    frames_on = false;
                    break;
                }
                frame_(now());
                if (keep_going_()) {
                    schedule({e.t_us + frame_period_ * 1000, 0, Kind::Frame, 0, nullptr, 0});
                } else {
                    frames_on = false;
                }
                break;
        }
        // Once the world is done only in-flight traffic matters; periodic
        // service ticks alone would never drain the queue.
        if (frame_ && !frames_on) {
            bool pending = false;
            std::priority_queue<Event, std::vector<Event>, std::greater<>> copy = events_;
            while (!copy.empty()) {
                if (copy.top().kind == Kind::Route || copy.top().kind == Kind::Deliver) {
                    pending = true;
                    break;
                }
                copy.pop();
            }
            if (!pending) break;
        }
    }
    return now();
}

}  // namespace lanemerge::harness
