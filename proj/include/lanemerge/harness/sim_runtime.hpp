#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <vector>

#include "lanemerge/core/node.hpp"
#include "lanemerge/gateway/broker.hpp"
#include "lanemerge/gateway/link.hpp"
#include "lanemerge/harness/transport.hpp"

namespace lanemerge::harness {

struct SimOptions {
    /// Applied to Vehicle-role sessions in both directions.
    std::optional<gateway::LinkProfile> vehicle_link;
    Millis start_ms = 1'700'000'000'000;
};

/// Single-threaded discrete-event runtime in virtual time. Services and
/// world sessions share one broker; vehicle sessions get emulated links.
/// Events at equal times run in scheduling order, so a run is a pure
/// function of its inputs.
class SimRuntime final : public Transport {
public:
    using LogSink = std::function<void(const LogRecord&)>;

    SimRuntime(SimOptions options, LogSink sink);

    void add_node(ServiceNode& node);
    /// Calls `frame(t)` at `first`, `first + period`, ... while `keep_going()` holds.
    void set_frame_driver(std::function<void(Millis)> frame, Millis first, Millis period,
                          std::function<bool()> keep_going);

    /// Processes events until none remain before `deadline` or the frame
    /// driver stops; returns the virtual time reached.
    Millis run(Millis deadline);

    [[nodiscard]] Millis now() const { return static_cast<Millis>(now_us_ / 1000); }
    [[nodiscard]] std::uint64_t delivered() const { return delivered_; }
    [[nodiscard]] std::uint64_t lost() const { return lost_; }
    [[nodiscard]] std::size_t open_sessions() const;

    SessionHandle connect(const std::string& name, ClientRole role, Handler handler) override;
    void subscribe(SessionHandle session, const std::string& topic) override;
    void publish(SessionHandle session, const std::string& topic, Payload payload, Millis now) override;
    void disconnect(SessionHandle session) override;
    void log(const LogRecord& record) override { sink_(record); }

private:
    struct Session {
        std::string name;
        ClientRole role = ClientRole::Vehicle;
        ServiceNode* node = nullptr;
        Handler handler;
        std::unique_ptr<gateway::LinkSimulator> up, down;
        std::map<std::string, std::uint64_t> seq;
        bool open = true;
    };
    enum class Kind { Route, Deliver, Tick, Frame };
    struct Event {
        std::int64_t t_us;
        std::uint64_t order;
        Kind kind;
        gateway::SessionId session;  // sender for Route, recipient for Deliver, node for Tick
        std::shared_ptr<const V2XEnvelope> envelope;
        std::size_t bytes;
        bool operator>(const Event& o) const { return t_us != o.t_us ? t_us > o.t_us : order > o.order; }
    };

    gateway::SessionId open(const std::string& name, ClientRole role);
    void schedule(Event e);
    void route(gateway::SessionId from, const std::shared_ptr<const V2XEnvelope>& env, std::size_t bytes);
    void flush(gateway::SessionId from, Outbox& out);
    void schedule_tick(gateway::SessionId id, Millis after);

    SimOptions options_;
    LogSink sink_;
    gateway::Broker broker_;
    std::map<gateway::SessionId, Session> sessions_;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
    std::uint64_t order_ = 0;
    std::int64_t now_us_ = 0;
    std::uint64_t link_seed_ = 0;
    std::uint64_t delivered_ = 0, lost_ = 0;
    std::function<void(Millis)> frame_;
    std::function<bool()> keep_going_;
    Millis frame_period_ = 0;
};

}  // namespace lanemerge::harness
