#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <sys/types.h>
#include <vector>

#include "lanemerge/core/node.hpp"
#include "lanemerge/gateway/client.hpp"
#include "lanemerge/gateway/socket.hpp"
#include "lanemerge/harness/transport.hpp"

namespace lanemerge::harness {

/// Set by SIGINT/SIGTERM once install_stop_handlers() ran.
std::atomic<bool>& stop_requested();
void install_stop_handlers();

/// Drives a ServiceNode over a gateway connection in real time until `stop`
/// is set. Incoming messages are queued by the socket thread and handled on
/// the calling thread together with the node's periodic ticks. If
/// `ready_file` is non-empty it is created once every subscription is acked.
void run_service(ServiceNode& node, const net::Endpoint& gateway, const std::atomic<bool>& stop,
                 const std::filesystem::path& ready_file = {});

/// Transport for the world simulator over real sockets: one gateway client
/// per session and a direct line to the KPI collector for logs. Received
/// messages are queued and dispatched by pump() on the caller's thread.
class SocketTransport final : public Transport {
public:
    SocketTransport(net::Endpoint gateway, net::Endpoint kpi);
    ~SocketTransport() override;

    SessionHandle connect(const std::string& name, ClientRole role, Handler handler) override;
    void subscribe(SessionHandle session, const std::string& topic) override;
    void publish(SessionHandle session, const std::string& topic, Payload payload, Millis now) override;
    void disconnect(SessionHandle session) override;
    void log(const LogRecord& record) override;

    /// Dispatches queued messages until the monotonic clock reaches `until_ms`.
    void pump(Millis until_ms);
    void close_all();
    [[nodiscard]] std::size_t open_sessions() const;

private:
    struct Incoming {
        SessionHandle session;
        V2XEnvelope envelope;
        Millis received_at;
    };
    net::Endpoint gateway_;
    net::Fd kpi_;
    std::uint64_t log_seq_ = 0;
    std::map<SessionHandle, std::unique_ptr<gateway::GatewayClient>> clients_;
    std::map<SessionHandle, Handler> handlers_;
    SessionHandle next_ = 1;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Incoming> inbox_;
};

/// A child process running one CLI subcommand.
class ChildProcess {
public:
    ChildProcess(const std::filesystem::path& exe, std::vector<std::string> args,
                 const std::filesystem::path& log_file);
    ~ChildProcess();
    ChildProcess(const ChildProcess&) = delete;
    ChildProcess& operator=(const ChildProcess&) = delete;

    [[nodiscard]] bool running();
    /// SIGTERM, then SIGKILL after `grace_ms`; returns the exit status
    /// (128 + signal for a signalled death).
    int terminate(int grace_ms = 5000);
    [[nodiscard]] const std::string& name() const { return name_; }

private:
    pid_t pid_ = -1;
    std::string name_;
    std::optional<int> status_;
};

/// Free loopback TCP port (bound and released; racy but adequate for tests).
std::uint16_t free_port();
/// Waits until `file` exists or `timeout_ms` passes.
bool wait_for_file(const std::filesystem::path& file, int timeout_ms);

}  // namespace lanemerge::harness
