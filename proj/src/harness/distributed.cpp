#include "lanemerge/harness/distributed.hpp"

#include <csignal>
#include <fcntl.h>
#include <fstream>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "lanemerge/core/clock.hpp"
#include "lanemerge/core/wire.hpp"

extern char** environ;

namespace lanemerge::harness {

std::atomic<bool>& stop_requested() {
    static std::atomic<bool> flag{false};
    return flag;
}

namespace {
void on_stop_signal(int) { stop_requested().store(true); }
}  // namespace

void install_stop_handlers() {
    struct sigaction sa {};
    sa.sa_handler = on_stop_signal;
    sigemptyset(&sa.sa_mask);
    sigaction(SIGTERM, &sa, nullptr);
    sigaction(SIGINT, &sa, nullptr);
    std::signal(SIGPIPE, SIG_IGN);
}

void run_service(ServiceNode& node, const net::Endpoint& gateway, const std::atomic<bool>& stop,
                 const std::filesystem::path& ready_file) {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::pair<V2XEnvelope, Millis>> inbox;
    gateway::GatewayClient client({gateway, node.role(), node.name(), std::chrono::milliseconds(5000)},
                                  [&](V2XEnvelope&& e) {
                                      {
                                          std::lock_guard lock(mu);
                                          inbox.emplace_back(std::move(e), monotonic_ms());
                                      }
                                      cv.notify_one();
                                  });
    for (const auto& s : node.subscriptions()) client.subscribe(s.topic, s.bound);
    if (!ready_file.empty()) std::ofstream(ready_file) << "ready\n";

    auto flush = [&](Outbox& out, Millis now) {
        for (auto& m : out.take()) client.publish(m.topic, std::move(m.payload), now);
    };
    auto next_tick = node.next_tick(monotonic_ms());
    while (!stop.load() && client.connected()) {
        std::deque<std::pair<V2XEnvelope, Millis>> batch;
        {
            std::unique_lock lock(mu);
            const auto wake = next_tick ? std::chrono::steady_clock::time_point(std::chrono::milliseconds(*next_tick))
                                        : std::chrono::steady_clock::now() + std::chrono::milliseconds(100);
            cv.wait_until(lock, std::min(wake, std::chrono::steady_clock::now() + std::chrono::milliseconds(100)),
                          [&] { return !inbox.empty() || stop.load(); });
            batch.swap(inbox);
        }
        for (auto& [env, at] : batch) {
            Outbox out;
            node.on_message(env, at, out);
            flush(out, monotonic_ms());
        }
        const Millis now = monotonic_ms();
        if (next_tick && now >= *next_tick) {
            Outbox out;
            node.on_tick(*next_tick, out);
            flush(out, monotonic_ms());
            next_tick = node.next_tick(now);
        }
    }
    client.close();
}

SocketTransport::SocketTransport(net::Endpoint gateway, net::Endpoint kpi) : gateway_(std::move(gateway)) {
    kpi_ = net::connect_tcp(kpi);
}

SocketTransport::~SocketTransport() { close_all(); }

SessionHandle SocketTransport::connect(const std::string& name, ClientRole role, Handler handler) {
    const SessionHandle id = next_++;
    auto client = std::make_unique<gateway::GatewayClient>(
        gateway::ClientOptions{gateway_, role, name, std::chrono::milliseconds(5000)}, [this, id](V2XEnvelope&& e) {
            const Millis at = monotonic_ms();
            {
                std::lock_guard lock(mu_);
                inbox_.push_back({id, std::move(e), at});
            }
            cv_.notify_one();
        });
    {
        std::lock_guard lock(mu_);
        handlers_[id] = std::move(handler);
    }
    clients_.emplace(id, std::move(client));
    return id;
}

void SocketTransport::subscribe(SessionHandle session, const std::string& topic) {
    clients_.at(session)->subscribe(topic);
}

void SocketTransport::publish(SessionHandle session, const std::string& topic, Payload payload, Millis now) {
    const auto it = clients_.find(session);
    if (it == clients_.end()) return;
    try {
        it->second->publish(topic, std::move(payload), now);
    } catch (const net::SocketError&) {
    }
}

void SocketTransport::disconnect(SessionHandle session) {
    const auto it = clients_.find(session);
    if (it == clients_.end()) return;
    it->second->close();
    clients_.erase(it);
    std::lock_guard lock(mu_);
    handlers_.erase(session);
}

void SocketTransport::log(const LogRecord& record) {
    if (!kpi_.valid()) return;
    V2XEnvelope env{kTopicLogs, "world", ++log_seq_, record.t, record};
    try {
        net::write_all(kpi_, wire::encode_envelope(env));
    } catch (const net::SocketError&) {
        kpi_.reset();
    }
}

void SocketTransport::pump(Millis until_ms) {
    const auto deadline = std::chrono::steady_clock::time_point(std::chrono::milliseconds(until_ms));
    while (true) {
        std::deque<Incoming> batch;
        {
            std::unique_lock lock(mu_);
            if (!cv_.wait_until(lock, deadline, [&] { return !inbox_.empty(); })) return;
            batch.swap(inbox_);
        }
        for (auto& in : batch) {
            Handler h;
            {
                std::lock_guard lock(mu_);
                const auto it = handlers_.find(in.session);
                if (it == handlers_.end()) continue;
                h = it->second;
            }
            if (h) h(in.envelope, in.received_at);
        }
    }
}

void SocketTransport::close_all() {
    while (!clients_.empty()) disconnect(clients_.begin()->first);
    if (kpi_.valid()) {
        ::shutdown(kpi_.get(), SHUT_WR);
        kpi_.reset();
    }
}

std::size_t SocketTransport::open_sessions() const { return clients_.size(); }

ChildProcess::ChildProcess(const std::filesystem::path& exe, std::vector<std::string> args,
                           const std::filesystem::path& log_file)
    : name_(args.empty() ? exe.filename().string() : args.front()) {
    std::vector<std::string> full{exe.string()};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : full) argv.push_back(a.data());
    argv.push_back(nullptr);
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_addopen(&fa, STDOUT_FILENO, log_file.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_adddup2(&fa, STDOUT_FILENO, STDERR_FILENO);
    const int rc = posix_spawn(&pid_, exe.c_str(), &fa, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&fa);
    if (rc != 0) throw std::runtime_error("cannot spawn " + exe.string() + " " + name_);
}

ChildProcess::~ChildProcess() {
    if (!status_) terminate(2000);
}

bool ChildProcess::running() {
    if (status_) return false;
    int st = 0;
    const pid_t r = waitpid(pid_, &st, WNOHANG);
    if (r == pid_) {
        status_ = WIFEXITED(st) ? WEXITSTATUS(st) : 128 + WTERMSIG(st);
        return false;
    }
    return true;
}

int ChildProcess::terminate(int grace_ms) {
    if (!running()) return *status_;
    kill(pid_, SIGTERM);
    for (int waited = 0; waited < grace_ms; waited += 10) {
        if (!running()) return *status_;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    kill(pid_, SIGKILL);
    int st = 0;
    waitpid(pid_, &st, 0);
    status_ = 128 + SIGKILL;
    return *status_;
}

std::uint16_t free_port() {
    net::Fd fd = net::listen_tcp({"127.0.0.1", 0});
    return net::local_port(fd);
}

bool wait_for_file(const std::filesystem::path& file, int timeout_ms) {
    for (int waited = 0; waited <= timeout_ms; waited += 20) {
        if (std::filesystem::exists(file)) return true;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    return false;
}

}  // namespace lanemerge::harness
