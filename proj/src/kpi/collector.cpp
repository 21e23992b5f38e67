#include "lanemerge/kpi/collector.hpp"

#include <algorithm>

#include "lanemerge/core/clock.hpp"

namespace lanemerge::kpi {

LogCollector::LogCollector(LogStore& store, net::Endpoint listen) : store_(store), listen_(std::move(listen)) {}

LogCollector::~LogCollector() { stop(); }

void LogCollector::start() {
    listener_ = net::listen_tcp(listen_);
    port_ = net::local_port(listener_);
    stopping_ = false;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void LogCollector::stop() {
    if (stopping_.exchange(true)) return;
    if (acceptor_.joinable()) acceptor_.join();
    listener_.reset();
    reap(true);
}

void LogCollector::accept_loop() {
    while (!stopping_) {
        std::optional<net::Fd> fd;
        try {
            fd = net::accept_tcp(listener_, std::chrono::milliseconds(100));
        } catch (const net::SocketError&) {
            continue;
        }
        reap(false);
        if (!fd) continue;
        auto c = std::make_unique<Conn>();
        c->fd = std::move(*fd);
        Conn& ref = *c;
        std::lock_guard lock(mu_);
        conns_.push_back(std::move(c));
        ref.thread = std::thread([this, &ref] {
            net::LineReader lines(ref.fd);
            while (auto line = lines.read_line()) {
                if (!line->empty()) store_.ingest_line(*line, monotonic_ms());
            }
            ref.done = true;
        });
    }
}

void LogCollector::reap(bool all) {
    if (all) {
        // Give peers that already hung up a moment to be drained completely.
        for (int i = 0; i < 50; ++i) {
            {
                std::lock_guard lock(mu_);
                if (std::all_of(conns_.begin(), conns_.end(), [](const auto& c) { return c->done.load(); })) break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
    }
    std::list<std::unique_ptr<Conn>> finished;
    {
        std::lock_guard lock(mu_);
        for (auto it = conns_.begin(); it != conns_.end();) {
            if (all) net::shutdown_both((*it)->fd);
            if (all || (*it)->done) {
                finished.push_back(std::move(*it));
                it = conns_.erase(it);
            } else {
                ++it;
            }
        }
    }
    for (auto& c : finished) {
        if (c->thread.joinable()) c->thread.join();
    }
}

void KpiService::on_message(const V2XEnvelope& envelope, Millis now, Outbox& /*out*/) {
    if (const auto* rec = std::get_if<LogRecord>(&envelope.payload)) store_.ingest(*rec, now);
}

}  // namespace lanemerge::kpi
