#include "lanemerge/gateway/client.hpp"

#include "lanemerge/core/wire.hpp"

namespace lanemerge::gateway {

GatewayClient::GatewayClient(ClientOptions options, Handler handler)
    : options_(std::move(options)), handler_(std::move(handler)) {
    if (options_.name.empty()) throw std::invalid_argument("client name must be non-empty");
    fd_ = net::connect_tcp(options_.gateway, options_.connect_timeout);
    reader_ = std::thread([this] { read_loop(); });
    send_control(SubscribeAction::Hello, "session", std::nullopt);
}

GatewayClient::~GatewayClient() { close(); }

void GatewayClient::close() {
    closed_ = true;
    net::shutdown_both(fd_);
    if (reader_.joinable() && reader_.get_id() != std::this_thread::get_id()) reader_.join();
    cv_.notify_all();
}

void GatewayClient::send_control(SubscribeAction action, const std::string& topic, std::optional<BoundingBox> bound) {
    V2XEnvelope env;
    env.topic = topic;
    env.sender = options_.name;
    env.sent_at = 1;
    SubscribeRequest req{action, options_.role, topic, bound};
    env.payload = req;
    std::uint64_t target = 0;
    {
        std::lock_guard lock(write_mu_);
        env.seq = ++seq_[topic];
        net::write_all(fd_, wire::encode_envelope(env));
        std::lock_guard l2(mu_);
        target = ++controls_sent_;
    }
    wait_acks(target);
}

void GatewayClient::wait_acks(std::uint64_t target) {
    std::unique_lock lock(mu_);
    const bool ok = cv_.wait_for(lock, options_.connect_timeout, [&] { return acks_ >= target || closed_.load(); });
    if (!ok || acks_ < target) throw net::SocketError("gateway did not acknowledge " + options_.name);
}

void GatewayClient::subscribe(const std::string& topic, std::optional<BoundingBox> bound) {
    send_control(SubscribeAction::Subscribe, topic, bound);
}

void GatewayClient::unsubscribe(const std::string& topic) { send_control(SubscribeAction::Unsubscribe, topic, std::nullopt); }

void GatewayClient::publish(const std::string& topic, Payload payload, Millis sent_at) {
    V2XEnvelope env;
    env.topic = topic;
    env.sender = options_.name;
    env.sent_at = sent_at;
    env.payload = std::move(payload);
    std::lock_guard lock(write_mu_);
    env.seq = ++seq_[topic];
    net::write_all(fd_, wire::encode_envelope(env));
}

void GatewayClient::send_raw(std::string_view line) {
    std::lock_guard lock(write_mu_);
    net::write_all(fd_, line);
}

std::optional<V2XEnvelope> GatewayClient::receive(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    if (!cv_.wait_for(lock, timeout, [&] { return !inbox_.empty() || closed_.load(); })) return std::nullopt;
    if (inbox_.empty()) return std::nullopt;
    V2XEnvelope e = std::move(inbox_.front());
    inbox_.pop_front();
    return e;
}

void GatewayClient::read_loop() {
    net::LineReader lines(fd_);
    try {
        while (auto line = lines.read_line()) {
            V2XEnvelope env;
            try {
                env = wire::decode_envelope(*line);
            } catch (const wire::WireError&) {
                ++malformed_;
                continue;
            }
            if (const auto* req = std::get_if<SubscribeRequest>(&env.payload); req && req->action == SubscribeAction::Ack) {
                {
                    std::lock_guard lock(mu_);
                    ++acks_;
                }
                cv_.notify_all();
                continue;
            }
            if (handler_) {
                handler_(std::move(env));
            } else {
                {
                    std::lock_guard lock(mu_);
                    inbox_.push_back(std::move(env));
                }
                cv_.notify_all();
            }
        }
    } catch (const net::SocketError&) {
    }
    closed_ = true;
    cv_.notify_all();
}

}  // namespace lanemerge::gateway
