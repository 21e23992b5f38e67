#include "lanemerge/gateway/socket.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

namespace lanemerge::net {

namespace {

[[noreturn]] void fail(const std::string& what) { throw SocketError(what + ": " + std::strerror(errno)); }

sockaddr_in to_sockaddr(const Endpoint& e) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(e.port);
    const std::string host = e.host.empty() || e.host == "localhost" ? "127.0.0.1" : e.host;
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        addrinfo hints{};
        hints.ai_family = AF_INET;
        addrinfo* res = nullptr;
        if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
            throw SocketError("cannot resolve host " + host);
        }
        addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
        freeaddrinfo(res);
    }
    return addr;
}

}  // namespace

Fd& Fd::operator=(Fd&& o) noexcept {
    if (this != &o) reset(o.release());
    return *this;
}

void Fd::reset(int fd) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = fd;
}

Endpoint Endpoint::parse(std::string_view text) {
    Endpoint e;
    const auto colon = text.rfind(':');
    std::string_view port_part = text;
    if (colon != std::string_view::npos) {
        if (colon > 0) e.host = std::string(text.substr(0, colon));
        port_part = text.substr(colon + 1);
    }
    unsigned value = 0;
    const auto [ptr, ec] = std::from_chars(port_part.data(), port_part.data() + port_part.size(), value);
    if (ec != std::errc{} || ptr != port_part.data() + port_part.size() || value > 65535) {
        throw SocketError("bad endpoint '" + std::string(text) + "'");
    }
    e.port = static_cast<std::uint16_t>(value);
    return e;
}

std::string Endpoint::str() const { return host + ":" + std::to_string(port); }

Fd listen_tcp(const Endpoint& at, int backlog) {
    Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd.valid()) fail("socket");
    const int one = 1;
    ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    const sockaddr_in addr = to_sockaddr(at);
    if (::bind(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
        fail("bind " + at.str());
    }
    if (::listen(fd.get(), backlog) != 0) fail("listen");
    return fd;
}

std::uint16_t local_port(const Fd& fd) {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    if (::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) fail("getsockname");
    return ntohs(addr.sin_port);
}

std::optional<Fd> accept_tcp(const Fd& listener, std::chrono::milliseconds timeout) {
    pollfd p{listener.get(), POLLIN, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc < 0) {
        if (errno == EINTR) return std::nullopt;
        fail("poll");
    }
    if (rc == 0) return std::nullopt;
    if (p.revents & (POLLERR | POLLNVAL)) throw SocketError("listener closed");
    Fd fd(::accept4(listener.get(), nullptr, nullptr, SOCK_CLOEXEC));
    if (!fd.valid()) {
        if (errno == EAGAIN || errno == EINTR || errno == ECONNABORTED) return std::nullopt;
        fail("accept");
    }
    set_nodelay(fd);
    return fd;
}

Fd connect_tcp(const Endpoint& to, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    const sockaddr_in addr = to_sockaddr(to);
    while (true) {
        Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
        if (!fd.valid()) fail("socket");
        if (::connect(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) {
            set_nodelay(fd);
            return fd;
        }
        if ((errno != ECONNREFUSED && errno != EINTR) || std::chrono::steady_clock::now() >= deadline) {
            fail("connect " + to.str());
        }
        ::usleep(20'000);
    }
}

void set_nodelay(const Fd& fd, bool on) {
    const int v = on ? 1 : 0;
    if (::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &v, sizeof v) != 0) fail("setsockopt TCP_NODELAY");
}

bool nodelay_enabled(const Fd& fd) {
    int v = 0;
    socklen_t len = sizeof v;
    if (::getsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &v, &len) != 0) fail("getsockopt TCP_NODELAY");
    return v != 0;
}

void write_all(const Fd& fd, std::string_view bytes) {
    while (!bytes.empty()) {
        const ssize_t n = ::send(fd.get(), bytes.data(), bytes.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            fail("send");
        }
        bytes.remove_prefix(static_cast<std::size_t>(n));
    }
}

void shutdown_both(const Fd& fd) {
    if (fd.valid()) ::shutdown(fd.get(), SHUT_RDWR);
}

std::optional<std::string> LineReader::read_line() {
    while (true) {
        const auto nl = buffer_.find('\n', start_);
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(start_, nl - start_);
            start_ = nl + 1;
            if (start_ > 65536 && start_ * 2 > buffer_.size()) {
                buffer_.erase(0, start_);
                start_ = 0;
            }
            return line;
        }
        if (buffer_.size() - start_ > max_line_) throw SocketError("line exceeds maximum length");
        char chunk[65536];
        const ssize_t n = ::recv(fd_.get(), chunk, sizeof chunk, 0);
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == ECONNRESET || errno == ENOTCONN || errno == EBADF) return std::nullopt;
            fail("recv");
        }
        if (n == 0) return std::nullopt;
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

}  // namespace lanemerge::net
