#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lanemerge::net {

class SocketError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Owning file descriptor.
class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    Fd(Fd&& o) noexcept : fd_(o.release()) {}
    Fd& operator=(Fd&& o) noexcept;
    ~Fd() { reset(); }

    [[nodiscard]] int get() const { return fd_; }
    [[nodiscard]] bool valid() const { return fd_ >= 0; }
    int release() {
        const int f = fd_;
        fd_ = -1;
        return f;
    }
    void reset(int fd = -1);

private:
    int fd_ = -1;
};

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    /// "host:port" or ":port" or "port".
    static Endpoint parse(std::string_view text);
    [[nodiscard]] std::string str() const;
};

/// Listening socket on `host:port` (port 0 picks an ephemeral port).
Fd listen_tcp(const Endpoint& at, int backlog = 128);
std::uint16_t local_port(const Fd& fd);

/// Accepts with a timeout; nullopt on timeout.
std::optional<Fd> accept_tcp(const Fd& listener, std::chrono::milliseconds timeout);

/// Connects and disables Nagle coalescing on the new socket.
Fd connect_tcp(const Endpoint& to, std::chrono::milliseconds timeout = std::chrono::seconds(5));

/// TCP_NODELAY on; small writes leave immediately.
void set_nodelay(const Fd& fd, bool on = true);
[[nodiscard]] bool nodelay_enabled(const Fd& fd);

/// Writes every byte or throws SocketError.
void write_all(const Fd& fd, std::string_view bytes);

/// Wakes any thread blocked on `fd` (shutdown both directions); safe to repeat.
void shutdown_both(const Fd& fd);

/// Buffered newline-delimited reader.
class LineReader {
public:
    explicit LineReader(const Fd& fd, std::size_t max_line = 16 * 1024 * 1024) : fd_(fd), max_line_(max_line) {}

    /// Next line without its terminator; nullopt at EOF. Throws SocketError on
    /// errors or on a line longer than `max_line`.
    std::optional<std::string> read_line();

private:
    const Fd& fd_;
    std::size_t max_line_;
    std::string buffer_;
    std::size_t start_ = 0;
};

}  // namespace lanemerge::net
