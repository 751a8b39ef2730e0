#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "asq/errors.hpp"
#include "asq/protocol.hpp"

namespace asq::wire {

/// Byte stream to one serving party. Frames go out whole; recv() returns exactly one frame
/// including its length prefix. Not thread-safe.
class Channel {
public:
    virtual ~Channel() = default;
    virtual void send(std::string_view bytes) = 0;
    virtual std::string recv() = 0;

    /// Records every frame crossing the channel in either direction.
    void set_tap(std::vector<std::string> *tap) noexcept { tap_ = tap; }

protected:
    void tap_outgoing(std::string_view bytes) {
        if (!tap_) return;
        FrameBuffer fb;
        fb.append(bytes);
        while (auto f = fb.next()) tap_->push_back(std::move(*f));
    }
    void tap_incoming(const std::string &frame) {
        if (tap_) tap_->push_back(frame);
    }

private:
    std::vector<std::string> *tap_ = nullptr;
};

/// Answers one complete frame, appending any response frames to `out`.
using FrameHandler = std::function<void(const std::string &frame, std::string &out)>;

/// Runs the server's codec path in the caller's thread: send() hands bytes to the handler,
/// recv() pops its responses.
class InProcessChannel final : public Channel {
public:
    explicit InProcessChannel(FrameHandler handler) : handler_(std::move(handler)) {}

    void send(std::string_view bytes) override {
        tap_outgoing(bytes);
        FrameBuffer in;
        in.append(bytes);
        std::string out;
        while (auto f = in.next()) handler_(*f, out);
        if (in.pending() != 0) throw Error(ErrorCode::MalformedFrame, "partial frame sent");
        responses_.append(out);
    }

    std::string recv() override {
        auto f = responses_.next();
        if (!f) throw Error(ErrorCode::SessionAbort, "no response pending");
        tap_incoming(*f);
        return std::move(*f);
    }

private:
    FrameHandler handler_;
    FrameBuffer responses_;
};

namespace detail {

inline void write_all(int fd, std::string_view bytes) {
    while (!bytes.empty()) {
        const ssize_t n = ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(ErrorCode::SessionAbort, std::string("send: ") + std::strerror(errno));
        }
        bytes.remove_prefix(static_cast<std::size_t>(n));
    }
}

/// Reads what is available; returns 0 on orderly shutdown.
inline std::size_t read_some(int fd, char *buf, std::size_t cap) {
    for (;;) {
        const ssize_t n = ::recv(fd, buf, cap, 0);
        if (n >= 0) return static_cast<std::size_t>(n);
        if (errno == EINTR) continue;
        throw Error(ErrorCode::SessionAbort, std::string("recv: ") + std::strerror(errno));
    }
}

inline void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

inline sockaddr_in resolve_ipv4(const std::string &host, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{}, *res = nullptr;
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res)
        throw Error(ErrorCode::Io, "cannot resolve host " + host);
    addr.sin_addr = reinterpret_cast<sockaddr_in *>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
    return addr;
}

class Fd {
public:
    explicit Fd(int fd = -1) noexcept : fd_(fd) {}
    Fd(Fd &&o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Fd &operator=(Fd &&o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    ~Fd() { reset(); }
    int get() const noexcept { return fd_; }
    int release() noexcept { return std::exchange(fd_, -1); }
    void reset() noexcept {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_;
};

}  // namespace detail

/// "host:port" split; the port must be present.
inline std::pair<std::string, std::uint16_t> split_host_port(const std::string &spec) {
    const auto colon = spec.rfind(':');
    if (colon == std::string::npos || colon + 1 == spec.size())
        throw Error(ErrorCode::InvalidArgument, "expected host:port, got " + spec);
    const std::string port_text = spec.substr(colon + 1);
    std::size_t used = 0;
    unsigned long port = 0;
    try {
        port = std::stoul(port_text, &used);
    } catch (const std::exception &) {
        used = 0;
    }
    if (used != port_text.size() || port > 65535) throw Error(ErrorCode::InvalidArgument, "bad port in " + spec);
    return {spec.substr(0, colon), static_cast<std::uint16_t>(port)};
}

class TcpChannel final : public Channel {
public:
    explicit TcpChannel(int fd) : fd_(fd) { detail::set_nodelay(fd); }

    static std::unique_ptr<TcpChannel> connect(const std::string &host, std::uint16_t port) {
        const sockaddr_in addr = detail::resolve_ipv4(host, port);
        detail::Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
        if (fd.get() < 0) throw Error(ErrorCode::Io, std::string("socket: ") + std::strerror(errno));
        if (::connect(fd.get(), reinterpret_cast<const sockaddr *>(&addr), sizeof addr) != 0)
            throw Error(ErrorCode::Io, "connect to " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
        return std::make_unique<TcpChannel>(fd.release());
    }

    void send(std::string_view bytes) override {
        tap_outgoing(bytes);
        detail::write_all(fd_.get(), bytes);
    }

    std::string recv() override {
        char buf[1 << 16];
        for (;;) {
            if (auto f = in_.next()) {
                tap_incoming(*f);
                return std::move(*f);
            }
            const std::size_t n = detail::read_some(fd_.get(), buf, sizeof buf);
            if (n == 0) throw Error(ErrorCode::SessionAbort, "peer closed the connection");
            in_.append({buf, n});
        }
    }

private:
    detail::Fd fd_;
    FrameBuffer in_;
};

/// Serves one connection: reads frames, answers through `handler`, flushes the responses
/// whenever the read buffer holds no further complete frame. Returns on EOF.
inline void serve_connection(int fd, const FrameHandler &handler) {
    detail::set_nodelay(fd);
    char buf[1 << 16];
    FrameBuffer in;
    std::string out;
    for (;;) {
        const std::size_t n = detail::read_some(fd, buf, sizeof buf);
        if (n == 0) return;
        in.append({buf, n});
        while (auto f = in.next()) handler(*f, out);
        if (!out.empty()) {
            detail::write_all(fd, out);
            out.clear();
        }
    }
}

/// Listening socket plus a thread that serves accepted connections one after another.
class TcpService {
public:
    TcpService(const std::string &host, std::uint16_t port, FrameHandler handler)
        : handler_(std::move(handler)) {
        const sockaddr_in addr = detail::resolve_ipv4(host, port);
        listen_ = detail::Fd(::socket(AF_INET, SOCK_STREAM, 0));
        if (listen_.get() < 0) throw Error(ErrorCode::Io, std::string("socket: ") + std::strerror(errno));
        int one = 1;
        ::setsockopt(listen_.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(listen_.get(), reinterpret_cast<const sockaddr *>(&addr), sizeof addr) != 0)
            throw Error(ErrorCode::Io, "bind " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
        if (::listen(listen_.get(), 8) != 0) throw Error(ErrorCode::Io, std::string("listen: ") + std::strerror(errno));
        sockaddr_in bound{};
        socklen_t len = sizeof bound;
        ::getsockname(listen_.get(), reinterpret_cast<sockaddr *>(&bound), &len);
        port_ = ntohs(bound.sin_port);
    }

    TcpService(const TcpService &) = delete;
    TcpService &operator=(const TcpService &) = delete;
    ~TcpService() { stop(); }

    std::uint16_t port() const noexcept { return port_; }

    void start() {
        thread_ = std::thread([this] { run(); });
    }

    /// Blocking accept loop; returns once stop() shuts the listener down.
    void run() {
        while (!stopping_) {
            const int fd = ::accept(listen_.get(), nullptr, nullptr);
            if (fd < 0) {
                if (errno == EINTR) continue;
                return;
            }
            detail::Fd conn(fd);
            {
                std::lock_guard lock(mu_);
                active_ = fd;
            }
            try {
                serve_connection(fd, handler_);
            } catch (const Error &) {
                // Transport loss aborts this session only.
            }
            std::lock_guard lock(mu_);
            active_ = -1;
        }
    }

    void stop() {
        if (stopping_.exchange(true)) return;
        ::shutdown(listen_.get(), SHUT_RDWR);
        {
            std::lock_guard lock(mu_);
            if (active_ >= 0) ::shutdown(active_, SHUT_RDWR);
        }
        if (thread_.joinable()) thread_.join();
    }

private:
    FrameHandler handler_;
    detail::Fd listen_;
    std::uint16_t port_ = 0;
    std::thread thread_;
    std::atomic<bool> stopping_{false};
    std::mutex mu_;
    int active_ = -1;
};

}  // namespace asq::wire
