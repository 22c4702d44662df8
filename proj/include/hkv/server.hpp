#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hkv/engine.hpp"
#include "hkv/protocol.hpp"

namespace hkv {

struct ListenAddress {
    std::string host = "127.0.0.1";
    std::uint16_t port = 11211;
};

/// "host:port", ":port" or "port". Port 0 asks the kernel for a free one.
inline ListenAddress parse_listen(std::string_view text)
{
    ListenAddress a;
    std::string_view port = text;
    if (const auto colon = text.rfind(':'); colon != std::string_view::npos) {
        if (colon > 0) {
            a.host = std::string(text.substr(0, colon));
        }
        port = text.substr(colon + 1);
    }
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
    if (ec != std::errc{} || ptr != port.data() + port.size() || value > 65535) {
        throw Error(ErrorCode::invalid_config, "bad listen address '" + std::string(text) + "'");
    }
    a.port = static_cast<std::uint16_t>(value);
    return a;
}

namespace server_detail {

/// Owns a file descriptor.
class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Fd& operator=(Fd&& o) noexcept
    {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    ~Fd() { reset(); }

    int get() const noexcept { return fd_; }
    explicit operator bool() const noexcept { return fd_ >= 0; }

    void reset() noexcept
    {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
};

[[noreturn]] inline void fail(const std::string& what)
{
    throw Error(ErrorCode::io_error, what + ": " + std::strerror(errno));
}

inline bool send_all(int fd, std::string_view data)
{
    while (!data.empty()) {
        const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

/// Self-pipe used to interrupt poll().
class Waker {
public:
    Waker()
    {
        int fds[2];
        if (::pipe2(fds, O_NONBLOCK | O_CLOEXEC) != 0) {
            fail("pipe2");
        }
        read_ = Fd(fds[0]);
        write_ = Fd(fds[1]);
    }

    int fd() const noexcept { return read_.get(); }

    void wake() noexcept
    {
        const char c = 1;
        [[maybe_unused]] auto n = ::write(write_.get(), &c, 1);
    }

    void drain() noexcept
    {
        char buf[64];
        while (::read(read_.get(), buf, sizeof buf) > 0) {
        }
    }

private:
    Fd read_;
    Fd write_;
};

}  // namespace server_detail

/// memcached text protocol over TCP. One acceptor thread hands connections round-robin
/// to N workers; each worker polls its own connections. Requests go straight to the
/// engine, whose own lock serializes them.
class Server {
public:
    struct Options {
        ListenAddress listen;
        unsigned workers = 4;
    };

    Server(Engine& engine, Options options) : engine_(engine), options_(std::move(options))
    {
        if (options_.workers == 0) {
            options_.workers = 1;
        }
    }

    ~Server() { stop(); }

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and starts serving. Throws io_error if the address is unusable.
    void start()
    {
        using server_detail::fail;
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        hints.ai_flags = AI_PASSIVE;
        addrinfo* found = nullptr;
        const std::string port = std::to_string(options_.listen.port);
        if (int rc = ::getaddrinfo(options_.listen.host.c_str(), port.c_str(), &hints, &found); rc != 0) {
            throw Error(ErrorCode::io_error, "resolve " + options_.listen.host + ": " + ::gai_strerror(rc));
        }
        std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(found, ::freeaddrinfo);
        server_detail::Fd fd(::socket(found->ai_family, found->ai_socktype | SOCK_CLOEXEC, found->ai_protocol));
        if (!fd) {
            fail("socket");
        }
        const int one = 1;
        ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(fd.get(), found->ai_addr, found->ai_addrlen) != 0) {
            fail("bind " + options_.listen.host + ":" + port);
        }
        if (::listen(fd.get(), 128) != 0) {
            fail("listen");
        }
        sockaddr_storage bound{};
        socklen_t len = sizeof bound;
        ::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&bound), &len);
        port_ = ntohs(bound.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port
                                                  : reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
        listener_ = std::move(fd);

        running_ = true;
        for (unsigned i = 0; i < options_.workers; ++i) {
            workers_.push_back(std::make_unique<Worker>());
        }
        for (auto& w : workers_) {
            w->thread = std::thread([this, w = w.get()] { work(*w); });
        }
        acceptor_ = std::thread([this] { accept_loop(); });
    }

    std::uint16_t port() const noexcept { return port_; }

    void stop()
    {
        if (!running_.exchange(false)) {
            return;
        }
        accept_waker_.wake();
        if (acceptor_.joinable()) {
            acceptor_.join();
        }
        for (auto& w : workers_) {
            w->waker.wake();
            if (w->thread.joinable()) {
                w->thread.join();
            }
        }
        workers_.clear();
        listener_.reset();
    }

    std::uint64_t connections_accepted() const noexcept { return accepted_.load(); }

private:
    struct Worker {
        server_detail::Waker waker;
        std::mutex mutex;
        std::vector<server_detail::Fd> incoming;
        std::thread thread;
    };

    struct Connection {
        server_detail::Fd fd;
        ProtocolSession session;
    };

    void accept_loop()
    {
        std::size_t next = 0;
        while (running_) {
            pollfd fds[2] = {{listener_.get(), POLLIN, 0}, {accept_waker_.fd(), POLLIN, 0}};
            if (::poll(fds, 2, -1) < 0) {
                if (errno == EINTR) {
                    continue;
                }
                break;
            }
            if (fds[1].revents) {
                accept_waker_.drain();
            }
            if (!(fds[0].revents & POLLIN)) {
                continue;
            }
            server_detail::Fd client(::accept4(listener_.get(), nullptr, nullptr, SOCK_CLOEXEC));
            if (!client) {
                continue;
            }
            const int one = 1;
            ::setsockopt(client.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            ++accepted_;
            Worker& w = *workers_[next++ % workers_.size()];
            {
                std::lock_guard lock(w.mutex);
                w.incoming.push_back(std::move(client));
            }
            w.waker.wake();
        }
    }

    void work(Worker& w)
    {
        std::unordered_map<int, std::unique_ptr<Connection>> conns;
        std::vector<pollfd> fds;
        char buf[16 * 1024];
        while (running_) {
            fds.clear();
            fds.push_back({w.waker.fd(), POLLIN, 0});
            for (const auto& [fd, conn] : conns) {
                fds.push_back({fd, POLLIN, 0});
            }
            if (::poll(fds.data(), fds.size(), -1) < 0) {
                if (errno == EINTR) {
                    continue;
                }
                break;
            }
            if (fds[0].revents) {
                w.waker.drain();
                std::lock_guard lock(w.mutex);
                for (auto& fd : w.incoming) {
                    const int raw = fd.get();
                    conns.emplace(raw, std::make_unique<Connection>(
                                           Connection{std::move(fd), ProtocolSession(engine_, [this] {
                                                          return engine_.wall_now();
                                                      })}));
                }
                w.incoming.clear();
            }
            for (std::size_t i = 1; i < fds.size(); ++i) {
                if (!fds[i].revents) {
                    continue;
                }
                Connection& c = *conns.at(fds[i].fd);
                const ssize_t n = ::recv(c.fd.get(), buf, sizeof buf, 0);
                bool keep = n > 0;
                if (keep) {
                    std::string out;
                    try {
                        out = c.session.feed(std::string_view(buf, static_cast<std::size_t>(n)));
                    } catch (const std::exception& e) {
                        out = std::string("SERVER_ERROR ") + e.what() + "\r\n";
                    }
                    keep = server_detail::send_all(c.fd.get(), out) && !c.session.closed();
                } else if (n < 0 && (errno == EINTR || errno == EAGAIN)) {
                    keep = true;
                }
                if (!keep) {
                    conns.erase(fds[i].fd);
                }
            }
        }
    }

    Engine& engine_;
    Options options_;
    server_detail::Fd listener_;
    server_detail::Waker accept_waker_;
    std::vector<std::unique_ptr<Worker>> workers_;
    std::thread acceptor_;
    std::atomic<bool> running_{false};
    std::atomic<std::uint64_t> accepted_{0};
    std::uint16_t port_ = 0;
};

}  // namespace hkv
