#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "fdiag/ingest.hpp"
#include "fdiag/probe.hpp"

namespace fdiag {

namespace {

std::string trim_eol(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
    std::size_t b = 0;
    while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
    return s.substr(b);
}

std::string make_temp_dir() {
    static std::atomic<std::uint64_t> counter{0};
    const auto base = std::filesystem::temp_directory_path();
    for (int attempt = 0; attempt < 100; ++attempt) {
        auto dir = base / ("fdiag-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::error_code ec;
        if (std::filesystem::create_directory(dir, ec)) return dir.string();
    }
    throw ScorerTransportError("cannot create a temporary directory for scorer requests");
}

}  // namespace

ExternalScorer::ExternalScorer(int read_fd, int write_fd, int child_pid, ExternalOptions options)
    : read_fd_(read_fd), write_fd_(write_fd), child_pid_(child_pid), options_(options) {
    if (options_.repeats < 1) options_.repeats = 1;
    temp_dir_ = make_temp_dir();
}

std::unique_ptr<ExternalScorer> ExternalScorer::spawn(const std::string& command, ExternalOptions options) {
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0) throw ScorerTransportError("pipe failed: " + std::string(std::strerror(errno)));
    if (::pipe(from_child) != 0) {
        ::close(to_child[0]);
        ::close(to_child[1]);
        throw ScorerTransportError("pipe failed: " + std::string(std::strerror(errno)));
    }
    const pid_t pid = ::fork();
    if (pid < 0) throw ScorerTransportError("fork failed: " + std::string(std::strerror(errno)));
    if (pid == 0) {
        ::dup2(to_child[0], STDIN_FILENO);
        ::dup2(from_child[1], STDOUT_FILENO);
        ::close(to_child[0]);
        ::close(to_child[1]);
        ::close(from_child[0]);
        ::close(from_child[1]);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    ::fcntl(to_child[1], F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child[0], F_SETFD, FD_CLOEXEC);
    // A vanished child must surface as EPIPE, not kill the toolkit.
    ::signal(SIGPIPE, SIG_IGN);
    std::unique_ptr<ExternalScorer> s(new ExternalScorer(from_child[0], to_child[1], pid, options));
    s->handshake();
    return s;
}

std::unique_ptr<ExternalScorer> ExternalScorer::connect(const std::string& host, std::uint16_t port,
                                                        ExternalOptions options) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port_str = std::to_string(port);
    if (const int rc = ::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res); rc != 0) {
        throw ScorerTransportError("cannot resolve " + host + ": " + ::gai_strerror(rc));
    }
    int fd = -1;
    for (addrinfo* p = res; p; p = p->ai_next) {
        fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw ScorerTransportError("cannot connect to " + host + ":" + port_str);
    ::signal(SIGPIPE, SIG_IGN);
    const int wfd = ::dup(fd);
    std::unique_ptr<ExternalScorer> s(new ExternalScorer(fd, wfd, -1, options));
    s->handshake();
    return s;
}

ExternalScorer::~ExternalScorer() {
    if (write_fd_ >= 0) {
        const char bye[] = "BYE\n";
        [[maybe_unused]] auto n = ::write(write_fd_, bye, sizeof bye - 1);
        ::close(write_fd_);
    }
    if (read_fd_ >= 0) ::close(read_fd_);
    if (child_pid_ > 0) {
        int status = 0;
        // Give the child a moment to exit on BYE, then make sure it is gone.
        for (int i = 0; i < 200; ++i) {
            if (::waitpid(child_pid_, &status, WNOHANG) == child_pid_) {
                child_pid_ = -1;
                break;
            }
            ::usleep(5000);
        }
        if (child_pid_ > 0) {
            ::kill(child_pid_, SIGKILL);
            ::waitpid(child_pid_, &status, 0);
        }
    }
    std::error_code ec;
    if (!temp_dir_.empty()) std::filesystem::remove_all(temp_dir_, ec);
}

void ExternalScorer::send_line(const std::string& line) {
    std::string msg = line + "\n";
    const char* p = msg.data();
    std::size_t left = msg.size();
    while (left > 0) {
        const ssize_t n = ::write(write_fd_, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ScorerTransportError("write to scorer failed: " + std::string(std::strerror(errno)));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
}

std::string ExternalScorer::read_line() {
    const auto deadline = std::chrono::steady_clock::now() + options_.timeout;
    for (;;) {
        if (const auto nl = pending_.find('\n'); nl != std::string::npos) {
            std::string line = pending_.substr(0, nl);
            pending_.erase(0, nl + 1);
            return trim_eol(line);
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) throw ScorerTransportError("scorer timed out");
        pollfd pfd{read_fd_, POLLIN, 0};
        const int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw ScorerTransportError("poll failed: " + std::string(std::strerror(errno)));
        }
        if (rc == 0) throw ScorerTransportError("scorer timed out");
        char buf[4096];
        const ssize_t n = ::read(read_fd_, buf, sizeof buf);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ScorerTransportError("read from scorer failed: " + std::string(std::strerror(errno)));
        }
        if (n == 0) throw ScorerTransportError("scorer closed the connection");
        pending_.append(buf, static_cast<std::size_t>(n));
    }
}

void ExternalScorer::handshake() {
    send_line("HELLO 1");
    const std::string reply = read_line();
    if (reply.rfind("OK", 0) != 0 || (reply.size() > 2 && reply[2] != ' ')) {
        throw ScorerProtocolError("bad handshake reply: '" + reply + "'");
    }
    remote_name_ = reply.size() > 3 ? trim_eol(reply.substr(3)) : "external";
    if (remote_name_.empty()) remote_name_ = "external";
}

std::string ExternalScorer::request(const std::string& line) {
    std::lock_guard lock(mu_);
    send_line(line);
    return read_line();
}

double ExternalScorer::score_once(const ImageTensor& image) {
    const std::string path = temp_dir_ + "/req-" + std::to_string(request_counter_++) + ".f64";
    write_raw(path, image);
    std::string reply;
    try {
        send_line("SCORE " + std::to_string(image.height) + " " + std::to_string(image.width) + " " +
                  std::to_string(image.channels) + " " + path);
        reply = read_line();
    } catch (...) {
        std::filesystem::remove(path);
        throw;
    }
    std::filesystem::remove(path);
    if (reply.rfind("ERR", 0) == 0) throw ScorerProtocolError("scorer reported an error: " + reply);
    double v = 0.0;
    const char* b = reply.data();
    const char* e = b + reply.size();
    const auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e) throw ScorerProtocolError("unparsable score line: '" + reply + "'");
    if (!std::isfinite(v)) throw ScorerProtocolError("scorer returned a non-finite score");
    return v;
}

double ExternalScorer::score(const ImageTensor& image) {
    std::lock_guard lock(mu_);
    if (options_.deterministic || options_.repeats <= 1) return score_once(image);
    double s = 0.0;
    for (std::size_t i = 0; i < options_.repeats; ++i) s += score_once(image);
    return s / static_cast<double>(options_.repeats);
}

}  // namespace fdiag
