#pragma once

#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "waypost/relay.hpp"

namespace waypost {

// Blocking line-oriented TCP endpoint; one JSON object per '\n'-terminated
// line. Used by both the client and the server's per-connection threads.
class LineSocket {
public:
    LineSocket() = default;
    explicit LineSocket(int fd) : fd_(fd) {}
    LineSocket(LineSocket&& other) noexcept;
    LineSocket& operator=(LineSocket&& other) noexcept;
    LineSocket(const LineSocket&) = delete;
    LineSocket& operator=(const LineSocket&) = delete;
    ~LineSocket();

    // "host:port"; throws IoError. Sets TCP_NODELAY (a fetch/finish exchange
    // is two tiny writes per round trip; Nagle would serialize them at 40 ms).
    static LineSocket connect(const std::string& host_port);

    void send_line(const std::string& line); // appends '\n'; throws IoError
    bool recv_line(std::string& out);        // false on orderly EOF
    void close();
    int fd() const { return fd_; }

private:
    int fd_ = -1;
    std::string buf_;
};

struct ServerConfig {
    std::string listen = "127.0.0.1:0";
    std::chrono::milliseconds t_offline{30000};
    std::string transcript_path; // empty: no transcript capture
    std::string snapshot_path;   // empty: no persistence
    std::string port_file;       // written after bind, for ephemeral ports
};

// Accept loop plus thread-per-connection dispatch onto a Relay. start()
// returns once the socket is bound, so tests can read port() immediately.
class ServerLoop {
public:
    explicit ServerLoop(ServerConfig cfg);
    ~ServerLoop();

    void start();
    void stop();
    uint16_t port() const { return port_; }
    std::string address() const { return "127.0.0.1:" + std::to_string(port_); }
    Relay& relay() { return relay_; }

private:
    void accept_loop();
    void serve(int fd);
    nlohmann::json handle(const nlohmann::json& msg, std::string& user_out);
    void log_line(const std::string& user, const char* dir, const std::string& bytes);

    ServerConfig cfg_;
    Relay relay_;
    int listen_fd_ = -1;
    uint16_t port_ = 0;
    std::thread accept_thread_;
    std::vector<std::thread> conn_threads_;
    std::mutex conn_mu_;
    std::vector<int> conn_fds_;
    std::atomic<bool> stopping_{false};

    std::mutex log_mu_;
    std::ofstream transcript_;
    std::ofstream snapshot_;
    uint64_t seq_ = 0;
};

} // namespace waypost
