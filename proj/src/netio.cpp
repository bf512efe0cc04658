#include "waypost/netio.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <nlohmann/json.hpp>

#include "waypost/errors.hpp"

namespace waypost {

namespace {

void set_nodelay(int fd) {
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

std::pair<std::string, uint16_t> split_host_port(const std::string& hp) {
    size_t colon = hp.rfind(':');
    if (colon == std::string::npos) fail(Err::ConfigError, "expected host:port, got " + hp);
    int port = std::stoi(hp.substr(colon + 1));
    if (port < 0 || port > 65535) fail(Err::ConfigError, "port out of range");
    return {hp.substr(0, colon), uint16_t(port)};
}

} // namespace

LineSocket::LineSocket(LineSocket&& other) noexcept : fd_(other.fd_), buf_(std::move(other.buf_)) {
    other.fd_ = -1;
}

LineSocket& LineSocket::operator=(LineSocket&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        buf_ = std::move(other.buf_);
        other.fd_ = -1;
    }
    return *this;
}

LineSocket::~LineSocket() { close(); }

void LineSocket::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

LineSocket LineSocket::connect(const std::string& host_port) {
    auto [host, port] = split_host_port(host_port);
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) fail(Err::IoError, "socket: " + std::string(strerror(errno)));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        fail(Err::ConfigError, "server address must be a literal IPv4 host:port");
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        int e = errno;
        ::close(fd);
        fail(Err::IoError, "connect " + host_port + ": " + strerror(e));
    }
    set_nodelay(fd);
    return LineSocket(fd);
}

void LineSocket::send_line(const std::string& line) {
    std::string out = line;
    out.push_back('\n');
    size_t off = 0;
    while (off < out.size()) {
        ssize_t n = ::write(fd_, out.data() + off, out.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            fail(Err::IoError, "write: " + std::string(strerror(errno)));
        }
        off += size_t(n);
    }
}

bool LineSocket::recv_line(std::string& out) {
    for (;;) {
        size_t nl = buf_.find('\n');
        if (nl != std::string::npos) {
            out = buf_.substr(0, nl);
            buf_.erase(0, nl + 1);
            return true;
        }
        char chunk[4096];
        ssize_t n = ::read(fd_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR) continue;
            fail(Err::IoError, "read: " + std::string(strerror(errno)));
        }
        if (n == 0) return false;
        buf_.append(chunk, size_t(n));
    }
}

ServerLoop::ServerLoop(ServerConfig cfg) : cfg_(std::move(cfg)), relay_(cfg_.t_offline) {}

ServerLoop::~ServerLoop() { stop(); }

void ServerLoop::start() {
    if (!cfg_.snapshot_path.empty()) {
        std::ifstream in(cfg_.snapshot_path);
        std::string line;
        while (in && std::getline(in, line)) {
            if (line.empty()) continue;
            relay_.apply_event(nlohmann::json::parse(line));
        }
        snapshot_.open(cfg_.snapshot_path, std::ios::app);
        if (!snapshot_) fail(Err::IoError, "cannot open snapshot " + cfg_.snapshot_path);
        relay_.set_event_sink([this](const nlohmann::json& ev) {
            std::lock_guard<std::mutex> lk(log_mu_);
            snapshot_ << ev.dump() << std::endl;
        });
    }
    if (!cfg_.transcript_path.empty()) {
        transcript_.open(cfg_.transcript_path, std::ios::app);
        if (!transcript_) fail(Err::IoError, "cannot open transcript " + cfg_.transcript_path);
    }

    auto [host, want_port] = split_host_port(cfg_.listen);
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) fail(Err::IoError, "socket: " + std::string(strerror(errno)));
    int one = 1;
    setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(want_port);
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        fail(Err::ConfigError, "listen address must be a literal IPv4 host");
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
        fail(Err::IoError, "bind " + cfg_.listen + ": " + std::string(strerror(errno)));
    if (::listen(listen_fd_, 64) != 0)
        fail(Err::IoError, "listen: " + std::string(strerror(errno)));

    sockaddr_in bound{};
    socklen_t blen = sizeof bound;
    getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &blen);
    port_ = ntohs(bound.sin_port);

    if (!cfg_.port_file.empty()) {
        std::ofstream pf(cfg_.port_file);
        pf << port_ << std::endl;
    }

    accept_thread_ = std::thread([this] { accept_loop(); });
}

void ServerLoop::stop() {
    if (stopping_.exchange(true)) {
        if (accept_thread_.joinable()) accept_thread_.join();
        return;
    }
    if (listen_fd_ >= 0) {
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
    {
        std::lock_guard<std::mutex> lk(conn_mu_);
        for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    for (auto& t : conn_threads_) {
        if (t.joinable()) t.join();
    }
}

void ServerLoop::accept_loop() {
    for (;;) {
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (errno == EINTR) continue;
            return; // listen socket closed by stop()
        }
        set_nodelay(fd);
        std::lock_guard<std::mutex> lk(conn_mu_);
        if (stopping_) {
            ::close(fd);
            return;
        }
        conn_fds_.push_back(fd);
        conn_threads_.emplace_back([this, fd] { serve(fd); });
    }
}

void ServerLoop::log_line(const std::string& user, const char* dir, const std::string& bytes) {
    if (!transcript_.is_open()) return;
    std::lock_guard<std::mutex> lk(log_mu_);
    nlohmann::json entry{{"seq", ++seq_}, {"user", user}, {"dir", dir}, {"bytes", bytes}};
    transcript_ << entry.dump() << std::endl;
}

void ServerLoop::serve(int fd) {
    LineSocket sock(fd);
    std::string line;
    while (!stopping_) {
        try {
            if (!sock.recv_line(line)) break;
        } catch (const Error&) {
            break; // connection reset mid-read
        }
        if (line.empty()) continue;

        std::string user = "?";
        nlohmann::json reply;
        try {
            nlohmann::json msg = nlohmann::json::parse(line);
            reply = handle(msg, user);
        } catch (const Error& e) {
            reply = {{"ok", false}, {"err", err_code(e.code())}};
        } catch (const nlohmann::json::exception&) {
            reply = {{"ok", false}, {"err", "BAD_REQUEST"}};
        }

        const std::string out = reply.dump();
        log_line(user, "in", line);
        log_line(user, "out", out);
        try {
            sock.send_line(out);
        } catch (const Error&) {
            break; // peer went away before the reply
        }
    }
}

namespace {

StoredRecord record_from_wire(const nlohmann::json& body) {
    StoredRecord rec;
    rec.ctr = body.at("ctr").get<uint64_t>();
    const auto& eb = body.at("eb");
    if (!eb.is_array() || eb.size() != 2) fail(Err::BadRequest, "eb must be [b,b]");
    rec.eb0 = eb[0].get<int>();
    rec.eb1 = eb[1].get<int>();
    if ((rec.eb0 & ~1) || (rec.eb1 & ~1)) fail(Err::BadRequest, "eb bits must be 0 or 1");
    rec.cell = body.at("cell").get<int>();
    if (rec.cell < 1 || rec.cell > 9) fail(Err::BadRequest, "cell label out of range");
    const auto& vec = body.at("vec");
    if (!vec.is_array() || vec.size() != 2) fail(Err::BadRequest, "vec must be [H,H]");
    rec.vec.x0 = FieldElement::from_hex(vec[0].get<std::string>());
    rec.vec.x1 = FieldElement::from_hex(vec[1].get<std::string>());
    return rec;
}

} // namespace

nlohmann::json ServerLoop::handle(const nlohmann::json& msg, std::string& user_out) {
    const std::string op = msg.at("op").get<std::string>();

    if (op == "register") {
        user_out = msg.at("user").get<std::string>();
        std::string token =
            relay_.register_user(user_out, msg.at("pass").get<std::string>());
        return {{"ok", true}, {"token", token}};
    }

    const std::string user = relay_.user_for_token(msg.at("token").get<std::string>());
    user_out = user;
    relay_.touch(user);

    if (op == "add_contact") {
        relay_.add_contact(user, msg.at("peer").get<std::string>());
        return {{"ok", true}};
    }
    if (op == "checkin") {
        relay_.store_checkin(user, msg.at("to").get<std::string>(), record_from_wire(msg));
        return {{"ok", true}};
    }
    if (op == "fetch") {
        auto hdr = relay_.fetch_header(user, msg.at("peer").get<std::string>());
        if (!hdr) return {{"ok", true}, {"empty", true}};
        return {{"ok", true},
                {"ctr", hdr->ctr},
                {"eb", {hdr->eb0, hdr->eb1}},
                {"cell", hdr->cell}};
    }
    if (op == "finish") {
        const auto& vec = msg.at("vec");
        if (!vec.is_array() || vec.size() != 2) fail(Err::BadRequest, "vec must be [H,H]");
        Vector2 v1{FieldElement::from_hex(vec[0].get<std::string>()),
                   FieldElement::from_hex(vec[1].get<std::string>())};
        FieldElement m = relay_.eval_inner_product(user, msg.at("peer").get<std::string>(),
                                                   msg.at("ctr").get<uint64_t>(), v1);
        return {{"ok", true}, {"m", m.to_hex()}};
    }
    if (op == "cache") {
        std::vector<StoredRecord> rows;
        for (const auto& body : msg.at("rows")) rows.push_back(record_from_wire(body));
        relay_.put_cache(user, msg.at("to").get<std::string>(), rows);
        return {{"ok", true}};
    }
    fail(Err::BadRequest, "unknown op: " + op);
}

} // namespace waypost
