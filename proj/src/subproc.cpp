#include "waypost/subproc.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <thread>

#include "waypost/errors.hpp"

namespace waypost {

namespace {

[[noreturn]] void exec_child(const std::vector<std::string>& argv, const EnvList& extra_env) {
    for (const auto& [k, v] : extra_env) setenv(k.c_str(), v.c_str(), 1);
    std::vector<char*> cargv;
    cargv.reserve(argv.size() + 1);
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    execvp(cargv[0], cargv.data());
    fprintf(stderr, "exec %s: %s\n", cargv[0], strerror(errno));
    _exit(127);
}

} // namespace

RunResult run_process(const std::vector<std::string>& argv, const EnvList& extra_env) {
    if (argv.empty()) fail(Err::ConfigError, "empty argv");
    int out_pipe[2], err_pipe[2];
    if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0)
        fail(Err::IoError, "pipe: " + std::string(strerror(errno)));

    pid_t pid = fork();
    if (pid < 0) fail(Err::IoError, "fork: " + std::string(strerror(errno)));
    if (pid == 0) {
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        close(out_pipe[0]);
        close(out_pipe[1]);
        close(err_pipe[0]);
        close(err_pipe[1]);
        exec_child(argv, extra_env);
    }

    close(out_pipe[1]);
    close(err_pipe[1]);

    RunResult res;
    pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
    std::string* sinks[2] = {&res.out, &res.err};
    int open_fds = 2;
    char buf[4096];
    while (open_fds > 0) {
        if (poll(fds, 2, -1) < 0) {
            if (errno == EINTR) continue;
            break;
        }
        for (int i = 0; i < 2; ++i) {
            if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP))) continue;
            ssize_t n = read(fds[i].fd, buf, sizeof buf);
            if (n > 0) {
                sinks[i]->append(buf, size_t(n));
            } else {
                close(fds[i].fd);
                fds[i].fd = -1;
                --open_fds;
            }
        }
    }

    int status = 0;
    while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    if (WIFEXITED(status)) {
        res.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        res.exit_code = 128 + WTERMSIG(status);
    }
    return res;
}

ChildProcess ChildProcess::spawn(const std::vector<std::string>& argv, const EnvList& extra_env) {
    if (argv.empty()) fail(Err::ConfigError, "empty argv");
    pid_t pid = fork();
    if (pid < 0) fail(Err::IoError, "fork: " + std::string(strerror(errno)));
    if (pid == 0) exec_child(argv, extra_env);
    ChildProcess c;
    c.pid_ = pid;
    return c;
}

ChildProcess::ChildProcess(ChildProcess&& other) noexcept : pid_(other.pid_) { other.pid_ = -1; }

ChildProcess& ChildProcess::operator=(ChildProcess&& other) noexcept {
    if (this != &other) {
        terminate();
        pid_ = other.pid_;
        other.pid_ = -1;
    }
    return *this;
}

ChildProcess::~ChildProcess() { terminate(); }

void ChildProcess::terminate() {
    if (pid_ <= 0) return;
    kill(pid_, SIGTERM);
    int status = 0;
    // Give it a moment to exit cleanly before escalating.
    for (int i = 0; i < 200; ++i) {
        pid_t r = waitpid(pid_, &status, WNOHANG);
        if (r == pid_) {
            pid_ = -1;
            return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    kill(pid_, SIGKILL);
    waitpid(pid_, &status, 0);
    pid_ = -1;
}

std::string make_temp_dir(const std::string& prefix) {
    const char* base = getenv("TMPDIR");
    std::string tmpl = std::string(base && *base ? base : "/tmp") + "/" + prefix + ".XXXXXX";
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (!mkdtemp(buf.data())) fail(Err::IoError, "mkdtemp: " + std::string(strerror(errno)));
    return std::string(buf.data());
}

void ensure_dir(const std::string& path) {
    std::string cur;
    for (size_t i = 0; i <= path.size(); ++i) {
        if (i == path.size() || path[i] == '/') {
            if (!cur.empty() && mkdir(cur.c_str(), 0700) != 0 && errno != EEXIST)
                fail(Err::IoError, "mkdir " + cur + ": " + strerror(errno));
        }
        if (i < path.size()) cur.push_back(path[i]);
    }
}

std::string wait_for_file_line(const std::string& path, int timeout_ms) {
    for (int waited = 0; waited <= timeout_ms; waited += 10) {
        std::ifstream in(path);
        std::string line;
        if (in && std::getline(in, line) && !line.empty()) return line;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    fail(Err::IoError, "timed out waiting for " + path);
}

} // namespace waypost
