#pragma once

#include <string>
#include <utility>
#include <vector>

namespace waypost {

using EnvList = std::vector<std::pair<std::string, std::string>>;

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

// Run to completion, capturing stdout/stderr. extra_env entries are added to
// the inherited environment. Throws IoError if the child cannot be spawned.
RunResult run_process(const std::vector<std::string>& argv, const EnvList& extra_env = {});

// A long-running child (the relay server). terminate() sends SIGTERM and
// reaps; the destructor does the same if still running.
class ChildProcess {
public:
    ChildProcess() = default;
    static ChildProcess spawn(const std::vector<std::string>& argv, const EnvList& extra_env = {});
    ChildProcess(ChildProcess&& other) noexcept;
    ChildProcess& operator=(ChildProcess&& other) noexcept;
    ChildProcess(const ChildProcess&) = delete;
    ChildProcess& operator=(const ChildProcess&) = delete;
    ~ChildProcess();

    void terminate();
    bool running() const { return pid_ > 0; }
    int pid() const { return pid_; }

private:
    int pid_ = -1;
};

// mkdtemp under TMPDIR (default /tmp); returns the created path.
std::string make_temp_dir(const std::string& prefix);

// Recursive mkdir; existing directories are fine.
void ensure_dir(const std::string& path);

// Poll for a file to appear and return its first line (e.g. a port file).
std::string wait_for_file_line(const std::string& path, int timeout_ms);

} // namespace waypost
