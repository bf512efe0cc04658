#include <signal.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include <CLI11.hpp>

#include "waypost/errors.hpp"
#include "waypost/netio.hpp"

using namespace waypost;

namespace {

void apply_kv(ServerConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "listen") {
        cfg.listen = value;
    } else if (key == "t_offline_ms") {
        cfg.t_offline = std::chrono::milliseconds(std::stol(value));
    } else if (key == "transcript") {
        cfg.transcript_path = value;
    } else if (key == "snapshot") {
        cfg.snapshot_path = value;
    } else if (key == "port_file") {
        cfg.port_file = value;
    } else {
        fail(Err::ConfigError, "unknown config key: " + key);
    }
}

void load_config_file(ServerConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Err::ConfigError, "cannot open config " + path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) fail(Err::ConfigError, "config line needs key=value: " + line);
        apply_kv(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
}

void apply_env(ServerConfig& cfg) {
    struct {
        const char* env;
        const char* key;
    } map[] = {{"WAYPOST_LISTEN", "listen"},
               {"WAYPOST_T_OFFLINE_MS", "t_offline_ms"},
               {"WAYPOST_TRANSCRIPT", "transcript"},
               {"WAYPOST_SNAPSHOT", "snapshot"},
               {"WAYPOST_PORT_FILE", "port_file"}};
    for (const auto& m : map) {
        const char* v = std::getenv(m.env);
        if (v && *v) apply_kv(cfg, m.key, v);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"location sharing relay server"};
    std::string config_path;
    app.add_option("--config", config_path, "key=value config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        ServerConfig cfg;
        if (!config_path.empty()) load_config_file(cfg, config_path);
        apply_env(cfg);

        // Handle shutdown via sigwait: worker threads inherit the blocked
        // mask, so SIGTERM/SIGINT always land here.
        sigset_t set;
        sigemptyset(&set);
        sigaddset(&set, SIGINT);
        sigaddset(&set, SIGTERM);
        pthread_sigmask(SIG_BLOCK, &set, nullptr);

        ServerLoop loop(cfg);
        loop.start();
        printf("listening on %s\n", loop.address().c_str());
        fflush(stdout);

        int sig = 0;
        sigwait(&set, &sig);
        loop.stop();
        return 0;
    } catch (const Error& e) {
        fprintf(stderr, "%s\n", e.what());
        return 1;
    }
}
