#include "waypost/scenario.hpp"

#include <chrono>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "waypost/errors.hpp"
#include "waypost/subproc.hpp"

namespace waypost {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\n\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\n\r");
    return s.substr(b, e - b + 1);
}

} // namespace

ScenarioArtifacts run_scenario_file(const std::string& scenario_path, const std::string& out_dir,
                                    const std::string& server_bin, const std::string& cli_bin) {
    std::ifstream in(scenario_path);
    if (!in) fail(Err::ConfigError, "cannot open scenario " + scenario_path);
    nlohmann::json sc = nlohmann::json::parse(in);

    ScenarioArtifacts art;
    art.out_dir = out_dir;
    art.transcript = out_dir + "/transcript.jsonl";
    art.results = out_dir + "/results.txt";
    art.data_dir = out_dir + "/data";
    ensure_dir(art.data_dir);

    const std::string cfg_path = out_dir + "/server.cfg";
    const std::string port_path = out_dir + "/port";
    {
        std::ofstream cfg(cfg_path, std::ios::trunc);
        cfg << "listen=127.0.0.1:0\n";
        cfg << "transcript=" << art.transcript << "\n";
        cfg << "port_file=" << port_path << "\n";
        if (sc.contains("t_offline_ms")) cfg << "t_offline_ms=" << sc["t_offline_ms"].get<int>() << "\n";
    }

    ChildProcess server = ChildProcess::spawn({server_bin, "--config", cfg_path});
    const std::string port = wait_for_file_line(port_path, 5000);

    EnvList base_env{{"WAYPOST_SERVER", "127.0.0.1:" + port},
                     {"WAYPOST_DATA_DIR", art.data_dir}};
    if (sc.contains("seed")) base_env.push_back({"WAYPOST_SEED", sc["seed"].get<std::string>()});

    auto cli = [&](const std::string& user, std::vector<std::string> args) -> std::string {
        std::vector<std::string> argv{cli_bin};
        for (auto& a : args) argv.push_back(std::move(a));
        EnvList env = base_env;
        env.push_back({"WAYPOST_USER", user});
        RunResult r = run_process(argv, env);
        if (r.exit_code != 0) {
            fail(Err::ConfigError, "cli step failed (user " + user + ", exit " +
                                       std::to_string(r.exit_code) + "): " + trim(r.err));
        }
        return trim(r.out);
    };

    for (const auto& u : sc.at("users")) cli(u.get<std::string>(), {"register", u.get<std::string>()});
    for (const auto& e : sc.at("edges")) {
        const std::string a = e.at("a").get<std::string>();
        const std::string b = e.at("b").get<std::string>();
        const std::string key = e.at("key").get<std::string>();
        cli(a, {"add-contact", b, "--key", key});
        cli(b, {"add-contact", a, "--key", key});
    }
    if (sc.contains("prefs")) {
        for (const auto& p : sc["prefs"]) {
            std::vector<std::string> args{"set-pref", p.at("peer").get<std::string>(),
                                          p.at("pref").get<std::string>()};
            if (p.contains("fake")) {
                args.push_back("--fake-loc");
                args.push_back(p["fake"].get<std::string>());
            }
            cli(p.at("user").get<std::string>(), args);
        }
    }

    int idx = 0;
    for (const auto& step : sc.at("steps")) {
        const std::string op = step.at("op").get<std::string>();
        std::string label = std::to_string(idx++) + " " + op;
        std::string output;
        if (op == "sleep_ms") {
            std::this_thread::sleep_for(std::chrono::milliseconds(step.at("ms").get<int>()));
        } else if (op == "checkin") {
            const std::string user = step.at("user").get<std::string>();
            std::vector<std::string> args{"checkin", "--loc", step.at("loc").get<std::string>()};
            if (step.value("all", false)) {
                args.push_back("--all");
                label += " " + user + " all";
            } else {
                args.push_back("--to");
                args.push_back(step.at("to").get<std::string>());
                label += " " + user + " to " + step.at("to").get<std::string>();
            }
            output = cli(user, args);
        } else if (op == "retrieve") {
            const std::string user = step.at("user").get<std::string>();
            const std::string peer = step.at("peer").get<std::string>();
            label += " " + user + " of " + peer;
            output = cli(user, {"retrieve", peer});
        } else if (op == "retrieve_all") {
            const std::string user = step.at("user").get<std::string>();
            label += " " + user;
            output = cli(user, {"retrieve-all"});
        } else if (op == "cache_fill") {
            const std::string user = step.at("user").get<std::string>();
            const std::string peer = step.at("peer").get<std::string>();
            label += " " + user + " for " + peer;
            output = cli(user, {"cache-fill", peer, "--n", std::to_string(step.at("n").get<int>())});
        } else if (op == "set_pref") {
            const std::string user = step.at("user").get<std::string>();
            std::vector<std::string> args{"set-pref", step.at("peer").get<std::string>(),
                                          step.at("pref").get<std::string>()};
            if (step.contains("fake")) {
                args.push_back("--fake-loc");
                args.push_back(step["fake"].get<std::string>());
            }
            label += " " + user;
            output = cli(user, args);
        } else {
            fail(Err::ConfigError, "unknown scenario step op: " + op);
        }
        art.result_lines.push_back(label + (output.empty() ? "" : " -> " + output));
    }

    server.terminate(); // graceful SIGTERM; transcript lines are flushed per write

    std::ofstream res(art.results, std::ios::trunc);
    for (const auto& line : art.result_lines) res << line << "\n";
    return art;
}

} // namespace waypost
