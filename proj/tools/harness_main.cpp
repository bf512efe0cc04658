#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "waypost/analysis.hpp"
#include "waypost/client.hpp"
#include "waypost/errors.hpp"
#include "waypost/scenario.hpp"
#include "waypost/subproc.hpp"

using namespace waypost;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

size_t count_lines(const std::string& s) {
    size_t n = 0;
    for (char c : s) {
        if (c == '\n') ++n;
    }
    return n;
}

// Wire-level driver for simulated peers: one socket carries traffic for many
// users, since every message is token-authenticated.
class WireDriver {
public:
    explicit WireDriver(const std::string& addr) : sock_(LineSocket::connect(addr)) {}

    nlohmann::json call(const nlohmann::json& msg) {
        sock_.send_line(msg.dump());
        std::string line;
        if (!sock_.recv_line(line)) fail(Err::IoError, "server closed the connection");
        nlohmann::json reply = nlohmann::json::parse(line);
        if (!reply.value("ok", false))
            fail(Err::BadRequest, "wire error: " + reply.value("err", "?"));
        return reply;
    }

    std::string register_user(const std::string& user) {
        return call({{"op", "register"}, {"user", user}, {"pass", "pw"}})
            .at("token")
            .get<std::string>();
    }

private:
    LineSocket sock_;
};

int run_bench(const std::string& server_bin, const std::string& cli_bin,
              const std::vector<int>& n_list, int reps, const std::string& out_csv,
              std::string work) {
    if (work.empty()) work = make_temp_dir("waypost-bench");
    ensure_dir(work);

    const std::string cfg_path = work + "/server.cfg";
    const std::string port_path = work + "/port";
    {
        std::ofstream cfg(cfg_path, std::ios::trunc);
        // No transcript: this run measures protocol latency, not logging.
        cfg << "listen=127.0.0.1:0\nport_file=" << port_path << "\nt_offline_ms=600000\n";
    }
    ChildProcess server = ChildProcess::spawn({server_bin, "--config", cfg_path});
    const std::string addr = "127.0.0.1:" + wait_for_file_line(port_path, 5000);

    std::ofstream csv(out_csv, std::ios::trunc);
    if (!csv) fail(Err::IoError, "cannot write " + out_csv);
    csv << "n_contacts,run,seconds\n";

    for (int n : n_list) {
        const std::string obs = "obs" + std::to_string(n);
        const std::string data_dir = work + "/data" + std::to_string(n);

        WireDriver wire(addr);
        std::mt19937_64 rng(uint64_t(1000 + n));

        ClientStore store = ClientStore::create(data_dir, obs);
        store.pass = "pw";
        store.token = wire.register_user(obs);
        store.last_loc = encode_geo(37.4, -122.1);

        struct Peer {
            std::string token;
            DirectionState st;
            GeoPoint loc;
        };
        std::vector<Peer> peers;
        peers.reserve(size_t(n));
        for (int i = 0; i < n; ++i) {
            Peer p;
            p.st.self_id = "p" + std::to_string(n) + "_" + std::to_string(i);
            p.st.peer_id = obs;
            p.token = wire.register_user(p.st.self_id);
            uint8_t kb[16];
            for (auto& b : kb) b = uint8_t(rng());
            p.st.key = SharedKey::from_hex(bytes_to_hex(kb, 16));
            p.st.my_pref = Granularity::Available;
            p.loc = encode_geo(37.0 + 0.001 * (i % 500), -122.0 - 0.001 * (i % 300));

            wire.call({{"op", "add_contact"}, {"token", p.token}, {"peer", obs}});
            wire.call({{"op", "add_contact"}, {"token", store.token}, {"peer", p.st.self_id}});
            store.add_contact(p.st.self_id, p.st.key);
            peers.push_back(std::move(p));
        }
        store.save();

        const EnvList cli_env{{"WAYPOST_SERVER", addr},
                              {"WAYPOST_DATA_DIR", data_dir},
                              {"WAYPOST_USER", obs}};
        double total = 0;
        for (int rep = 0; rep < reps; ++rep) {
            for (Peer& p : peers) {
                CheckinRecord rec = unified_checkin(p.st, p.loc, rng);
                nlohmann::json msg = record_wire_body(rec);
                msg["op"] = "checkin";
                msg["token"] = p.token;
                msg["to"] = obs;
                wire.call(msg);
            }
            const auto t0 = std::chrono::steady_clock::now();
            RunResult r = run_process({cli_bin, "retrieve-all"}, cli_env);
            const auto t1 = std::chrono::steady_clock::now();
            if (r.exit_code != 0)
                fail(Err::ConfigError, "retrieve-all failed (n=" + std::to_string(n) +
                                           "): " + r.err);
            if (count_lines(r.out) != size_t(n))
                fail(Err::ConfigError,
                     "expected " + std::to_string(n) + " result lines, got " +
                         std::to_string(count_lines(r.out)));
            const double secs = std::chrono::duration<double>(t1 - t0).count();
            total += secs;
            csv << n << "," << rep << "," << secs << "\n";
        }
        printf("n=%d mean=%.4fs over %d runs\n", n, total / reps, reps);
        fflush(stdout);
    }
    csv.close();
    server.terminate();

    if (n_list.size() >= 4) {
        FitResult fit = fit_scaling_csv(out_csv);
        printf("fit slope=%.6g intercept=%.6g r2=%.6f\n", fit.slope, fit.intercept, fit.r2);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"scenario runner, privacy analyzer, and benchmark"};
    app.require_subcommand(1);

    std::string server_bin = env_or("WAYPOST_SERVER_BIN", "");
    std::string cli_bin = env_or("WAYPOST_CLI_BIN", "");
    app.add_option("--server-bin", server_bin, "relay server binary");
    app.add_option("--cli-bin", cli_bin, "client binary");

    auto* run = app.add_subcommand("run", "execute a scenario file");
    std::string run_scenario, run_out;
    run->add_option("scenario", run_scenario)->required();
    run->add_option("--out", run_out, "artifact directory")->required();

    auto* bench = app.add_subcommand("bench", "measure batch retrieval scaling");
    std::vector<int> bench_n{100, 250, 500, 1000};
    int bench_reps = 20;
    std::string bench_out = "timings.csv";
    std::string bench_work;
    bench->add_option("--n", bench_n, "contact counts");
    bench->add_option("--reps", bench_reps, "repetitions per count");
    bench->add_option("--out", bench_out, "CSV output path");
    bench->add_option("--work", bench_work, "working directory (default: fresh temp dir)");

    auto* fit = app.add_subcommand("fit", "least-squares fit over a timing CSV");
    std::string fit_csv;
    fit->add_option("csv", fit_csv)->required();

    auto* analyze = app.add_subcommand("analyze", "compare two transcripts structurally");
    std::string an_t1, an_t2, an_user;
    analyze->add_option("t1", an_t1)->required();
    analyze->add_option("t2", an_t2)->required();
    analyze->add_option("--user", an_user, "restrict to one user's flows");

    auto* legacy = app.add_subcommand("legacy", "emit the unmasked-mode negative control pair");
    std::string lg_out1, lg_out2;
    legacy->add_option("--out1", lg_out1)->required();
    legacy->add_option("--out2", lg_out2)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (run->parsed()) {
            if (server_bin.empty() || cli_bin.empty())
                fail(Err::ConfigError, "need --server-bin and --cli-bin (or env equivalents)");
            ScenarioArtifacts art = run_scenario_file(run_scenario, run_out, server_bin, cli_bin);
            for (const auto& line : art.result_lines) printf("%s\n", line.c_str());
            return 0;
        }
        if (bench->parsed()) {
            if (server_bin.empty() || cli_bin.empty())
                fail(Err::ConfigError, "need --server-bin and --cli-bin (or env equivalents)");
            return run_bench(server_bin, cli_bin, bench_n, bench_reps, bench_out, bench_work);
        }
        if (fit->parsed()) {
            FitResult f = fit_scaling_csv(fit_csv);
            printf("slope=%.6g intercept=%.6g r2=%.6f\n", f.slope, f.intercept, f.r2);
            return 0;
        }
        if (analyze->parsed()) {
            auto t1 = load_transcript(an_t1, an_user);
            auto t2 = load_transcript(an_t2, an_user);
            auto diff = transcript_diff(t1, t2);
            if (diff) {
                printf("distinguishable: %s\n", diff->c_str());
                return 3;
            }
            printf("indistinguishable (%zu messages)\n", t1.size());
            return 0;
        }
        if (legacy->parsed()) {
            // Same contact count and schedule; only the preference assignment
            // differs. The shapes leak it, which analyze must detect.
            write_legacy_transcript(lg_out1,
                                    {Granularity::Available, Granularity::Available,
                                     Granularity::Available, Granularity::Available});
            write_legacy_transcript(lg_out2,
                                    {Granularity::Available, Granularity::Nearby,
                                     Granularity::Invisible, Granularity::Approx});
            return 0;
        }
        fail(Err::ConfigError, "no subcommand");
    } catch (const Error& e) {
        fprintf(stderr, "%s\n", e.what());
        return 1;
    }
}
