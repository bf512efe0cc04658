#pragma once

#include <string>
#include <vector>

namespace waypost {

// Artifacts a scenario run leaves behind, all under out_dir.
struct ScenarioArtifacts {
    std::string out_dir;
    std::string transcript;   // relay's observed wire traffic, JSONL
    std::string results;      // one line per step with CLI output
    std::string data_dir;     // client stores
    std::vector<std::string> result_lines;
};

// Drives a scripted multi-user run: spawns a fresh server, registers the
// users, wires up contacts and preferences, then executes the steps through
// real CLI subprocesses. Steps:
//   {"op":"checkin","user":U,"loc":"lat,lon","to":P}   (or "all":true)
//   {"op":"retrieve","user":U,"peer":P}
//   {"op":"retrieve_all","user":U}
//   {"op":"cache_fill","user":U,"peer":P,"n":K}
//   {"op":"set_pref","user":U,"peer":P,"pref":G[,"fake":"lat,lon"]}
//   {"op":"sleep_ms","ms":N}
// Top level: {"seed":S?, "t_offline_ms":N?, "users":[...], "edges":[{"a","b","key"}],
//             "prefs":[{"user","peer","pref","fake"?}], "steps":[...]}
ScenarioArtifacts run_scenario_file(const std::string& scenario_path, const std::string& out_dir,
                                    const std::string& server_bin, const std::string& cli_bin);

} // namespace waypost
