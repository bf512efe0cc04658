#include "waypost/analysis.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "waypost/errors.hpp"

namespace waypost {

std::vector<TranscriptLine> load_transcript(const std::string& path,
                                            const std::string& user_filter) {
    std::ifstream in(path);
    if (!in) fail(Err::IoError, "cannot open transcript " + path);
    std::vector<TranscriptLine> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        TranscriptLine t;
        t.seq = j.at("seq").get<uint64_t>();
        t.user = j.at("user").get<std::string>();
        t.dir = j.at("dir").get<std::string>();
        t.bytes = j.at("bytes").get<std::string>();
        if (!user_filter.empty() && t.user != user_filter) continue;
        out.push_back(std::move(t));
    }
    return out;
}

std::string shape_of(const nlohmann::json& v) {
    switch (v.type()) {
    case nlohmann::json::value_t::object: {
        std::string s = "{";
        for (auto it = v.begin(); it != v.end(); ++it) { // keys iterate sorted
            if (s.size() > 1) s += ",";
            s += it.key() + ":" + shape_of(it.value());
        }
        return s + "}";
    }
    case nlohmann::json::value_t::array: {
        std::string s = "[";
        for (size_t i = 0; i < v.size(); ++i) {
            if (i) s += ",";
            s += shape_of(v[i]);
        }
        return s + "]";
    }
    case nlohmann::json::value_t::string:
        return "s" + std::to_string(v.get<std::string>().size());
    case nlohmann::json::value_t::boolean:
        return "b";
    case nlohmann::json::value_t::null:
        return "z";
    default:
        return "n"; // all numeric kinds
    }
}

std::string line_signature(const TranscriptLine& line) {
    std::string shape;
    try {
        shape = shape_of(nlohmann::json::parse(line.bytes));
    } catch (const nlohmann::json::exception&) {
        shape = "raw" + std::to_string(line.bytes.size());
    }
    return line.user + "|" + line.dir + "|" + shape;
}

std::optional<std::string> transcript_diff(const std::vector<TranscriptLine>& a,
                                           const std::vector<TranscriptLine>& b) {
    const size_t n = std::min(a.size(), b.size());
    for (size_t i = 0; i < n; ++i) {
        const std::string sa = line_signature(a[i]);
        const std::string sb = line_signature(b[i]);
        if (sa != sb) {
            return "message " + std::to_string(i) + " differs:\n  left:  " + sa +
                   "\n  right: " + sb;
        }
    }
    if (a.size() != b.size()) {
        return "message counts differ: left " + std::to_string(a.size()) + ", right " +
               std::to_string(b.size());
    }
    return std::nullopt;
}

FitResult fit_line(const std::vector<std::pair<double, double>>& pts) {
    if (pts.size() < 2) fail(Err::ConfigError, "need at least two points to fit");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = double(pts.size());
    for (auto [x, y] : pts) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0) fail(Err::ConfigError, "degenerate x values");
    FitResult f;
    f.slope = (n * sxy - sx * sy) / denom;
    f.intercept = (sy - f.slope * sx) / n;

    double ss_res = 0, ss_tot = 0;
    const double mean_y = sy / n;
    for (auto [x, y] : pts) {
        const double e = y - (f.slope * x + f.intercept);
        ss_res += e * e;
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    f.r2 = ss_tot == 0 ? 1.0 : 1.0 - ss_res / ss_tot;
    return f;
}

namespace {

std::map<int, std::vector<double>> read_timings(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) fail(Err::IoError, "cannot open " + csv_path);
    std::string line;
    if (!std::getline(in, line) || line != "n_contacts,run,seconds")
        fail(Err::BadRequest, "expected header n_contacts,run,seconds");
    std::map<int, std::vector<double>> by_n;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string n_s, run_s, sec_s;
        if (!std::getline(row, n_s, ',') || !std::getline(row, run_s, ',') ||
            !std::getline(row, sec_s, ','))
            fail(Err::BadRequest, "malformed CSV row: " + line);
        by_n[std::stoi(n_s)].push_back(std::stod(sec_s));
    }
    return by_n;
}

} // namespace

FitResult fit_scaling_csv(const std::string& csv_path) {
    auto by_n = read_timings(csv_path);
    if (by_n.size() < 4) fail(Err::ConfigError, "need at least 4 contact counts for the fit");
    std::vector<std::pair<double, double>> pts;
    for (const auto& [n, secs] : by_n) {
        double sum = 0;
        for (double s : secs) sum += s;
        pts.push_back({double(n), sum / double(secs.size())});
    }
    return fit_line(pts);
}

std::optional<double> mean_seconds_csv(const std::string& csv_path, int n_contacts) {
    auto by_n = read_timings(csv_path);
    auto it = by_n.find(n_contacts);
    if (it == by_n.end() || it->second.empty()) return std::nullopt;
    double sum = 0;
    for (double s : it->second) sum += s;
    return sum / double(it->second.size());
}

void write_legacy_transcript(const std::string& path,
                             const std::vector<Granularity>& edge_prefs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Err::IoError, "cannot write " + path);
    uint64_t seq = 0;
    const std::string token(32, 'a');
    const std::string h32(32, '0');
    auto put = [&](const std::string& user, const char* dir, const nlohmann::json& msg) {
        nlohmann::json entry{{"seq", seq++}, {"user", user}, {"dir", dir}, {"bytes", msg.dump()}};
        out << entry.dump() << "\n";
    };

    int edge_no = 0;
    for (Granularity g : edge_prefs) {
        const std::string sender = "u" + std::to_string(edge_no);
        const std::string receiver = "v" + std::to_string(edge_no);
        ++edge_no;
        switch (g) {
        case Granularity::Available:
        case Granularity::Circle:
        case Granularity::Approx:
        case Granularity::Fake:
            // Location modes ship one masked 8-byte payload.
            put(sender, "in",
                {{"op", "share_loc"}, {"token", token}, {"to", receiver},
                 {"loc", std::string(16, '0')}});
            put(sender, "out", {{"ok", true}});
            put(receiver, "in", {{"op", "get_loc"}, {"token", token}, {"peer", sender}});
            put(receiver, "out", {{"ok", true}, {"loc", std::string(16, '0')}});
            break;
        case Granularity::Nearby:
            // Proximity mode ships a cell label and a blinded vector, and the
            // reader answers with a query vector: a different shape entirely.
            put(sender, "in",
                {{"op", "share_prox"}, {"token", token}, {"to", receiver},
                 {"cell", 5}, {"vec", {h32, h32}}});
            put(sender, "out", {{"ok", true}});
            put(receiver, "in",
                {{"op", "prox_query"}, {"token", token}, {"peer", sender}, {"vec", {h32, h32}}});
            put(receiver, "out", {{"ok", true}, {"m", h32}});
            break;
        case Granularity::Invisible:
            // Invisible contacts simply send nothing: absence is the leak.
            break;
        }
    }
}

} // namespace waypost
