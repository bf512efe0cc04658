#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "waypost/protocol.hpp"

namespace waypost {

// One observed wire message, as recorded by the relay.
struct TranscriptLine {
    uint64_t seq = 0;
    std::string user;
    std::string dir; // "in" (client->server) or "out"
    std::string bytes;
};

// user_filter restricts to one user's flows (what that user's counterpart
// could observe); empty means the whole transcript (the relay's view).
std::vector<TranscriptLine> load_transcript(const std::string& path,
                                            const std::string& user_filter = "");

// Structural signature of a JSON value: field names, nesting, value types,
// and string lengths; never the values themselves. Two messages with equal
// shapes are indistinguishable to an observer who knows the schema.
std::string shape_of(const nlohmann::json& v);
std::string line_signature(const TranscriptLine& line);

// nullopt when the two transcripts are schema-identical; otherwise a
// description of the first divergence.
std::optional<std::string> transcript_diff(const std::vector<TranscriptLine>& a,
                                           const std::vector<TranscriptLine>& b);

struct FitResult {
    double slope = 0;
    double intercept = 0;
    double r2 = 0;
};

// Least squares over (x, y) points.
FitResult fit_line(const std::vector<std::pair<double, double>>& pts);

// CSV with header "n_contacts,run,seconds"; fits over per-N mean seconds.
FitResult fit_scaling_csv(const std::string& csv_path);
// Mean seconds for one contact count; nullopt when absent from the CSV.
std::optional<double> mean_seconds_csv(const std::string& csv_path, int n_contacts);

// Negative control: transcripts a pre-unification client would generate,
// where the sharing mode dictates the message structure (locations travel as
// one masked scalar, proximity as a cell plus vector, invisibility as
// silence). Running the analyzer on two such transcripts with different
// preference assignments must report a difference.
void write_legacy_transcript(const std::string& path, const std::vector<Granularity>& edge_prefs);

} // namespace waypost
