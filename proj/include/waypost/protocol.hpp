#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "waypost/field.hpp"
#include "waypost/geo.hpp"
#include "waypost/keystream.hpp"

namespace waypost {

// Per-contact sharing preference. Byte codes are fixed; they are persisted in
// the client secret store.
enum class Granularity : uint8_t {
    Available = 0,
    Circle = 1,
    Approx = 2,
    Nearby = 3,
    Invisible = 4,
    Fake = 5,
};

const char* granularity_name(Granularity g);
std::optional<Granularity> granularity_from_name(const std::string& name);

// 1 iff the preference runs the equality test; every other preference shares
// a masked payload (invisible shares the invisible sentinel).
int protocol_bit(Granularity g);

enum class ProtocolKind { PSP, VPET };

// Which base protocol a (sender pref, receiver pref) pair resolves to.
ProtocolKind dispatch(Granularity pref_a, Granularity pref_b);

// State for one direction of one contact edge. Callers serialize operations
// per direction; distinct edges are independent.
struct DirectionState {
    std::string self_id;
    std::string peer_id;
    SharedKey key;
    Granularity my_pref = Granularity::Invisible;
    std::optional<GeoPoint> my_fake;
    uint64_t last_sent_ctr = 0;
    uint64_t last_consumed_ctr = 0;

    // Peer's protocol bit as read from the most recent decoded header. The
    // header is decoded before any stale-abort decision, so this updates even
    // on aborted retrievals; that is what lets two nearby-nearby contacts
    // converge after a cold start.
    std::optional<int> peer_bit_belief;

    // Knowledge from completed retrievals only.
    std::optional<Granularity> cached_peer_pref;
    std::optional<GeoPoint> cached_peer_location;
    std::optional<bool> cached_peer_nearby;

    // Direction bit convention: 0 for the lexicographically smaller sender.
    int send_direction() const { return self_id < peer_id ? 0 : 1; }
    int recv_direction() const { return 1 - send_direction(); }
};

// What the server stores per checkin. The schema is identical for every
// granularity and for cached rows; only the opaque values differ.
struct CheckinRecord {
    uint64_t ctr = 0;
    int eb_mine = 0; // protocol bit xor padbit0
    int eb_peer = 0; // believed peer bit xor padbit1
    int cell = 0;    // plaintext cell label, random unless sharing nearby
    Vector2 vec;
};

struct RetrievalHeader {
    uint64_t ctr = 0;
    int eb_mine = 0;
    int eb_peer = 0;
    int cell = 0;
};

// Carried from phase 1 to phase 2 of a retrieval. When the sender's belief
// about our preference is out of date the retrieval is aborted, but v1 is
// still a well-formed cover query: the caller sends it and discards the
// result so the relay cannot see which retrievals abort.
struct RetrieveContext {
    uint64_t ctr = 0;
    bool aborted = false;
    bool vpet = false;
    Vector2 v1;
    Vector2 s;
    uint64_t k1 = 0;
    FieldElement k2;
    GeoPoint my_location;
};

struct RetrievalResult {
    enum class Kind { Location, NearbyYes, NearbyNo, Invisible, Stale };
    Kind kind = Kind::Invisible;
    GeoPoint point{}; // set iff kind == Location
};

// Step 1: build the next checkin record for this direction. Requires a real
// location unless the preference is invisible; requires my_fake when the
// preference is fake.
CheckinRecord unified_checkin(DirectionState& st, const GeoPoint& my_location,
                              std::mt19937_64& rng);

// Step 2: decode the header, decide the query vector. Throws StaleCounter if
// the header counter was already consumed.
RetrieveContext retrieve_phase1(DirectionState& st, const GeoPoint& my_location,
                                const RetrievalHeader& hdr, std::mt19937_64& rng);

// Step 4: interpret the relay's inner product. Updates cached peer knowledge
// and the consumed-counter high-water mark.
RetrievalResult retrieve_phase2(DirectionState& st, FieldElement m, const RetrieveContext& ctx);

// Pre-generated invisible rows with consecutive counters, for the relay to
// replay while we are offline. Does not depend on the current preference.
std::vector<CheckinRecord> batch_cache(DirectionState& st, int n, std::mt19937_64& rng);

// True when the grid proximity test, run by an observer at `observer` against
// a peer known to be at `peer`, lands on the peer's grid element.
bool grid_proximity_match(const GeoPoint& observer, const GeoPoint& peer);

// Running total of field-equality comparisons spent on proximity decisions.
// Each equality-test retrieval consumes exactly one; tests assert the delta.
uint64_t equality_comparison_count();

FieldElement random_field_element(std::mt19937_64& rng);

} // namespace waypost
