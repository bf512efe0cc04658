#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "waypost/field.hpp"

namespace waypost {

// What the relay keeps per checkin: the header it will hand back on fetch
// plus the blinded vector it folds into the inner product. No plaintext
// location or preference ever reaches this struct.
struct StoredRecord {
    uint64_t ctr = 0;
    int eb0 = 0;
    int eb1 = 0;
    int cell = 0;
    Vector2 vec;
};

// Honest-but-curious relay core: registry, per-direction record queues,
// counter-cache replay, and the Step-3 inner product. Transport-free; the
// TCP loop and the in-process tests drive the same object. All public
// methods are thread-safe behind one mutex and throw Error on violations.
class Relay {
public:
    explicit Relay(std::chrono::milliseconds t_offline = std::chrono::milliseconds(30000));

    // Returns the bearer token. Throws DuplicateUser.
    std::string register_user(const std::string& user, const std::string& pass);

    // Token lookup for the wire layer. Throws AuthFailure.
    std::string user_for_token(const std::string& token) const;

    // Refresh the presence timestamp; called on every authenticated request.
    void touch(const std::string& user);

    // Directed contact request; the edge goes live once both directions have
    // been requested. Throws UnknownUser / InvalidPeer.
    void add_contact(const std::string& user, const std::string& peer);
    bool edge_live(const std::string& a, const std::string& b) const;

    // Throws NoSuchEdge / NonMonotonicCounter. A fresh checkin supersedes any
    // still-cached rows with lower counters.
    void store_checkin(const std::string& from, const std::string& to, const StoredRecord& rec);

    // Header of the newest unconsumed record for direction peer->requester.
    // If the live queue is empty, the peer is offline, and cached rows exist,
    // the next cached row is promoted into the queue first. nullopt means
    // nothing to serve. Throws NoSuchEdge.
    std::optional<StoredRecord> fetch_header(const std::string& requester, const std::string& peer);

    // m = <v1, stored vec>; consumes the record and discards older ones.
    // Throws NoSuchEdge / UnknownCounter / AlreadyConsumed.
    FieldElement eval_inner_product(const std::string& requester, const std::string& peer,
                                    uint64_t ctr, const Vector2& v1);

    // Append pre-generated rows to the counter cache. Throws NoSuchEdge /
    // NonMonotonicCounter (counters must keep increasing).
    void put_cache(const std::string& from, const std::string& to,
                   const std::vector<StoredRecord>& rows);

    size_t user_count() const;
    size_t cache_depth(const std::string& from, const std::string& to) const;

    // Append-only persistence: every committed mutation is offered to the
    // sink as one JSON event; apply_event replays one on startup.
    void set_event_sink(std::function<void(const nlohmann::json&)> sink);
    void apply_event(const nlohmann::json& ev);

private:
    struct UserRec {
        std::string pass;
        std::string token;
        std::chrono::steady_clock::time_point last_seen;
    };

    // One direction of one edge.
    struct DirQueue {
        std::map<uint64_t, StoredRecord> live; // unconsumed, keyed by ctr
        std::deque<StoredRecord> cache;        // FIFO, strictly increasing ctr
        uint64_t checkin_high = 0;             // highest ctr ever accepted
        uint64_t consumed_high = 0;            // highest ctr consumed or discarded
    };

    using DirKey = std::pair<std::string, std::string>; // (from, to)

    bool offline_locked(const std::string& user) const;
    void require_edge_locked(const std::string& a, const std::string& b) const;
    void store_checkin_locked(const std::string& from, const std::string& to,
                              const StoredRecord& rec);
    void put_cache_locked(const std::string& from, const std::string& to,
                          const std::vector<StoredRecord>& rows);
    void consume_locked(DirQueue& q, uint64_t ctr);
    void emit(const nlohmann::json& ev);

    mutable std::mutex mu_;
    std::chrono::milliseconds t_offline_;
    std::map<std::string, UserRec> users_;
    std::map<std::string, std::string> token_to_user_;
    std::set<DirKey> contact_requests_; // directed add-contact intents
    std::map<DirKey, DirQueue> queues_;
    std::function<void(const nlohmann::json&)> sink_;
};

} // namespace waypost
