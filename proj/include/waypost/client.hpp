#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "waypost/netio.hpp"
#include "waypost/protocol.hpp"

namespace waypost {

// On-disk layout under <data_dir>/<user>/:
//   secrets.bin  - the secret core, exactly 17 bytes per contact
//                  (16-byte shared key + 1-byte preference), in contact order
//   state.jsonl  - bookkeeping: identity line, then one line per contact
//   lock         - flock() guard against concurrent invocations
struct ClientStore {
    std::string dir;
    std::string user;
    std::string token;
    std::string pass;
    std::optional<GeoPoint> last_loc; // most recent --loc, observer position
    uint64_t rng_ctr = 0;             // bumped per invocation for seeded runs
    std::vector<DirectionState> contacts;

    static std::string store_dir(const std::string& data_dir, const std::string& user);
    static bool exists(const std::string& data_dir, const std::string& user);
    static ClientStore create(const std::string& data_dir, const std::string& user);
    static ClientStore load(const std::string& data_dir, const std::string& user);
    // Lists identities present under data_dir.
    static std::vector<std::string> identities(const std::string& data_dir);

    void save() const; // atomic (tmp + rename), both files

    DirectionState* find(const std::string& peer);
    DirectionState& add_contact(const std::string& peer, const SharedKey& key);

    // Seeded from WAYPOST_SEED (mixed with user and invocation counter) when
    // set, so scenario runs replay; otherwise from system entropy.
    std::mt19937_64 make_rng();
};

// Held for the duration of a CLI invocation; a second invocation against the
// same store fails fast instead of interleaving writes.
class StoreLock {
public:
    explicit StoreLock(const std::string& store_dir);
    ~StoreLock();
    StoreLock(const StoreLock&) = delete;
    StoreLock& operator=(const StoreLock&) = delete;

private:
    int fd_ = -1;
};

// Wire body shared by checkin and cache rows.
nlohmann::json record_wire_body(const CheckinRecord& rec);

// One logical client session over one TCP connection.
class Client {
public:
    Client(std::string server, ClientStore store);

    // Registration happens before a store exists, hence static.
    static std::string register_user(const std::string& server, const std::string& user,
                                     const std::string& pass);

    void add_contact(const std::string& peer);
    void checkin(DirectionState& st, const GeoPoint& loc, std::mt19937_64& rng);
    RetrievalResult retrieve(DirectionState& st, const GeoPoint& my_loc, std::mt19937_64& rng);
    void cache_fill(DirectionState& st, int n, std::mt19937_64& rng);

    ClientStore& store() { return store_; }
    const std::string& server() const { return server_; }

    // Raw request/response; throws Error with the decoded wire code on
    // {"ok":false}. Exposed for the harness and tests.
    nlohmann::json call(const nlohmann::json& msg);

private:
    LineSocket& sock();

    std::string server_;
    ClientStore store_;
    LineSocket conn_;
    bool connected_ = false;
};

// Human-facing line for a retrieval outcome: one of
// "location <lat>,<lon>", "nearby", "not-nearby", "invisible", "stale".
std::string result_line(const RetrievalResult& r);

} // namespace waypost
