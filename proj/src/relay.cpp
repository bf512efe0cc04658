#include "waypost/relay.hpp"

#include <openssl/rand.h>

#include <nlohmann/json.hpp>

#include "waypost/errors.hpp"
#include "waypost/keystream.hpp"

namespace waypost {

namespace {

std::string fresh_token() {
    uint8_t buf[16];
    if (RAND_bytes(buf, sizeof buf) != 1) fail(Err::IoError, "system randomness unavailable");
    return bytes_to_hex(buf, sizeof buf);
}

nlohmann::json record_event(const StoredRecord& r) {
    return {{"ctr", r.ctr}, {"eb0", r.eb0}, {"eb1", r.eb1},
            {"cell", r.cell}, {"v0", r.vec.x0.to_hex()}, {"v1", r.vec.x1.to_hex()}};
}

StoredRecord record_from_event(const nlohmann::json& j) {
    StoredRecord r;
    r.ctr = j.at("ctr").get<uint64_t>();
    r.eb0 = j.at("eb0").get<int>();
    r.eb1 = j.at("eb1").get<int>();
    r.cell = j.at("cell").get<int>();
    r.vec.x0 = FieldElement::from_hex(j.at("v0").get<std::string>());
    r.vec.x1 = FieldElement::from_hex(j.at("v1").get<std::string>());
    return r;
}

} // namespace

Relay::Relay(std::chrono::milliseconds t_offline) : t_offline_(t_offline) {}

void Relay::emit(const nlohmann::json& ev) {
    if (sink_) sink_(ev);
}

std::string Relay::register_user(const std::string& user, const std::string& pass) {
    if (user.empty()) fail(Err::BadRequest, "empty username");
    std::lock_guard<std::mutex> lk(mu_);
    if (users_.count(user)) fail(Err::DuplicateUser, "username taken");
    UserRec rec{pass, fresh_token(), std::chrono::steady_clock::now()};
    token_to_user_[rec.token] = user;
    users_[user] = rec;
    emit({{"ev", "register"}, {"user", user}, {"pass", pass}, {"token", rec.token}});
    return rec.token;
}

std::string Relay::user_for_token(const std::string& token) const {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = token_to_user_.find(token);
    if (it == token_to_user_.end()) fail(Err::AuthFailure, "unknown token");
    return it->second;
}

void Relay::touch(const std::string& user) {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = users_.find(user);
    if (it != users_.end()) it->second.last_seen = std::chrono::steady_clock::now();
}

void Relay::add_contact(const std::string& user, const std::string& peer) {
    std::lock_guard<std::mutex> lk(mu_);
    if (user == peer) fail(Err::InvalidPeer, "cannot add self");
    if (!users_.count(user)) fail(Err::UnknownUser, "user not registered");
    if (!users_.count(peer)) fail(Err::UnknownUser, "peer not registered");
    if (contact_requests_.insert({user, peer}).second)
        emit({{"ev", "add"}, {"user", user}, {"peer", peer}});
}

bool Relay::edge_live(const std::string& a, const std::string& b) const {
    std::lock_guard<std::mutex> lk(mu_);
    return contact_requests_.count({a, b}) && contact_requests_.count({b, a});
}

void Relay::require_edge_locked(const std::string& a, const std::string& b) const {
    if (!contact_requests_.count({a, b}) || !contact_requests_.count({b, a}))
        fail(Err::NoSuchEdge, "no mutual contact edge");
}

bool Relay::offline_locked(const std::string& user) const {
    auto it = users_.find(user);
    if (it == users_.end()) return true;
    return std::chrono::steady_clock::now() - it->second.last_seen > t_offline_;
}

void Relay::store_checkin_locked(const std::string& from, const std::string& to,
                                 const StoredRecord& rec) {
    require_edge_locked(from, to);
    DirQueue& q = queues_[{from, to}];
    if (rec.ctr <= q.checkin_high)
        fail(Err::NonMonotonicCounter, "counter not above previous checkin");
    q.live[rec.ctr] = rec;
    q.checkin_high = rec.ctr;
    // The fresh checkin reflects newer state than anything still cached.
    while (!q.cache.empty() && q.cache.front().ctr <= rec.ctr) q.cache.pop_front();
}

void Relay::store_checkin(const std::string& from, const std::string& to,
                          const StoredRecord& rec) {
    std::lock_guard<std::mutex> lk(mu_);
    store_checkin_locked(from, to, rec);
    emit({{"ev", "checkin"}, {"from", from}, {"to", to}, {"rec", record_event(rec)}});
}

std::optional<StoredRecord> Relay::fetch_header(const std::string& requester,
                                                const std::string& peer) {
    std::lock_guard<std::mutex> lk(mu_);
    require_edge_locked(requester, peer);
    DirQueue& q = queues_[{peer, requester}];
    if (q.live.empty() && !q.cache.empty() && offline_locked(peer)) {
        StoredRecord row = q.cache.front();
        q.cache.pop_front();
        q.live[row.ctr] = row;
        emit({{"ev", "promote"}, {"req", requester}, {"peer", peer}, {"ctr", row.ctr}});
    }
    if (q.live.empty()) return std::nullopt;
    return q.live.rbegin()->second;
}

void Relay::consume_locked(DirQueue& q, uint64_t ctr) {
    // Everything at or below the consumed counter is spent; the cache scan
    // matters only after snapshot replay, where promotions are not re-run.
    q.live.erase(q.live.begin(), q.live.upper_bound(ctr));
    while (!q.cache.empty() && q.cache.front().ctr <= ctr) q.cache.pop_front();
    if (ctr > q.consumed_high) q.consumed_high = ctr;
}

FieldElement Relay::eval_inner_product(const std::string& requester, const std::string& peer,
                                       uint64_t ctr, const Vector2& v1) {
    std::lock_guard<std::mutex> lk(mu_);
    require_edge_locked(requester, peer);
    DirQueue& q = queues_[{peer, requester}];
    if (ctr <= q.consumed_high) fail(Err::AlreadyConsumed, "counter already consumed");
    auto it = q.live.find(ctr);
    if (it == q.live.end()) fail(Err::UnknownCounter, "no record for counter");
    FieldElement m = inner_product(v1, it->second.vec);
    consume_locked(q, ctr);
    emit({{"ev", "consume"}, {"req", requester}, {"peer", peer}, {"ctr", ctr}});
    return m;
}

void Relay::put_cache_locked(const std::string& from, const std::string& to,
                             const std::vector<StoredRecord>& rows) {
    require_edge_locked(from, to);
    DirQueue& q = queues_[{from, to}];
    uint64_t high = q.checkin_high;
    for (const StoredRecord& r : rows) {
        if (r.ctr <= high) fail(Err::NonMonotonicCounter, "cache counters must increase");
        high = r.ctr;
    }
    for (const StoredRecord& r : rows) q.cache.push_back(r);
    q.checkin_high = high;
}

void Relay::put_cache(const std::string& from, const std::string& to,
                      const std::vector<StoredRecord>& rows) {
    std::lock_guard<std::mutex> lk(mu_);
    put_cache_locked(from, to, rows);
    nlohmann::json jrows = nlohmann::json::array();
    for (const StoredRecord& r : rows) jrows.push_back(record_event(r));
    emit({{"ev", "cache"}, {"from", from}, {"to", to}, {"rows", jrows}});
}

size_t Relay::user_count() const {
    std::lock_guard<std::mutex> lk(mu_);
    return users_.size();
}

size_t Relay::cache_depth(const std::string& from, const std::string& to) const {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = queues_.find({from, to});
    return it == queues_.end() ? 0 : it->second.cache.size();
}

void Relay::set_event_sink(std::function<void(const nlohmann::json&)> sink) {
    std::lock_guard<std::mutex> lk(mu_);
    sink_ = std::move(sink);
}

void Relay::apply_event(const nlohmann::json& ev) {
    std::lock_guard<std::mutex> lk(mu_);
    const std::string kind = ev.at("ev").get<std::string>();
    if (kind == "register") {
        UserRec rec{ev.at("pass").get<std::string>(), ev.at("token").get<std::string>(),
                    std::chrono::steady_clock::now()};
        token_to_user_[rec.token] = ev.at("user").get<std::string>();
        users_[ev.at("user").get<std::string>()] = rec;
    } else if (kind == "add") {
        contact_requests_.insert({ev.at("user").get<std::string>(), ev.at("peer").get<std::string>()});
    } else if (kind == "checkin") {
        store_checkin_locked(ev.at("from").get<std::string>(), ev.at("to").get<std::string>(),
                             record_from_event(ev.at("rec")));
    } else if (kind == "cache") {
        std::vector<StoredRecord> rows;
        for (const auto& j : ev.at("rows")) rows.push_back(record_from_event(j));
        put_cache_locked(ev.at("from").get<std::string>(), ev.at("to").get<std::string>(), rows);
    } else if (kind == "consume") {
        DirQueue& q = queues_[{ev.at("peer").get<std::string>(), ev.at("req").get<std::string>()}];
        consume_locked(q, ev.at("ctr").get<uint64_t>());
    } else if (kind == "promote") {
        // Promotion is presence-dependent; on replay the consume event does
        // the cache pruning, so nothing to do here.
    } else {
        fail(Err::BadRequest, "unknown snapshot event: " + kind);
    }
}

} // namespace waypost
