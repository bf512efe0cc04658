#include "waypost/client.hpp"

#include <dirent.h>
#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "waypost/errors.hpp"
#include "waypost/subproc.hpp"

namespace waypost {

namespace {

bool valid_username(const std::string& u) {
    if (u.empty() || u.size() > 64) return false;
    for (char c : u) {
        if (!isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
    }
    return true;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(Err::IoError, "cannot write " + tmp);
        out.write(bytes.data(), std::streamsize(bytes.size()));
        if (!out) fail(Err::IoError, "short write to " + tmp);
    }
    if (rename(tmp.c_str(), path.c_str()) != 0)
        fail(Err::IoError, "rename " + tmp + ": " + strerror(errno));
}

std::string point_str(const GeoPoint& p) { return format_point_fx(p); }

uint64_t fnv1a(const std::string& s, uint64_t h) {
    for (char c : s) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

Err code_from_wire(const std::string& code) {
    if (code == "DUP_USER") return Err::DuplicateUser;
    if (code == "NO_EDGE") return Err::NoSuchEdge;
    if (code == "BAD_CTR") return Err::NonMonotonicCounter;
    if (code == "UNKNOWN_CTR") return Err::UnknownCounter;
    if (code == "CONSUMED") return Err::AlreadyConsumed;
    if (code == "AUTH") return Err::AuthFailure;
    return Err::BadRequest;
}

} // namespace

std::string ClientStore::store_dir(const std::string& data_dir, const std::string& user) {
    return data_dir + "/" + user;
}

bool ClientStore::exists(const std::string& data_dir, const std::string& user) {
    struct stat st{};
    return stat((store_dir(data_dir, user) + "/state.jsonl").c_str(), &st) == 0;
}

std::vector<std::string> ClientStore::identities(const std::string& data_dir) {
    std::vector<std::string> out;
    DIR* d = opendir(data_dir.c_str());
    if (!d) return out;
    while (dirent* e = readdir(d)) {
        std::string name = e->d_name;
        if (name == "." || name == "..") continue;
        if (exists(data_dir, name)) out.push_back(name);
    }
    closedir(d);
    return out;
}

ClientStore ClientStore::create(const std::string& data_dir, const std::string& user) {
    if (!valid_username(user)) fail(Err::ConfigError, "invalid username: " + user);
    if (exists(data_dir, user)) fail(Err::ConfigError, "store already exists for " + user);
    ClientStore s;
    s.dir = store_dir(data_dir, user);
    s.user = user;
    ensure_dir(s.dir);
    return s;
}

ClientStore ClientStore::load(const std::string& data_dir, const std::string& user) {
    if (!valid_username(user)) fail(Err::ConfigError, "invalid username: " + user);
    std::ifstream in(store_dir(data_dir, user) + "/state.jsonl");
    if (!in) fail(Err::ConfigError, "no store for " + user + " under " + data_dir);

    ClientStore s;
    s.dir = store_dir(data_dir, user);

    std::string line;
    if (!std::getline(in, line)) fail(Err::IoError, "empty store state");
    nlohmann::json ident = nlohmann::json::parse(line);
    s.user = ident.at("user").get<std::string>();
    s.token = ident.at("token").get<std::string>();
    s.pass = ident.at("pass").get<std::string>();
    s.rng_ctr = ident.at("rng_ctr").get<uint64_t>();
    if (ident.contains("last_loc"))
        s.last_loc = parse_point(ident.at("last_loc").get<std::string>());

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        DirectionState st;
        st.self_id = s.user;
        st.peer_id = j.at("peer").get<std::string>();
        st.last_sent_ctr = j.at("last_sent").get<uint64_t>();
        st.last_consumed_ctr = j.at("last_consumed").get<uint64_t>();
        if (j.contains("belief")) st.peer_bit_belief = j.at("belief").get<int>();
        if (j.contains("cached_pref"))
            st.cached_peer_pref = static_cast<Granularity>(j.at("cached_pref").get<int>());
        if (j.contains("cached_loc"))
            st.cached_peer_location = parse_point(j.at("cached_loc").get<std::string>());
        if (j.contains("cached_nearby")) st.cached_peer_nearby = j.at("cached_nearby").get<bool>();
        if (j.contains("fake")) st.my_fake = parse_point(j.at("fake").get<std::string>());
        s.contacts.push_back(std::move(st));
    }

    // The secret core carries the keys and preferences, one 17-byte row per
    // contact, in the same order as the bookkeeping lines.
    std::ifstream sec(s.dir + "/secrets.bin", std::ios::binary);
    if (!sec) fail(Err::IoError, "missing secrets.bin for " + user);
    std::string blob((std::istreambuf_iterator<char>(sec)), std::istreambuf_iterator<char>());
    if (blob.size() != s.contacts.size() * 17)
        fail(Err::IoError, "secret core size mismatch: " + std::to_string(blob.size()) +
                               " bytes for " + std::to_string(s.contacts.size()) + " contacts");
    for (size_t i = 0; i < s.contacts.size(); ++i) {
        const uint8_t* row = reinterpret_cast<const uint8_t*>(blob.data()) + i * 17;
        std::copy(row, row + 16, s.contacts[i].key.bytes.begin());
        s.contacts[i].my_pref = static_cast<Granularity>(row[16]);
    }
    return s;
}

void ClientStore::save() const {
    nlohmann::json ident{{"user", user}, {"token", token}, {"pass", pass}, {"rng_ctr", rng_ctr}};
    if (last_loc) ident["last_loc"] = point_str(*last_loc);

    std::string state = ident.dump() + "\n";
    std::string secrets;
    secrets.reserve(contacts.size() * 17);
    for (const DirectionState& st : contacts) {
        nlohmann::json j{{"peer", st.peer_id},
                         {"last_sent", st.last_sent_ctr},
                         {"last_consumed", st.last_consumed_ctr}};
        if (st.peer_bit_belief) j["belief"] = *st.peer_bit_belief;
        if (st.cached_peer_pref) j["cached_pref"] = static_cast<int>(*st.cached_peer_pref);
        if (st.cached_peer_location) j["cached_loc"] = point_str(*st.cached_peer_location);
        if (st.cached_peer_nearby) j["cached_nearby"] = *st.cached_peer_nearby;
        if (st.my_fake) j["fake"] = point_str(*st.my_fake);
        state += j.dump() + "\n";

        secrets.append(reinterpret_cast<const char*>(st.key.bytes.data()), 16);
        secrets.push_back(static_cast<char>(st.my_pref));
    }

    write_file_atomic(dir + "/secrets.bin", secrets);
    write_file_atomic(dir + "/state.jsonl", state);
}

DirectionState* ClientStore::find(const std::string& peer) {
    for (DirectionState& st : contacts) {
        if (st.peer_id == peer) return &st;
    }
    return nullptr;
}

DirectionState& ClientStore::add_contact(const std::string& peer, const SharedKey& key) {
    if (DirectionState* existing = find(peer)) {
        existing->key = key;
        return *existing;
    }
    DirectionState st;
    st.self_id = user;
    st.peer_id = peer;
    st.key = key;
    contacts.push_back(std::move(st));
    return contacts.back();
}

std::mt19937_64 ClientStore::make_rng() {
    uint64_t ctr = rng_ctr++;
    const char* seed = std::getenv("WAYPOST_SEED");
    if (!seed || !*seed) {
        std::random_device rd;
        return std::mt19937_64((uint64_t(rd()) << 32) ^ rd());
    }
    uint64_t h = fnv1a(seed, 1469598103934665603ULL);
    h = fnv1a(user, h);
    h ^= ctr * 0x9e3779b97f4a7c15ULL;
    return std::mt19937_64(h);
}

StoreLock::StoreLock(const std::string& store_dir) {
    const std::string path = store_dir + "/lock";
    fd_ = open(path.c_str(), O_CREAT | O_RDWR, 0600);
    if (fd_ < 0) fail(Err::IoError, "cannot open " + path + ": " + strerror(errno));
    if (flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        fail(Err::IoError, "store is locked by another invocation");
    }
}

StoreLock::~StoreLock() {
    if (fd_ >= 0) ::close(fd_); // closing drops the flock
}

nlohmann::json record_wire_body(const CheckinRecord& rec) {
    return {{"ctr", rec.ctr},
            {"eb", {rec.eb_mine, rec.eb_peer}},
            {"cell", rec.cell},
            {"vec", {rec.vec.x0.to_hex(), rec.vec.x1.to_hex()}}};
}

Client::Client(std::string server, ClientStore store)
    : server_(std::move(server)), store_(std::move(store)) {}

LineSocket& Client::sock() {
    if (!connected_) {
        conn_ = LineSocket::connect(server_);
        connected_ = true;
    }
    return conn_;
}

nlohmann::json Client::call(const nlohmann::json& msg) {
    sock().send_line(msg.dump());
    std::string line;
    if (!sock().recv_line(line)) fail(Err::IoError, "server closed the connection");
    nlohmann::json reply = nlohmann::json::parse(line);
    if (!reply.value("ok", false)) {
        const std::string code = reply.value("err", "BAD_REQUEST");
        fail(code_from_wire(code), code);
    }
    return reply;
}

std::string Client::register_user(const std::string& server, const std::string& user,
                                  const std::string& pass) {
    LineSocket s = LineSocket::connect(server);
    s.send_line(nlohmann::json{{"op", "register"}, {"user", user}, {"pass", pass}}.dump());
    std::string line;
    if (!s.recv_line(line)) fail(Err::IoError, "server closed the connection");
    nlohmann::json reply = nlohmann::json::parse(line);
    if (!reply.value("ok", false)) {
        const std::string code = reply.value("err", "BAD_REQUEST");
        fail(code_from_wire(code), code);
    }
    return reply.at("token").get<std::string>();
}

void Client::add_contact(const std::string& peer) {
    call({{"op", "add_contact"}, {"token", store_.token}, {"peer", peer}});
}

void Client::checkin(DirectionState& st, const GeoPoint& loc, std::mt19937_64& rng) {
    CheckinRecord rec = unified_checkin(st, loc, rng);
    nlohmann::json msg = record_wire_body(rec);
    msg["op"] = "checkin";
    msg["token"] = store_.token;
    msg["to"] = st.peer_id;
    call(msg);
}

RetrievalResult Client::retrieve(DirectionState& st, const GeoPoint& my_loc,
                                 std::mt19937_64& rng) {
    nlohmann::json reply = call({{"op", "fetch"}, {"token", store_.token}, {"peer", st.peer_id}});
    if (reply.value("empty", false)) {
        // Nothing ever shared in this direction: shown exactly like an
        // invisible contact, so silence reveals nothing.
        RetrievalResult r;
        r.kind = RetrievalResult::Kind::Invisible;
        return r;
    }
    RetrievalHeader hdr;
    hdr.ctr = reply.at("ctr").get<uint64_t>();
    hdr.eb_mine = reply.at("eb")[0].get<int>();
    hdr.eb_peer = reply.at("eb")[1].get<int>();
    hdr.cell = reply.at("cell").get<int>();

    RetrieveContext ctx = retrieve_phase1(st, my_loc, hdr, rng);
    nlohmann::json fin = call({{"op", "finish"},
                               {"token", store_.token},
                               {"peer", st.peer_id},
                               {"ctr", hdr.ctr},
                               {"vec", {ctx.v1.x0.to_hex(), ctx.v1.x1.to_hex()}}});
    FieldElement m = FieldElement::from_hex(fin.at("m").get<std::string>());
    return retrieve_phase2(st, m, ctx);
}

void Client::cache_fill(DirectionState& st, int n, std::mt19937_64& rng) {
    std::vector<CheckinRecord> rows = batch_cache(st, n, rng);
    nlohmann::json jrows = nlohmann::json::array();
    for (const CheckinRecord& r : rows) jrows.push_back(record_wire_body(r));
    call({{"op", "cache"}, {"token", store_.token}, {"to", st.peer_id}, {"rows", jrows}});
}

std::string result_line(const RetrievalResult& r) {
    switch (r.kind) {
    case RetrievalResult::Kind::Location: return "location " + format_point_deg(r.point);
    case RetrievalResult::Kind::NearbyYes: return "nearby";
    case RetrievalResult::Kind::NearbyNo: return "not-nearby";
    case RetrievalResult::Kind::Invisible: return "invisible";
    case RetrievalResult::Kind::Stale: return "stale";
    }
    return "invisible";
}

} // namespace waypost
