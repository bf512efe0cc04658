#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <openssl/rand.h>

#include "waypost/client.hpp"
#include "waypost/errors.hpp"

using namespace waypost;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

std::string random_hex16() {
    uint8_t buf[16];
    if (RAND_bytes(buf, sizeof buf) != 1) fail(Err::IoError, "system randomness unavailable");
    return bytes_to_hex(buf, sizeof buf);
}

std::array<uint8_t, 32> hex32_bytes(const std::string& hex) {
    std::array<uint8_t, 32> out{};
    hex_to_bytes(hex, out.data(), out.size());
    return out;
}

struct Cmd {
    std::string data_dir;
    std::string server;
    std::string user;

    std::string resolve_user() const {
        if (!user.empty()) return user;
        auto ids = ClientStore::identities(data_dir);
        if (ids.size() == 1) return ids[0];
        fail(Err::ConfigError, ids.empty()
                                   ? "no identity under " + data_dir + "; run register first"
                                   : "multiple identities; pass --user or set WAYPOST_USER");
    }

    std::string require_server() const {
        if (server.empty())
            fail(Err::ConfigError, "server address required (--server or WAYPOST_SERVER)");
        return server;
    }

    ClientStore open_store() const { return ClientStore::load(data_dir, resolve_user()); }
};

GeoPoint observer_location(const ClientStore& s) {
    // retrieve has no --loc; the last checked-in position doubles as the
    // observer position for proximity math, origin if never set.
    return s.last_loc.value_or(GeoPoint{0, 0});
}

std::string retrieve_one(Client& c, DirectionState& st, const GeoPoint& my_loc,
                         std::mt19937_64& rng) {
    try {
        return result_line(c.retrieve(st, my_loc, rng));
    } catch (const Error& e) {
        if (e.code() == Err::StaleCounter) return "stale";
        throw;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"private location sharing client"};
    app.require_subcommand(1);

    Cmd cmd;
    cmd.data_dir = env_or("WAYPOST_DATA_DIR", "waypost-data");
    cmd.server = env_or("WAYPOST_SERVER", "");
    cmd.user = env_or("WAYPOST_USER", "");
    app.add_option("--data-dir", cmd.data_dir, "client store directory");
    app.add_option("--server", cmd.server, "relay host:port");
    app.add_option("--user", cmd.user, "identity to act as");

    auto* reg = app.add_subcommand("register", "create an identity on the relay");
    std::string reg_user;
    reg->add_option("user", reg_user)->required();

    auto* addc = app.add_subcommand("add-contact", "add a mutual contact");
    std::string addc_peer, addc_key, addc_dh_priv, addc_dh_pub;
    addc->add_option("peer", addc_peer)->required();
    addc->add_option("--key", addc_key, "pre-shared 16-byte key, 32 hex chars");
    addc->add_option("--dh-priv", addc_dh_priv, "own X25519 private key, 64 hex chars");
    addc->add_option("--dh-peer-pub", addc_dh_pub, "peer X25519 public key, 64 hex chars");

    auto* setp = app.add_subcommand("set-pref", "set sharing granularity for a contact");
    std::string setp_peer, setp_pref, setp_fake;
    setp->add_option("peer", setp_peer)->required();
    setp->add_option("pref", setp_pref, "available|circle|approx|nearby|invisible|fake")
        ->required();
    setp->add_option("--fake-loc", setp_fake, "lat,lon shown when pref is fake");

    auto* chk = app.add_subcommand("checkin", "publish current location to contacts");
    std::string chk_loc, chk_to;
    bool chk_all = false;
    chk->add_option("--loc", chk_loc, "lat,lon")->required();
    chk->add_option("--to", chk_to, "single contact");
    chk->add_flag("--all", chk_all, "all contacts");

    auto* ret = app.add_subcommand("retrieve", "retrieve one contact's shared state");
    std::string ret_peer;
    ret->add_option("peer", ret_peer)->required();

    app.add_subcommand("retrieve-all", "retrieve every contact");

    auto* cf = app.add_subcommand("cache-fill", "pre-store invisible rows for offline replay");
    std::string cf_peer;
    bool cf_all = false;
    int cf_n = 0;
    cf->add_option("peer", cf_peer, "single contact");
    cf->add_flag("--all", cf_all, "all contacts");
    cf->add_option("--n", cf_n, "rows per contact")->required();

    app.add_subcommand("status", "print identity and cached contact views");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (reg->parsed()) {
            ClientStore store = ClientStore::create(cmd.data_dir, reg_user);
            StoreLock lock(store.dir);
            store.pass = random_hex16();
            store.token = Client::register_user(cmd.require_server(), reg_user, store.pass);
            store.save();
            return 0;
        }

        if (addc->parsed()) {
            ClientStore store = cmd.open_store();
            StoreLock lock(store.dir);
            Client c(cmd.require_server(), std::move(store));
            c.add_contact(addc_peer);

            SharedKey key;
            if (!addc_key.empty()) {
                key = SharedKey::from_hex(addc_key);
            } else if (!addc_dh_priv.empty() && !addc_dh_pub.empty()) {
                key = key_agree(hex32_bytes(addc_dh_priv), hex32_bytes(addc_dh_pub));
            } else {
                key = SharedKey::from_hex(random_hex16());
                // No key material given: mint one and print it so the peer
                // can be provisioned out of band.
                printf("key %s\n", key.to_hex().c_str());
            }
            c.store().add_contact(addc_peer, key);
            c.store().save();
            return 0;
        }

        if (setp->parsed()) {
            ClientStore store = cmd.open_store();
            StoreLock lock(store.dir);
            DirectionState* st = store.find(setp_peer);
            if (!st) fail(Err::ConfigError, "unknown contact: " + setp_peer);
            auto pref = granularity_from_name(setp_pref);
            if (!pref) fail(Err::ConfigError, "unknown granularity: " + setp_pref);
            if (!setp_fake.empty()) st->my_fake = parse_point(setp_fake);
            if (*pref == Granularity::Fake && !st->my_fake)
                fail(Err::ConfigError, "fake preference needs --fake-loc");
            st->my_pref = *pref;
            store.save();
            return 0;
        }

        if (chk->parsed()) {
            if (chk_all == !chk_to.empty())
                fail(Err::ConfigError, "pass exactly one of --to <peer> or --all");
            ClientStore store = cmd.open_store();
            StoreLock lock(store.dir);
            const GeoPoint loc = parse_point(chk_loc);
            Client c(cmd.require_server(), std::move(store));
            auto rng = c.store().make_rng();
            if (chk_all) {
                for (DirectionState& st : c.store().contacts) c.checkin(st, loc, rng);
            } else {
                DirectionState* st = c.store().find(chk_to);
                if (!st) fail(Err::ConfigError, "unknown contact: " + chk_to);
                c.checkin(*st, loc, rng);
            }
            c.store().last_loc = loc;
            c.store().save();
            return 0;
        }

        if (ret->parsed()) {
            ClientStore store = cmd.open_store();
            StoreLock lock(store.dir);
            Client c(cmd.require_server(), std::move(store));
            DirectionState* st = c.store().find(ret_peer);
            if (!st) fail(Err::ConfigError, "unknown contact: " + ret_peer);
            auto rng = c.store().make_rng();
            const std::string line = retrieve_one(c, *st, observer_location(c.store()), rng);
            c.store().save();
            printf("%s\n", line.c_str());
            return 0;
        }

        if (app.get_subcommand("retrieve-all")->parsed()) {
            ClientStore store = cmd.open_store();
            StoreLock lock(store.dir);
            Client c(cmd.require_server(), std::move(store));
            auto rng = c.store().make_rng();
            const GeoPoint my_loc = observer_location(c.store());
            std::string out;
            for (DirectionState& st : c.store().contacts)
                out += st.peer_id + " " + retrieve_one(c, st, my_loc, rng) + "\n";
            c.store().save();
            fputs(out.c_str(), stdout);
            return 0;
        }

        if (cf->parsed()) {
            if (cf_all == !cf_peer.empty())
                fail(Err::ConfigError, "pass exactly one of <peer> or --all");
            if (cf_n <= 0) fail(Err::ConfigError, "--n must be positive");
            ClientStore store = cmd.open_store();
            StoreLock lock(store.dir);
            Client c(cmd.require_server(), std::move(store));
            auto rng = c.store().make_rng();
            if (cf_all) {
                for (DirectionState& st : c.store().contacts) c.cache_fill(st, cf_n, rng);
            } else {
                DirectionState* st = c.store().find(cf_peer);
                if (!st) fail(Err::ConfigError, "unknown contact: " + cf_peer);
                c.cache_fill(*st, cf_n, rng);
            }
            c.store().save();
            return 0;
        }

        if (app.get_subcommand("status")->parsed()) {
            ClientStore store = cmd.open_store();
            printf("user %s\n", store.user.c_str());
            printf("server %s\n", cmd.server.empty() ? "(unset)" : cmd.server.c_str());
            printf("contacts %zu\n", store.contacts.size());
            for (const DirectionState& st : store.contacts) {
                std::string view = "unknown";
                if (st.cached_peer_location) {
                    view = "location " + format_point_deg(*st.cached_peer_location);
                } else if (st.cached_peer_nearby) {
                    view = *st.cached_peer_nearby ? "nearby" : "not-nearby";
                } else if (st.cached_peer_pref == Granularity::Invisible) {
                    view = "invisible";
                }
                printf("%s pref=%s sent=%llu seen=%llu view=%s\n", st.peer_id.c_str(),
                       granularity_name(st.my_pref),
                       static_cast<unsigned long long>(st.last_sent_ctr),
                       static_cast<unsigned long long>(st.last_consumed_ctr), view.c_str());
            }
            return 0;
        }

        fail(Err::ConfigError, "no subcommand");
    } catch (const Error& e) {
        const bool usage = e.code() == Err::ConfigError || e.code() == Err::InvalidCoordinate;
        if (usage) {
            fprintf(stderr, "%s\n", e.what());
            return 2;
        }
        const char* code = err_code(e.code());
        if (std::string(code) == e.what()) {
            fprintf(stderr, "%s\n", code);
        } else {
            fprintf(stderr, "%s: %s\n", code, e.what());
        }
        return 1;
    }
}
