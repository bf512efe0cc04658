#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sys/stat.h>

#include "waypost/client.hpp"
#include "waypost/subproc.hpp"

using namespace waypost;

namespace {

size_t file_size(const std::string& path) {
    struct stat st{};
    REQUIRE(stat(path.c_str(), &st) == 0);
    return size_t(st.st_size);
}

SharedKey key_n(uint8_t n) {
    SharedKey k;
    k.bytes.fill(n);
    return k;
}

} // namespace

TEST_CASE("store state survives a save/load round trip bit for bit") {
    std::string data = make_temp_dir("waypost-store");
    ClientStore s = ClientStore::create(data, "alice");
    s.token = "tok-123";
    s.pass = "pw";
    s.rng_ctr = 7;
    s.last_loc = GeoPoint{3'740'000, -12'210'000};

    DirectionState& bob = s.add_contact("bob", key_n(0xB0));
    bob.my_pref = Granularity::Nearby;
    bob.last_sent_ctr = 12;
    bob.last_consumed_ctr = 9;
    bob.peer_bit_belief = 0;
    bob.cached_peer_pref = Granularity::Approx;
    bob.cached_peer_location = GeoPoint{1, -2};
    bob.cached_peer_nearby = false;

    DirectionState& carol = s.add_contact("carol", key_n(0xCA));
    carol.my_pref = Granularity::Fake;
    carol.my_fake = GeoPoint{5'000'000, 5'000'000};

    s.save();
    ClientStore r = ClientStore::load(data, "alice");

    CHECK(r.user == "alice");
    CHECK(r.token == "tok-123");
    CHECK(r.pass == "pw");
    CHECK(r.rng_ctr == 7);
    CHECK(r.last_loc == GeoPoint{3'740'000, -12'210'000});
    REQUIRE(r.contacts.size() == 2);

    DirectionState& rb = *r.find("bob");
    CHECK(rb.self_id == "alice");
    CHECK(rb.key == key_n(0xB0));
    CHECK(rb.my_pref == Granularity::Nearby);
    CHECK(rb.last_sent_ctr == 12);
    CHECK(rb.last_consumed_ctr == 9);
    CHECK(rb.peer_bit_belief == 0);
    CHECK(rb.cached_peer_pref == Granularity::Approx);
    CHECK(rb.cached_peer_location == GeoPoint{1, -2});
    CHECK(rb.cached_peer_nearby == false);
    CHECK(!rb.my_fake);

    DirectionState& rc = *r.find("carol");
    CHECK(rc.key == key_n(0xCA));
    CHECK(rc.my_pref == Granularity::Fake);
    CHECK(rc.my_fake == GeoPoint{5'000'000, 5'000'000});
    CHECK(!rc.peer_bit_belief);
    CHECK(!rc.cached_peer_location);

    CHECK(!r.find("dave"));
}

TEST_CASE("the secret core is exactly 17 bytes per contact, key then pref") {
    std::string data = make_temp_dir("waypost-store");

    ClientStore one = ClientStore::create(data, "one");
    one.add_contact("p0", key_n(1)).my_pref = Granularity::Available;
    one.save();
    CHECK(file_size(one.dir + "/secrets.bin") == 17);

    ClientStore ten = ClientStore::create(data, "ten");
    for (int i = 0; i < 10; ++i)
        ten.add_contact("p" + std::to_string(i), key_n(uint8_t(i))).my_pref =
            static_cast<Granularity>(i % 6);
    ten.save();
    CHECK(file_size(ten.dir + "/secrets.bin") == 170);

    // Row layout: 16 key bytes then the preference code.
    std::ifstream sec(ten.dir + "/secrets.bin", std::ios::binary);
    std::string blob((std::istreambuf_iterator<char>(sec)), std::istreambuf_iterator<char>());
    REQUIRE(blob.size() == 170);
    for (int i = 0; i < 10; ++i) {
        const auto* row = reinterpret_cast<const uint8_t*>(blob.data()) + i * 17;
        for (int b = 0; b < 16; ++b) CHECK(row[b] == uint8_t(i));
        CHECK(row[16] == uint8_t(i % 6));
    }

    // An empty contact list stores zero secret bytes.
    ClientStore none = ClientStore::create(data, "none");
    none.save();
    CHECK(file_size(none.dir + "/secrets.bin") == 0);
}

TEST_CASE("a truncated secret core is rejected on load") {
    std::string data = make_temp_dir("waypost-store");
    ClientStore s = ClientStore::create(data, "alice");
    s.add_contact("bob", key_n(7));
    s.save();

    std::ofstream(s.dir + "/secrets.bin", std::ios::binary) << "short";
    CHECK_THROWS_AS(ClientStore::load(data, "alice"), Error);
}

TEST_CASE("store bookkeeping never contains key material") {
    std::string data = make_temp_dir("waypost-store");
    ClientStore s = ClientStore::create(data, "alice");
    s.token = "tok";
    s.add_contact("bob", key_n(0xAB));
    s.save();

    std::ifstream state(s.dir + "/state.jsonl");
    std::string text((std::istreambuf_iterator<char>(state)), std::istreambuf_iterator<char>());
    CHECK(text.find("abab") == std::string::npos);
    CHECK(text.find("ABAB") == std::string::npos);
}

TEST_CASE("identities lists exactly the saved stores") {
    std::string data = make_temp_dir("waypost-store");
    ClientStore::create(data, "alice").save();
    ClientStore::create(data, "bob").save();
    ensure_dir(data + "/notastore"); // directory without state

    auto ids = ClientStore::identities(data);
    std::sort(ids.begin(), ids.end());
    CHECK(ids == std::vector<std::string>{"alice", "bob"});

    CHECK_THROWS_AS(ClientStore::load(data, "carol"), Error);
    CHECK_THROWS_AS(ClientStore::create(data, "alice"), Error); // already exists
    CHECK_THROWS_AS(ClientStore::create(data, "../evil"), Error);
}

TEST_CASE("the store lock admits one holder at a time") {
    std::string data = make_temp_dir("waypost-store");
    ClientStore s = ClientStore::create(data, "alice");
    s.save();

    StoreLock held(s.dir);
    CHECK_THROWS_AS(StoreLock(s.dir), Error);
    // Released on destruction: re-acquiring works.
}

TEST_CASE("store lock can be re-acquired after release") {
    std::string data = make_temp_dir("waypost-store");
    ClientStore s = ClientStore::create(data, "alice");
    s.save();
    { StoreLock first(s.dir); }
    StoreLock second(s.dir);
}

TEST_CASE("seeded randomness replays per user and invocation") {
    std::string data = make_temp_dir("waypost-store");
    setenv("WAYPOST_SEED", "fixture-seed", 1);

    ClientStore a = ClientStore::create(data, "alice");
    ClientStore b = ClientStore::create(data, "bob");

    auto ra1 = a.make_rng(); // rng_ctr 0
    ClientStore a2 = a;
    a2.rng_ctr = 0;
    auto ra2 = a2.make_rng();
    CHECK(ra1() == ra2());

    // Next invocation diverges, as does another user at the same counter.
    auto ra3 = a.make_rng(); // rng_ctr 1
    CHECK(ra1 != ra3);
    b.rng_ctr = 0;
    auto rb = b.make_rng();
    CHECK(ra1 != rb);

    unsetenv("WAYPOST_SEED");
    // Unseeded runs draw from system entropy; two should not collide.
    ClientStore c = ClientStore::create(data, "carol");
    auto rc1 = c.make_rng();
    auto rc2 = c.make_rng();
    CHECK(rc1 != rc2);
}
