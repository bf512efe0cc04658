#include <doctest.h>

#include <chrono>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "waypost/relay.hpp"

using namespace waypost;
using namespace std::chrono_literals;

namespace {

StoredRecord rec(uint64_t ctr) {
    StoredRecord r;
    r.ctr = ctr;
    r.eb0 = int(ctr & 1);
    r.eb1 = 1;
    r.cell = int(ctr % 9) + 1;
    r.vec = Vector2{FieldElement(ctr * 3 + 1), FieldElement(ctr * 7 + 2)};
    return r;
}

// A relay with a live alice<->bob edge, short offline threshold for the
// promotion tests.
struct Fixture {
    Relay relay{30ms};
    std::string tok_a, tok_b;

    Fixture() {
        tok_a = relay.register_user("alice", "pa");
        tok_b = relay.register_user("bob", "pb");
        relay.add_contact("alice", "bob");
        relay.add_contact("bob", "alice");
    }
};

Err code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return Err::IoError; // sentinel for "did not throw"
}

} // namespace

TEST_CASE("registration hands out unique tokens and rejects reuse") {
    Relay relay;
    std::string ta = relay.register_user("alice", "pw");
    std::string tb = relay.register_user("bob", "pw");
    CHECK(ta != tb);
    CHECK(relay.user_for_token(ta) == "alice");
    CHECK(relay.user_for_token(tb) == "bob");
    CHECK(relay.user_count() == 2);

    CHECK(code_of([&] { relay.register_user("alice", "other"); }) == Err::DuplicateUser);
    CHECK(code_of([&] { (void)relay.user_for_token("bogus"); }) == Err::AuthFailure);
    CHECK(code_of([&] { relay.register_user("", "pw"); }) == Err::BadRequest);
}

TEST_CASE("edges require mutual consent") {
    Relay relay;
    relay.register_user("alice", "pa");
    relay.register_user("bob", "pb");

    CHECK(code_of([&] { relay.add_contact("alice", "alice"); }) == Err::InvalidPeer);
    CHECK(code_of([&] { relay.add_contact("alice", "carol"); }) == Err::UnknownUser);
    CHECK(code_of([&] { relay.add_contact("carol", "alice"); }) == Err::UnknownUser);

    relay.add_contact("alice", "bob");
    CHECK(!relay.edge_live("alice", "bob"));
    // One-sided consent does not open the pipe in either direction.
    CHECK(code_of([&] { relay.store_checkin("alice", "bob", rec(1)); }) == Err::NoSuchEdge);
    CHECK(code_of([&] { relay.store_checkin("bob", "alice", rec(1)); }) == Err::NoSuchEdge);

    relay.add_contact("bob", "alice");
    CHECK(relay.edge_live("alice", "bob"));
    CHECK(relay.edge_live("bob", "alice"));
    relay.store_checkin("alice", "bob", rec(1));

    // Adding twice is idempotent.
    relay.add_contact("alice", "bob");
    CHECK(relay.edge_live("alice", "bob"));
}

TEST_CASE("store, fetch, evaluate: the basic round") {
    Fixture fx;
    StoredRecord r1 = rec(1);
    fx.relay.store_checkin("alice", "bob", r1);

    auto hdr = fx.relay.fetch_header("bob", "alice");
    REQUIRE(hdr.has_value());
    CHECK(hdr->ctr == 1);
    CHECK(hdr->eb0 == r1.eb0);
    CHECK(hdr->cell == r1.cell);

    Vector2 v1{FieldElement(2), FieldElement(3)};
    FieldElement m = fx.relay.eval_inner_product("bob", "alice", 1, v1);
    CHECK(m == inner_product(v1, r1.vec));

    // Consumed: the record is gone in both observable ways.
    CHECK(!fx.relay.fetch_header("bob", "alice").has_value());
    CHECK(code_of([&] { fx.relay.eval_inner_product("bob", "alice", 1, v1); }) ==
          Err::AlreadyConsumed);
    // A counter that never existed and is above the consumed mark.
    CHECK(code_of([&] { fx.relay.eval_inner_product("bob", "alice", 99, v1); }) ==
          Err::UnknownCounter);
    // Directions are independent: nothing stored bob->alice... alice side.
    CHECK(!fx.relay.fetch_header("alice", "bob").has_value());
}

TEST_CASE("counters must strictly increase per direction") {
    Fixture fx;
    fx.relay.store_checkin("alice", "bob", rec(5));
    CHECK(code_of([&] { fx.relay.store_checkin("alice", "bob", rec(5)); }) ==
          Err::NonMonotonicCounter);
    CHECK(code_of([&] { fx.relay.store_checkin("alice", "bob", rec(4)); }) ==
          Err::NonMonotonicCounter);
    fx.relay.store_checkin("alice", "bob", rec(6));
    // The reverse direction has its own counter line.
    fx.relay.store_checkin("bob", "alice", rec(1));
}

TEST_CASE("fetch serves the newest record and consumption discards older ones") {
    Fixture fx;
    fx.relay.store_checkin("alice", "bob", rec(1));
    fx.relay.store_checkin("alice", "bob", rec(2));
    fx.relay.store_checkin("alice", "bob", rec(3));

    auto hdr = fx.relay.fetch_header("bob", "alice");
    REQUIRE(hdr.has_value());
    CHECK(hdr->ctr == 3);

    Vector2 v1{FieldElement(1), FieldElement(1)};
    fx.relay.eval_inner_product("bob", "alice", 3, v1);
    CHECK(!fx.relay.fetch_header("bob", "alice").has_value());
    CHECK(code_of([&] { fx.relay.eval_inner_product("bob", "alice", 2, v1); }) ==
          Err::AlreadyConsumed);
}

TEST_CASE("cached rows are replayed in order while the sender is offline") {
    Fixture fx;
    fx.relay.put_cache("bob", "alice", {rec(1), rec(2), rec(3)});
    CHECK(fx.relay.cache_depth("bob", "alice") == 3);

    // bob registered moments ago, so he is still online: no promotion.
    CHECK(!fx.relay.fetch_header("alice", "bob").has_value());
    CHECK(fx.relay.cache_depth("bob", "alice") == 3);

    std::this_thread::sleep_for(60ms); // beyond the 30 ms offline threshold

    Vector2 v1{FieldElement(4), FieldElement(9)};
    for (uint64_t want = 1; want <= 3; ++want) {
        auto hdr = fx.relay.fetch_header("alice", "bob");
        REQUIRE(hdr.has_value());
        CHECK(hdr->ctr == want);
        FieldElement m = fx.relay.eval_inner_product("alice", "bob", want, v1);
        CHECK(m == inner_product(v1, rec(want).vec));
        CHECK(fx.relay.cache_depth("bob", "alice") == 3 - want);
    }
    CHECK(!fx.relay.fetch_header("alice", "bob").has_value());
}

TEST_CASE("a presence refresh keeps the cache sealed") {
    Fixture fx;
    fx.relay.put_cache("bob", "alice", {rec(1)});
    std::this_thread::sleep_for(60ms);
    fx.relay.touch("bob");
    CHECK(!fx.relay.fetch_header("alice", "bob").has_value());
    CHECK(fx.relay.cache_depth("bob", "alice") == 1);
}

TEST_CASE("a live checkin supersedes stale cached rows") {
    Fixture fx;
    fx.relay.put_cache("bob", "alice", {rec(1), rec(2), rec(3)});
    fx.relay.store_checkin("bob", "alice", rec(4));
    CHECK(fx.relay.cache_depth("bob", "alice") == 0);
    auto hdr = fx.relay.fetch_header("alice", "bob");
    REQUIRE(hdr.has_value());
    CHECK(hdr->ctr == 4);
}

TEST_CASE("cache appends must also keep counters increasing") {
    Fixture fx;
    fx.relay.put_cache("alice", "bob", {rec(1), rec(2)});
    CHECK(code_of([&] { fx.relay.put_cache("alice", "bob", {rec(2)}); }) ==
          Err::NonMonotonicCounter);
    fx.relay.put_cache("alice", "bob", {rec(3)});
    CHECK(fx.relay.cache_depth("alice", "bob") == 3);
    // And a checkin after caching continues above the cached range.
    CHECK(code_of([&] { fx.relay.store_checkin("alice", "bob", rec(3)); }) ==
          Err::NonMonotonicCounter);
    fx.relay.store_checkin("alice", "bob", rec(4));
}

TEST_CASE("the event stream reconstructs the relay after a restart") {
    std::vector<nlohmann::json> events;
    std::string tok_a, tok_b;
    uint64_t consumed_ctr = 0;

    {
        Relay relay(30ms);
        relay.set_event_sink([&](const nlohmann::json& ev) { events.push_back(ev); });
        tok_a = relay.register_user("alice", "pa");
        tok_b = relay.register_user("bob", "pb");
        relay.add_contact("alice", "bob");
        relay.add_contact("bob", "alice");
        relay.store_checkin("alice", "bob", rec(1));
        relay.store_checkin("alice", "bob", rec(2));
        relay.put_cache("bob", "alice", {rec(1), rec(2)});
        Vector2 v1{FieldElement(5), FieldElement(6)};
        relay.eval_inner_product("bob", "alice", 2, v1);
        consumed_ctr = 2;
    }

    Relay restored(30ms);
    for (const nlohmann::json& ev : events) restored.apply_event(ev);

    CHECK(restored.user_count() == 2);
    CHECK(restored.user_for_token(tok_a) == "alice");
    CHECK(restored.user_for_token(tok_b) == "bob");
    CHECK(restored.edge_live("alice", "bob"));
    CHECK(restored.cache_depth("bob", "alice") == 2);

    // Counter high-water marks survive: the consumed record stays consumed
    // and stores must continue above the replayed history.
    Vector2 v1{FieldElement(5), FieldElement(6)};
    CHECK(code_of([&] { restored.eval_inner_product("bob", "alice", consumed_ctr, v1); }) ==
          Err::AlreadyConsumed);
    CHECK(code_of([&] { restored.store_checkin("alice", "bob", rec(2)); }) ==
          Err::NonMonotonicCounter);
    restored.store_checkin("alice", "bob", rec(3));
    auto hdr = restored.fetch_header("bob", "alice");
    REQUIRE(hdr.has_value());
    CHECK(hdr->ctr == 3);
}

TEST_CASE("mid-stream replays converge too: promotion events are re-derived") {
    std::vector<nlohmann::json> events;
    Relay relay(10ms);
    relay.set_event_sink([&](const nlohmann::json& ev) { events.push_back(ev); });
    relay.register_user("alice", "pa");
    relay.register_user("bob", "pb");
    relay.add_contact("alice", "bob");
    relay.add_contact("bob", "alice");
    relay.put_cache("bob", "alice", {rec(1), rec(2)});
    std::this_thread::sleep_for(30ms);

    auto hdr = relay.fetch_header("alice", "bob");
    REQUIRE(hdr.has_value());
    relay.eval_inner_product("alice", "bob", hdr->ctr, Vector2{FieldElement(1), FieldElement(0)});

    Relay restored(10ms);
    for (const nlohmann::json& ev : events) restored.apply_event(ev);
    // Row 1 was promoted and consumed before the restart; only row 2 remains.
    CHECK(restored.cache_depth("bob", "alice") == 1);
    std::this_thread::sleep_for(30ms);
    auto hdr2 = restored.fetch_header("alice", "bob");
    REQUIRE(hdr2.has_value());
    CHECK(hdr2->ctr == 2);
}
