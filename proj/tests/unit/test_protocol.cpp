#include <doctest.h>

#include <random>
#include <set>
#include <string>

#include "waypost/analysis.hpp"
#include "waypost/client.hpp"
#include "waypost/protocol.hpp"

using namespace waypost;

namespace {

SharedKey edge_key() {
    return SharedKey::from_hex("0f1e2d3c4b5a69788796a5b4c3d2e1f0");
}

std::pair<DirectionState, DirectionState> make_edge() {
    DirectionState a, b;
    a.self_id = "alice";
    a.peer_id = "bob";
    a.key = edge_key();
    b.self_id = "bob";
    b.peer_id = "alice";
    b.key = edge_key();
    return {a, b};
}

// One full round with the test acting as the relay: sender checks in,
// receiver fetches the header, sends v1, gets back the inner product.
RetrievalResult round_trip(DirectionState& sender, DirectionState& receiver,
                           const GeoPoint& sender_loc, const GeoPoint& receiver_loc,
                           std::mt19937_64& rng) {
    CheckinRecord rec = unified_checkin(sender, sender_loc, rng);
    RetrievalHeader hdr{rec.ctr, rec.eb_mine, rec.eb_peer, rec.cell};
    RetrieveContext ctx = retrieve_phase1(receiver, receiver_loc, hdr, rng);
    FieldElement m = inner_product(ctx.v1, rec.vec);
    return retrieve_phase2(receiver, m, ctx);
}

const GeoPoint kHome{3'740'000, -12'210'000};   // 37.4, -122.1
const GeoPoint kNearby{3'740'500, -12'210'300}; // same cell
const GeoPoint kFarAway{-2'750'000, 13'340'000};

} // namespace

TEST_CASE("protocol bit and dispatch follow the preference chart") {
    CHECK(protocol_bit(Granularity::Nearby) == 1);
    CHECK(protocol_bit(Granularity::Available) == 0);
    CHECK(protocol_bit(Granularity::Circle) == 0);
    CHECK(protocol_bit(Granularity::Approx) == 0);
    CHECK(protocol_bit(Granularity::Invisible) == 0);
    CHECK(protocol_bit(Granularity::Fake) == 0);

    CHECK(dispatch(Granularity::Nearby, Granularity::Nearby) == ProtocolKind::VPET);
    CHECK(dispatch(Granularity::Nearby, Granularity::Invisible) == ProtocolKind::PSP);
    CHECK(dispatch(Granularity::Fake, Granularity::Available) == ProtocolKind::PSP);
    CHECK(dispatch(Granularity::Available, Granularity::Nearby) == ProtocolKind::PSP);
}

TEST_CASE("granularity names round-trip") {
    for (int i = 0; i <= 5; ++i) {
        auto g = static_cast<Granularity>(i);
        CHECK(granularity_from_name(granularity_name(g)) == g);
    }
    CHECK(!granularity_from_name("loud"));
}

TEST_CASE("masked decode on fixed small values") {
    // k1=6, k2=7, payload x=10 gives masked y = x^k1 = 12; with v1=(2,3) the
    // relay would return m = 2*12 + 3*7 = 45 and the decode peels it back.
    DirectionState st;
    st.self_id = "a";
    st.peer_id = "b";
    RetrieveContext ctx;
    ctx.ctr = 1;
    ctx.vpet = false;
    ctx.v1 = Vector2{FieldElement(2), FieldElement(3)};
    ctx.k1 = 6;
    ctx.k2 = FieldElement(7);
    ctx.my_location = kHome;

    RetrievalResult res = retrieve_phase2(st, FieldElement(45), ctx);
    CHECK(res.kind == RetrievalResult::Kind::Location);
    CHECK(res.point == GeoPoint{0, 10}); // unpack(10)
    CHECK(st.last_consumed_ctr == 1);
    CHECK(st.cached_peer_location == GeoPoint{0, 10});
}

TEST_CASE("masked decode flags corruption instead of returning garbage") {
    DirectionState st;
    RetrieveContext ctx;
    ctx.ctr = 1;
    ctx.v1 = Vector2{FieldElement(1), FieldElement(0)};
    ctx.k1 = 0;
    ctx.k2 = FieldElement(0);
    ctx.my_location = kHome;

    // Masked value that does not fit in 64 bits.
    CHECK_THROWS_AS(retrieve_phase2(st, FieldElement(u128(1) << 64), ctx), Error);
    // Decodes to a non-sentinel point outside the legal range.
    RetrieveContext ctx2 = ctx;
    FieldElement bogus = FieldElement::from_u64(pack(GeoPoint{0, 18'500'000}));
    CHECK_THROWS_AS(retrieve_phase2(st, bogus, ctx2), Error);
    try {
        retrieve_phase2(st, bogus, ctx2);
    } catch (const Error& e) {
        CHECK(e.code() == Err::DecodeError);
    }
}

TEST_CASE("equality verdict on an identity rotation, by hand") {
    // t=0 keeps vectors fixed; with s=(0,0), r=1 the relay sees (g_b, 1) and
    // the query is (1, -g_a); the product is g_b - g_a.
    DirectionState st;
    RetrieveContext ctx;
    ctx.ctr = 1;
    ctx.vpet = true;
    ctx.v1 = Vector2{FieldElement(1), field_neg(FieldElement(5))};
    ctx.s = Vector2{FieldElement(0), FieldElement(0)};

    FieldElement m_diff = inner_product(ctx.v1, Vector2{FieldElement(6), FieldElement(1)});
    CHECK(m_diff == FieldElement(1));
    CHECK(retrieve_phase2(st, m_diff, ctx).kind == RetrievalResult::Kind::NearbyNo);

    RetrieveContext ctx2 = ctx;
    ctx2.ctr = 2;
    FieldElement m_same = inner_product(ctx2.v1, Vector2{FieldElement(5), FieldElement(1)});
    CHECK(m_same.is_zero());
    CHECK(retrieve_phase2(st, m_same, ctx2).kind == RetrievalResult::Kind::NearbyYes);
    CHECK(st.cached_peer_nearby == true);
}

TEST_CASE("each masking granularity delivers its mandated disclosure") {
    std::mt19937_64 rng(0x90a7);

    auto run = [&](Granularity g, std::optional<GeoPoint> fake) {
        auto [a, b] = make_edge();
        a.my_pref = g;
        a.my_fake = fake;
        return round_trip(a, b, GeoPoint{3'741'234, -12'216'789}, kHome, rng);
    };

    RetrievalResult avail = run(Granularity::Available, {});
    CHECK(avail.kind == RetrievalResult::Kind::Location);
    CHECK(avail.point == GeoPoint{3'741'234, -12'216'789});

    RetrievalResult circle = run(Granularity::Circle, {});
    CHECK(circle.kind == RetrievalResult::Kind::Location);
    CHECK(circle.point == GeoPoint{3'741'234, -12'216'789});

    RetrievalResult approx = run(Granularity::Approx, {});
    CHECK(approx.kind == RetrievalResult::Kind::Location);
    CHECK(approx.point == GeoPoint{3'741'000, -12'216'000});

    RetrievalResult fake = run(Granularity::Fake, GeoPoint{100, 200});
    CHECK(fake.kind == RetrievalResult::Kind::Location);
    CHECK(fake.point == GeoPoint{100, 200});

    RetrievalResult invis = run(Granularity::Invisible, {});
    CHECK(invis.kind == RetrievalResult::Kind::Invisible);

    CHECK_THROWS_AS(run(Granularity::Fake, std::nullopt), Error);
}

TEST_CASE("equality rounds agree with grid geometry end to end") {
    std::mt19937_64 rng(0x4e42);

    auto vpet_round = [&](const GeoPoint& la, const GeoPoint& lb) {
        auto [a, b] = make_edge();
        a.my_pref = Granularity::Nearby;
        b.my_pref = Granularity::Nearby;
        a.peer_bit_belief = 1; // post-bootstrap state
        b.peer_bit_belief = 1;
        return round_trip(a, b, la, lb, rng);
    };

    // Same cell.
    CHECK(vpet_round(kHome, kNearby).kind == RetrievalResult::Kind::NearbyYes);
    // Adjacent grid elements but within 1.5 cells: still a match.
    CHECK(vpet_round(GeoPoint{10'000, -17'890'000}, GeoPoint{10'000, -17'910'000}).kind ==
          RetrievalResult::Kind::NearbyYes);
    // Other side of the world.
    CHECK(vpet_round(kHome, kFarAway).kind == RetrievalResult::Kind::NearbyNo);
}

TEST_CASE("two nearby contacts converge from a cold start") {
    std::mt19937_64 rng(0xb007);
    auto [a, b] = make_edge();
    a.my_pref = Granularity::Nearby;
    b.my_pref = Granularity::Nearby;

    // A's first record carries a guessed belief of 0 about B, so B aborts
    // but learns A's bit.
    RetrievalResult r1 = round_trip(a, b, kHome, kNearby, rng);
    CHECK(r1.kind == RetrievalResult::Kind::Stale);
    CHECK(b.peer_bit_belief == 1);

    // B's next record now asserts the right belief; A completes and learns.
    RetrievalResult r2 = round_trip(b, a, kNearby, kHome, rng);
    CHECK(r2.kind == RetrievalResult::Kind::NearbyYes);
    CHECK(a.peer_bit_belief == 1);

    // From here the edge runs the equality test both ways.
    RetrievalResult r3 = round_trip(a, b, kHome, kNearby, rng);
    CHECK(r3.kind == RetrievalResult::Kind::NearbyYes);
}

TEST_CASE("one-sided nearby answers from cached peer knowledge") {
    std::mt19937_64 rng(0x0a51);
    auto [a, b] = make_edge();
    a.my_pref = Granularity::Nearby;
    b.my_pref = Granularity::Available;

    // A learns B's exact location first.
    RetrievalResult ra = round_trip(b, a, kNearby, kHome, rng);
    CHECK(ra.kind == RetrievalResult::Kind::Location);
    CHECK(a.cached_peer_location == kNearby);
    CHECK(a.peer_bit_belief == 0);

    // A's checkin then answers B's implicit "am I near A?" from that cache.
    RetrievalResult rb = round_trip(a, b, kHome, kNearby, rng);
    CHECK(rb.kind == RetrievalResult::Kind::NearbyYes);
    CHECK(b.cached_peer_nearby == true);

    // Without any cached knowledge the sender reports not-nearby.
    auto [c, d] = make_edge();
    c.my_pref = Granularity::Nearby;
    d.my_pref = Granularity::Available;
    CHECK(round_trip(c, d, kHome, kNearby, rng).kind == RetrievalResult::Kind::NearbyNo);

    // With the peer far away, the cached verdict flips.
    auto [e, f] = make_edge();
    e.my_pref = Granularity::Nearby;
    f.my_pref = Granularity::Available;
    round_trip(f, e, kFarAway, kHome, rng);
    CHECK(round_trip(e, f, kHome, kFarAway, rng).kind == RetrievalResult::Kind::NearbyNo);
}

TEST_CASE("stale belief aborts the retrieval but still advances state") {
    std::mt19937_64 rng(0x57a1e);
    auto [a, b] = make_edge();
    a.my_pref = Granularity::Nearby;
    a.peer_bit_belief = 1; // thinks B still runs the equality test
    b.my_pref = Granularity::Available;

    CheckinRecord rec = unified_checkin(a, kHome, rng);
    RetrievalHeader hdr{rec.ctr, rec.eb_mine, rec.eb_peer, rec.cell};
    RetrieveContext ctx = retrieve_phase1(b, kNearby, hdr, rng);
    CHECK(ctx.aborted);
    // The cover query is still a usable vector; the result is discarded.
    FieldElement m = inner_product(ctx.v1, rec.vec);
    RetrievalResult res = retrieve_phase2(b, m, ctx);
    CHECK(res.kind == RetrievalResult::Kind::Stale);
    CHECK(b.peer_bit_belief == 1);
    CHECK(b.last_consumed_ctr == rec.ctr);
    // Cached knowledge is untouched by an aborted retrieval.
    CHECK(!b.cached_peer_pref);
    CHECK(!b.cached_peer_location);
}

TEST_CASE("replayed headers are rejected before any decoding") {
    std::mt19937_64 rng(0xdead);
    auto [a, b] = make_edge();
    a.my_pref = Granularity::Available;

    CheckinRecord rec = unified_checkin(a, kHome, rng);
    RetrievalHeader hdr{rec.ctr, rec.eb_mine, rec.eb_peer, rec.cell};
    RetrieveContext ctx = retrieve_phase1(b, kNearby, hdr, rng);
    retrieve_phase2(b, inner_product(ctx.v1, rec.vec), ctx);

    CHECK_THROWS_AS(retrieve_phase1(b, kNearby, hdr, rng), Error);
    try {
        retrieve_phase1(b, kNearby, hdr, rng);
    } catch (const Error& e) {
        CHECK(e.code() == Err::StaleCounter);
    }
}

TEST_CASE("checkin records look identical across all granularities") {
    std::mt19937_64 rng(0x5a3e);
    std::set<std::string> shapes;
    std::set<uint64_t> ctrs;

    for (int i = 0; i <= 5; ++i) {
        auto [a, b] = make_edge();
        a.my_pref = static_cast<Granularity>(i);
        a.my_fake = GeoPoint{1, 2};
        CheckinRecord rec = unified_checkin(a, kHome, rng);
        CHECK(rec.eb_mine >= 0);
        CHECK(rec.eb_mine <= 1);
        CHECK(rec.eb_peer >= 0);
        CHECK(rec.eb_peer <= 1);
        CHECK(rec.cell >= 1);
        CHECK(rec.cell <= 9);
        shapes.insert(shape_of(record_wire_body(rec)));
        ctrs.insert(rec.ctr);
    }
    // One shape for six granularities; that is the indistinguishability
    // surface the relay sees.
    CHECK(shapes.size() == 1);

    // Cached rows share it too.
    auto [a, b] = make_edge();
    for (const CheckinRecord& rec : batch_cache(a, 3, rng))
        shapes.insert(shape_of(record_wire_body(rec)));
    CHECK(shapes.size() == 1);
}

TEST_CASE("nearby checkins advertise the real cell, others a random one") {
    std::mt19937_64 rng(0xce11);
    auto [a, b] = make_edge();
    a.my_pref = Granularity::Nearby;
    CheckinRecord rec = unified_checkin(a, kHome, rng);
    CHECK(rec.cell == cell_label(cell_of(kHome)));
}

TEST_CASE("batch cache rows are consecutive and decode to invisible") {
    std::mt19937_64 rng(0xcafe);
    auto [a, b] = make_edge();
    a.my_pref = Granularity::Available; // preference does not leak into cache rows
    a.last_sent_ctr = 41;

    std::vector<CheckinRecord> rows = batch_cache(a, 10, rng);
    REQUIRE(rows.size() == 10);
    for (int i = 0; i < 10; ++i)
        CHECK(rows[size_t(i)].ctr == uint64_t(42 + i));
    CHECK(a.last_sent_ctr == 51);

    for (const CheckinRecord& rec : rows) {
        // The advertised bit always decodes to "masking protocol".
        Keystream ks = derive_keystream(b.key, b.recv_direction(), rec.ctr);
        CHECK((rec.eb_mine ^ ks.padbit0) == 0);

        RetrievalHeader hdr{rec.ctr, rec.eb_mine, rec.eb_peer, rec.cell};
        RetrieveContext ctx = retrieve_phase1(b, kHome, hdr, rng);
        RetrievalResult res = retrieve_phase2(b, inner_product(ctx.v1, rec.vec), ctx);
        CHECK(res.kind == RetrievalResult::Kind::Invisible);
    }
}

TEST_CASE("each equality decision consumes exactly one field comparison") {
    std::mt19937_64 rng(0xc027);

    auto [a, b] = make_edge();
    a.my_pref = Granularity::Nearby;
    b.my_pref = Granularity::Nearby;
    a.peer_bit_belief = 1;
    b.peer_bit_belief = 1;

    uint64_t before = equality_comparison_count();
    round_trip(a, b, kHome, kNearby, rng);
    CHECK(equality_comparison_count() - before == 1);

    before = equality_comparison_count();
    for (int i = 0; i < 10; ++i) round_trip(a, b, kHome, kFarAway, rng);
    CHECK(equality_comparison_count() - before == 10);

    // Masked-payload rounds never touch the comparison.
    auto [c, d] = make_edge();
    c.my_pref = Granularity::Available;
    before = equality_comparison_count();
    round_trip(c, d, kHome, kNearby, rng);
    CHECK(equality_comparison_count() - before == 0);
}

TEST_CASE("counters only move forward") {
    std::mt19937_64 rng(0x0112);
    auto [a, b] = make_edge();
    a.my_pref = Granularity::Approx;

    uint64_t prev = a.last_sent_ctr;
    for (int i = 0; i < 5; ++i) {
        CheckinRecord rec = unified_checkin(a, kHome, rng);
        CHECK(rec.ctr == prev + 1);
        prev = rec.ctr;
    }
    batch_cache(a, 4, rng);
    CHECK(a.last_sent_ctr == prev + 4);
    CheckinRecord rec = unified_checkin(a, kHome, rng);
    CHECK(rec.ctr == prev + 5);
}
