#include "waypost/protocol.hpp"

#include <atomic>

#include "waypost/errors.hpp"

namespace waypost {

namespace {

constexpr uint64_t kGridElements = 64800;

std::atomic<uint64_t> g_equality_comparisons{0};

FieldElement masked_payload(const GeoPoint& pt, const Keystream& ks) {
    return FieldElement::from_u64(mask64(pack(pt), ks.k1));
}

Vector2 masked_psp_vec(const GeoPoint& pt, const Keystream& ks) {
    return Vector2{masked_payload(pt, ks), ks.k2};
}

uint64_t random_gid(std::mt19937_64& rng) {
    return std::uniform_int_distribution<uint64_t>(0, kGridElements - 1)(rng);
}

int random_bit(std::mt19937_64& rng) {
    return static_cast<int>(rng() & 1u);
}

int random_cell(std::mt19937_64& rng) {
    return static_cast<int>(std::uniform_int_distribution<int>(1, 9)(rng));
}

FieldElement random_nonzero(std::mt19937_64& rng) {
    for (;;) {
        FieldElement e = random_field_element(rng);
        if (!e.is_zero()) return e;
    }
}

// A query vector drawn from the same pipeline as a genuine equality query:
// rotate (1, -g) by a fresh random angle. Resampled until the first
// coordinate is nonzero so it can also serve as the masked-payload probe.
Vector2 random_query(std::mt19937_64& rng) {
    for (;;) {
        RotationMatrix rot = sample_rotation(random_field_element(rng));
        FieldElement g(random_gid(rng));
        Vector2 v = rotate(rot, Vector2{FieldElement(1), field_neg(g)});
        if (!v.x0.is_zero()) return v;
    }
}

} // namespace

FieldElement random_field_element(std::mt19937_64& rng) {
    u128 hi = rng();
    u128 lo = rng();
    return FieldElement((hi << 64) | lo);
}

const char* granularity_name(Granularity g) {
    switch (g) {
    case Granularity::Available: return "available";
    case Granularity::Circle: return "circle";
    case Granularity::Approx: return "approx";
    case Granularity::Nearby: return "nearby";
    case Granularity::Invisible: return "invisible";
    case Granularity::Fake: return "fake";
    }
    return "invisible";
}

std::optional<Granularity> granularity_from_name(const std::string& name) {
    for (int i = 0; i <= 5; ++i) {
        auto g = static_cast<Granularity>(i);
        if (name == granularity_name(g)) return g;
    }
    return std::nullopt;
}

int protocol_bit(Granularity g) {
    return g == Granularity::Nearby ? 1 : 0;
}

ProtocolKind dispatch(Granularity pref_a, Granularity pref_b) {
    if (pref_a == Granularity::Nearby && pref_b == Granularity::Nearby)
        return ProtocolKind::VPET;
    return ProtocolKind::PSP;
}

uint64_t equality_comparison_count() {
    return g_equality_comparisons.load(std::memory_order_relaxed);
}

bool grid_proximity_match(const GeoPoint& observer, const GeoPoint& peer) {
    CellCoord peer_cell = cell_of(peer);
    GridElementId candidate = proximity_candidate(observer, cell_label(peer_cell));
    return candidate == grid_element_of(peer_cell);
}

CheckinRecord unified_checkin(DirectionState& st, const GeoPoint& my_location,
                              std::mt19937_64& rng) {
    uint64_t ctr = st.last_sent_ctr + 1;
    Keystream ks = derive_keystream(st.key, st.send_direction(), ctr);

    int my_bit = protocol_bit(st.my_pref);
    // When we are not running the equality test the echoed peer bit is
    // meaningless, so it is drawn at random; a fixed value would let the
    // relay correlate it with our own bit across counters.
    int believed_peer = my_bit == 1 ? st.peer_bit_belief.value_or(0) : random_bit(rng);

    CheckinRecord rec;
    rec.ctr = ctr;
    rec.eb_mine = my_bit ^ ks.padbit0;
    rec.eb_peer = believed_peer ^ ks.padbit1;
    rec.cell = st.my_pref == Granularity::Nearby ? cell_label(cell_of(my_location))
                                                 : random_cell(rng);

    if (my_bit == 1 && believed_peer == 1) {
        // Both sides (as far as we know) run the equality test: publish our
        // grid element as a blinded rotated point, r * R(x) + s.
        FieldElement gid(grid_element_of(cell_of(my_location)));
        Vector2 x{gid, FieldElement(1)};
        RotationMatrix rot = sample_rotation(ks.t);
        Vector2 blinded = scale(random_nonzero(rng), rotate(rot, x));
        rec.vec = vec_add(blinded, ks.s);
    } else if (my_bit == 1) {
        // We only reveal whether the peer is near us. The verdict comes from
        // our cached knowledge of the peer's location, falling back to the
        // last nearby verdict we learned.
        bool nearby = st.cached_peer_location
                          ? grid_proximity_match(my_location, *st.cached_peer_location)
                          : st.cached_peer_nearby.value_or(false);
        rec.vec = masked_psp_vec(sentinel(nearby ? SentinelKind::NearbyYes
                                                 : SentinelKind::NearbyNo),
                                 ks);
    } else {
        GeoPoint payload;
        switch (st.my_pref) {
        case Granularity::Available:
        case Granularity::Circle:
            payload = my_location;
            break;
        case Granularity::Approx:
            payload = approximate(my_location);
            break;
        case Granularity::Fake:
            if (!st.my_fake) fail(Err::ConfigError, "fake preference without a fake location");
            payload = *st.my_fake;
            break;
        case Granularity::Invisible:
            payload = sentinel(SentinelKind::Invisible);
            break;
        case Granularity::Nearby:
            fail(Err::ConfigError, "unreachable: nearby handled above");
        }
        rec.vec = masked_psp_vec(payload, ks);
    }

    st.last_sent_ctr = ctr;
    return rec;
}

RetrieveContext retrieve_phase1(DirectionState& st, const GeoPoint& my_location,
                                const RetrievalHeader& hdr, std::mt19937_64& rng) {
    if (hdr.ctr <= st.last_consumed_ctr)
        fail(Err::StaleCounter, "header counter already consumed");

    Keystream ks = derive_keystream(st.key, st.recv_direction(), hdr.ctr);
    int peer_bit = hdr.eb_mine ^ ks.padbit0;
    int peer_belief_about_me = hdr.eb_peer ^ ks.padbit1;

    // Learned regardless of how the retrieval ends; the bits sit outside the
    // abort decision.
    st.peer_bit_belief = peer_bit;

    RetrieveContext ctx;
    ctx.ctr = hdr.ctr;
    ctx.s = ks.s;
    ctx.k1 = ks.k1;
    ctx.k2 = ks.k2;
    ctx.my_location = my_location;

    int my_bit = protocol_bit(st.my_pref);
    if (peer_bit == 1 && peer_belief_about_me != my_bit) {
        // The sender assumed the wrong preference for us, so the record is
        // unusable. Still send a cover query and discard the answer, so the
        // relay sees the same traffic as a completed retrieval.
        ctx.aborted = true;
        ctx.v1 = random_query(rng);
        return ctx;
    }

    if (peer_bit == 1 && my_bit == 1) {
        ctx.vpet = true;
        FieldElement g(proximity_candidate(my_location, hdr.cell));
        RotationMatrix rot = sample_rotation(ks.t);
        ctx.v1 = rotate(rot, Vector2{FieldElement(1), field_neg(g)});
        return ctx;
    }

    ctx.v1 = random_query(rng);
    return ctx;
}

RetrievalResult retrieve_phase2(DirectionState& st, FieldElement m, const RetrieveContext& ctx) {
    RetrievalResult out;
    if (ctx.aborted) {
        st.last_consumed_ctr = ctx.ctr;
        out.kind = RetrievalResult::Kind::Stale;
        return out;
    }

    if (ctx.vpet) {
        // Same grid element iff the blinding terms cancel: m = <v1, s>.
        g_equality_comparisons.fetch_add(1, std::memory_order_relaxed);
        bool same = m == inner_product(ctx.v1, ctx.s);
        st.last_consumed_ctr = ctx.ctr;
        st.cached_peer_pref = Granularity::Nearby;
        st.cached_peer_location.reset();
        st.cached_peer_nearby = same;
        out.kind = same ? RetrievalResult::Kind::NearbyYes : RetrievalResult::Kind::NearbyNo;
        return out;
    }

    // m = v1.x0 * masked + v1.x1 * k2; peel the known terms off.
    FieldElement masked = field_mul(field_sub(m, field_mul(ctx.v1.x1, ctx.k2)),
                                    field_inv(ctx.v1.x0));
    if (masked.raw() >> 64)
        fail(Err::DecodeError, "masked payload exceeds 64 bits");
    GeoPoint pt = unpack(mask64(masked.lo64(), ctx.k1));

    st.last_consumed_ctr = ctx.ctr;
    if (auto sk = sentinel_kind(pt)) {
        switch (*sk) {
        case SentinelKind::Invisible:
            st.cached_peer_pref = Granularity::Invisible;
            st.cached_peer_location.reset();
            st.cached_peer_nearby.reset();
            out.kind = RetrievalResult::Kind::Invisible;
            return out;
        case SentinelKind::NearbyYes:
        case SentinelKind::NearbyNo: {
            bool yes = *sk == SentinelKind::NearbyYes;
            st.cached_peer_pref = Granularity::Nearby;
            st.cached_peer_location.reset();
            st.cached_peer_nearby = yes;
            out.kind = yes ? RetrievalResult::Kind::NearbyYes : RetrievalResult::Kind::NearbyNo;
            return out;
        }
        }
    }

    if (!in_range(pt)) fail(Err::DecodeError, "decoded point out of range");
    st.cached_peer_pref = Granularity::Available;
    st.cached_peer_location = pt;
    st.cached_peer_nearby = grid_proximity_match(ctx.my_location, pt);
    out.kind = RetrievalResult::Kind::Location;
    out.point = pt;
    return out;
}

std::vector<CheckinRecord> batch_cache(DirectionState& st, int n, std::mt19937_64& rng) {
    std::vector<CheckinRecord> rows;
    rows.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        uint64_t ctr = st.last_sent_ctr + 1;
        Keystream ks = derive_keystream(st.key, st.send_direction(), ctr);
        CheckinRecord rec;
        rec.ctr = ctr;
        rec.eb_mine = 0 ^ ks.padbit0;
        rec.eb_peer = random_bit(rng) ^ ks.padbit1;
        rec.cell = random_cell(rng);
        rec.vec = masked_psp_vec(sentinel(SentinelKind::Invisible), ks);
        rows.push_back(rec);
        st.last_sent_ctr = ctr;
    }
    return rows;
}

} // namespace waypost
