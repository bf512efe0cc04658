#include "waypost/geo.hpp"

#include <cmath>
#include <cstdlib>

namespace waypost {

namespace {

constexpr int32_t kSentinelInvisible = 18'100'000;
constexpr int32_t kSentinelNearbyYes = 18'200'000;
constexpr int32_t kSentinelNearbyNo = 18'300'000;

void require_real(const GeoPoint& p) {
    if (sentinel_kind(p)) fail(Err::SentinelNotMappable, "sentinel has no grid position");
    if (p.lat_fx < -kLatMaxFx || p.lat_fx > kLatMaxFx || p.lon_fx < -kLonMaxFx ||
        p.lon_fx > kLonMaxFx) {
        fail(Err::InvalidCoordinate, "coordinate out of range");
    }
}

} // namespace

bool in_range(const GeoPoint& p) {
    return !sentinel_kind(p) && p.lat_fx >= -kLatMaxFx && p.lat_fx <= kLatMaxFx &&
           p.lon_fx >= -kLonMaxFx && p.lon_fx <= kLonMaxFx;
}

GeoPoint sentinel(SentinelKind kind) {
    switch (kind) {
    case SentinelKind::Invisible: return GeoPoint{0, kSentinelInvisible};
    case SentinelKind::NearbyYes: return GeoPoint{0, kSentinelNearbyYes};
    default: return GeoPoint{0, kSentinelNearbyNo};
    }
}

std::optional<SentinelKind> sentinel_kind(const GeoPoint& p) {
    if (p.lat_fx != 0) return std::nullopt;
    switch (p.lon_fx) {
    case kSentinelInvisible: return SentinelKind::Invisible;
    case kSentinelNearbyYes: return SentinelKind::NearbyYes;
    case kSentinelNearbyNo: return SentinelKind::NearbyNo;
    default: return std::nullopt;
    }
}

uint64_t pack(const GeoPoint& p) {
    return (uint64_t(uint32_t(p.lat_fx)) << 32) | uint64_t(uint32_t(p.lon_fx));
}

GeoPoint unpack(uint64_t bits) {
    return GeoPoint{int32_t(uint32_t(bits >> 32)), int32_t(uint32_t(bits))};
}

GeoPoint encode_geo(double lat_deg, double lon_deg) {
    if (!std::isfinite(lat_deg) || !std::isfinite(lon_deg) || lat_deg < -90.0 || lat_deg > 90.0 ||
        lon_deg < -180.0 || lon_deg > 180.0) {
        fail(Err::InvalidCoordinate, "coordinates must satisfy |lat|<=90, |lon|<=180");
    }
    return GeoPoint{int32_t(std::llround(lat_deg * 1e5)), int32_t(std::llround(lon_deg * 1e5))};
}

CellCoord cell_of(const GeoPoint& p) {
    require_real(p);
    // Exact: cell height/width is (1e5)/3 fixed-point units.
    int64_t ci = (int64_t(kLatMaxFx) - p.lat_fx) * 3 / 100'000;
    if (ci == kCellRows) ci = kCellRows - 1; // exact south pole
    int64_t cj = ((int64_t(p.lon_fx) + kLonMaxFx) * 3 / 100'000) % kCellCols;
    return CellCoord{int32_t(ci), int32_t(cj)};
}

CellLabel cell_label(const CellCoord& c) { return 3 * (c.ci % 3) + (c.cj % 3) + 1; }

GridElementId grid_element_of(const CellCoord& c) {
    return GridElementId(c.ci / 3) * 360 + GridElementId(c.cj / 3);
}

CellCenter6 cell_center6(const CellCoord& c) {
    return CellCenter6{int64_t(kLatMaxFx) * 6 - (2 * int64_t(c.ci) + 1) * 100'000,
                       -int64_t(kLonMaxFx) * 6 + (2 * int64_t(c.cj) + 1) * 100'000};
}

CellCoord nearest_cell_with_label(const GeoPoint& observer, CellLabel label) {
    if (label < 1 || label > 9) fail(Err::InvalidCoordinate, "cell label must be in [1,9]");
    const CellCoord own = cell_of(observer);
    const int64_t obs_lat6 = int64_t(observer.lat_fx) * 6;
    const int64_t obs_lon6 = int64_t(observer.lon_fx) * 6;

    bool found = false;
    int64_t best_d2 = 0;
    CellCoord best{};
    for (int di = -2; di <= 2; ++di) {
        const int32_t ci = own.ci + di;
        if (ci < 0 || ci >= kCellRows) continue; // rows do not wrap over the poles
        for (int dj = -2; dj <= 2; ++dj) {
            const int32_t cj_raw = own.cj + dj;
            const int32_t cj = int32_t(((cj_raw % kCellCols) + kCellCols) % kCellCols);
            const CellCoord cand{ci, cj};
            if (cell_label(cand) != label) continue;
            // Distance uses the unwrapped column so geometry stays local
            // across the antimeridian.
            const int64_t center_lat6 =
                int64_t(kLatMaxFx) * 6 - (2 * int64_t(ci) + 1) * 100'000;
            const int64_t center_lon6 =
                -int64_t(kLonMaxFx) * 6 + (2 * int64_t(cj_raw) + 1) * 100'000;
            const int64_t dlat = obs_lat6 - center_lat6;
            const int64_t dlon = obs_lon6 - center_lon6;
            const int64_t d2 = dlat * dlat + dlon * dlon;
            if (!found || d2 < best_d2 ||
                (d2 == best_d2 &&
                 (cand.ci < best.ci || (cand.ci == best.ci && cand.cj < best.cj)))) {
                found = true;
                best_d2 = d2;
                best = cand;
            }
        }
    }
    return best;
}

GridElementId proximity_candidate(const GeoPoint& observer, CellLabel peer_label) {
    return grid_element_of(nearest_cell_with_label(observer, peer_label));
}

GeoPoint approximate(const GeoPoint& p) {
    require_real(p);
    return GeoPoint{p.lat_fx - p.lat_fx % 1000, p.lon_fx - p.lon_fx % 1000};
}

GeoPoint parse_point(const std::string& text) {
    const size_t comma = text.find(',');
    if (comma == std::string::npos) fail(Err::InvalidCoordinate, "expected \"lat,lon\"");
    const std::string a = text.substr(0, comma);
    const std::string b = text.substr(comma + 1);
    if (a.empty() || b.empty()) fail(Err::InvalidCoordinate, "expected \"lat,lon\"");

    const bool fractional = a.find('.') != std::string::npos || b.find('.') != std::string::npos;
    try {
        if (fractional) return encode_geo(std::stod(a), std::stod(b));
        const long long lat = std::stoll(a);
        const long long lon = std::stoll(b);
        if (lat < -kLatMaxFx || lat > kLatMaxFx || lon < -kLonMaxFx || lon > kLonMaxFx) {
            fail(Err::InvalidCoordinate, "fixed-point coordinate out of range");
        }
        return GeoPoint{int32_t(lat), int32_t(lon)};
    } catch (const std::invalid_argument&) {
        fail(Err::InvalidCoordinate, "unparsable coordinate");
    } catch (const std::out_of_range&) {
        fail(Err::InvalidCoordinate, "coordinate out of range");
    }
}

std::string format_point_fx(const GeoPoint& p) {
    return std::to_string(p.lat_fx) + "," + std::to_string(p.lon_fx);
}

namespace {
std::string deg_component(int32_t fx) {
    std::string out = fx < 0 ? "-" : "";
    const int64_t a = std::llabs(int64_t(fx));
    out += std::to_string(a / 100000);
    std::string frac = std::to_string(a % 100000);
    out += "." + std::string(5 - frac.size(), '0') + frac;
    return out;
}
} // namespace

std::string format_point_deg(const GeoPoint& p) {
    return deg_component(p.lat_fx) + "," + deg_component(p.lon_fx);
}

} // namespace waypost
