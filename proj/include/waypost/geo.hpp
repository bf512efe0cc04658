#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "waypost/errors.hpp"

namespace waypost {

// Fixed-point coordinates at 10^5 scale (~1.1 m latitude resolution).
// Sentinels carry a longitude beyond the legal range, so they pack into the
// same 8 bytes as real locations without colliding with any of them.
struct GeoPoint {
    int32_t lat_fx = 0; // round(latitude  * 1e5)
    int32_t lon_fx = 0; // round(longitude * 1e5)

    friend bool operator==(const GeoPoint& a, const GeoPoint& b) {
        return a.lat_fx == b.lat_fx && a.lon_fx == b.lon_fx;
    }
};

enum class SentinelKind { Invisible, NearbyYes, NearbyNo };

constexpr int32_t kLatMaxFx = 9'000'000;
constexpr int32_t kLonMaxFx = 18'000'000;

GeoPoint sentinel(SentinelKind kind);
std::optional<SentinelKind> sentinel_kind(const GeoPoint& p);

// True for a real coordinate within the legal range (sentinels excluded).
bool in_range(const GeoPoint& p);

// lat in high 32 bits, lon in low 32 bits, two's complement. Bijective over
// all GeoPoints including sentinels.
uint64_t pack(const GeoPoint& p);
GeoPoint unpack(uint64_t bits);

// Degrees -> fixed point. Out-of-range input raises InvalidCoordinate.
GeoPoint encode_geo(double lat_deg, double lon_deg);

// Grid system: the globe is tiled by 1-degree grid elements, each subdivided
// into cells_per_side x cells_per_side square cells. Cell rows count from the
// north pole, columns from longitude -180 (wrapping).
struct GridConfig {
    int32_t element_width_fx = 100'000; // 1 degree in fixed point
    int cells_per_side = 3;
};

constexpr GridConfig kGrid{};

constexpr int kCellRows = 540;  // 180 deg / (1/3 deg)
constexpr int kCellCols = 1080; // 360 deg / (1/3 deg)

struct CellCoord {
    int32_t ci = 0; // row, [0, 540)
    int32_t cj = 0; // column, [0, 1080)

    friend bool operator==(const CellCoord& a, const CellCoord& b) {
        return a.ci == b.ci && a.cj == b.cj;
    }
};

// Latin-square label in [1, 9]: any contiguous 3x3 cell window contains each
// label exactly once.
using CellLabel = int;

// gid = floor(ci/3)*360 + floor(cj/3), < 64800.
using GridElementId = uint64_t;

CellCoord cell_of(const GeoPoint& p);
CellLabel cell_label(const CellCoord& c);
GridElementId grid_element_of(const CellCoord& c);

// Exact cell center in sixth-of-fixed-point units (6 units = 1e-5 degrees),
// so centers of 1/3-degree cells are integers.
struct CellCenter6 {
    int64_t lat6 = 0;
    int64_t lon6 = 0;
};
CellCenter6 cell_center6(const CellCoord& c);

// Among all cells with the given label in the 5x5 neighborhood of the
// observer's cell, the one whose center is Euclidean-closest to the
// observer's exact position; ties break on smallest (ci, cj). The nearest
// member of a period-3 lattice is always within 1.5 cell widths, so the 5x5
// window suffices.
CellCoord nearest_cell_with_label(const GeoPoint& observer, CellLabel label);

// The grid element the observer would test against a peer advertising the
// given cell label. Matches the peer's own grid element exactly when the
// peer's cell is the label-nearest one to the observer.
GridElementId proximity_candidate(const GeoPoint& observer, CellLabel peer_label);

// Truncate to 10^3 fixed-point granularity (two decimal digits of degrees).
GeoPoint approximate(const GeoPoint& p);

// CLI/scenario textual forms. parse_point accepts decimal degrees
// ("37.4,-122.1") or raw fixed point ("3740000,-12210000").
GeoPoint parse_point(const std::string& text);
std::string format_point_fx(const GeoPoint& p);    // "lat_fx,lon_fx"
std::string format_point_deg(const GeoPoint& p);   // "37.40000,-122.10000"

} // namespace waypost
