#pragma once

// Grid-ID math: Morton interleaving, the SPIN2 lat/lon grid (ZGrid), the
// USGS UTM grid (UGrid), neighbor and range enumeration. Everything here is
// pure and thread-safe.
//
// Lane convention: the first interleave argument (longitude or easting index)
// occupies the even bits of the code, the second (latitude or northing
// index) the odd bits.

#include <compare>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "terratile/common.hpp"

namespace terratile {

inline constexpr std::uint32_t kMortonAxisBits = 15;
inline constexpr std::uint32_t kMortonAxisLimit = 1u << kMortonAxisBits;
inline constexpr std::uint32_t kMortonCodeLimit = 1u << (2 * kMortonAxisBits);

inline constexpr int kZGridLonCellsPerDegree = 48;
inline constexpr int kZGridLatCellsPerDegree = 96;
inline constexpr std::uint32_t kZGridLonCells = 360 * kZGridLonCellsPerDegree;  // 17280
inline constexpr std::uint32_t kZGridLatCells = 180 * kZGridLatCellsPerDegree;  // 17280

inline constexpr double kUGridCellWidthM = 1800.0;
inline constexpr double kUGridCellHeightM = 1200.0;
inline constexpr double kUGridEastingOffsetM = 400.0;

// Valid UTM band used for validation and for deciding which UGrid cells
// belong to a zone.
inline constexpr double kUtmMinEasting = 100000.0;
inline constexpr double kUtmMaxEasting = 900000.0;
inline constexpr double kUtmMaxNorthing = 9350000.0;
inline constexpr double kUtmMaxLatitude = 84.0;

/// Spread u over the even bits and v over the odd bits of a 30-bit code.
/// Throws RangeError when either index is >= 2^15.
std::uint32_t interleave(std::uint32_t u, std::uint32_t v);

/// Inverse of interleave. Throws RangeError when code >= 2^30.
std::pair<std::uint32_t, std::uint32_t> deinterleave(std::uint32_t code);

/// Number of distinct ZGrid cells, computed from the axis counts.
constexpr std::uint64_t zgrid_cell_count() {
  return std::uint64_t{kZGridLonCells} * std::uint64_t{kZGridLatCells};
}

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  /// Validates lat in [-90, 90] and normalizes lon into [-180, 180).
  static GeoPoint make(double lat, double lon);
};

/// Half-open geographic rectangle [lat_min, lat_max) x [lon_min, lon_max).
struct GeoBox {
  double lat_min = 0.0;
  double lat_max = 0.0;
  double lon_min = 0.0;
  double lon_max = 0.0;

  GeoPoint center() const;
  bool contains(const GeoPoint& p) const;
  bool empty() const { return !(lat_max > lat_min) || !(lon_max > lon_min); }
};

struct UtmCoord {
  int zone = 1;
  double easting = 0.0;
  double northing = 0.0;
};

/// Half-open easting/northing rectangle inside one zone.
struct UtmBox {
  int zone = 1;
  double easting_min = 0.0;
  double easting_max = 0.0;
  double northing_min = 0.0;
  double northing_max = 0.0;

  UtmCoord center() const;
  bool empty() const { return !(easting_max > easting_min) || !(northing_max > northing_min); }
};

struct ZGridId {
  std::uint32_t value = 0;

  static ZGridId from_indices(std::uint32_t lon_index, std::uint32_t lat_index);
  std::uint32_t lon_index() const { return deinterleave(value).first; }
  std::uint32_t lat_index() const { return deinterleave(value).second; }

  friend auto operator<=>(const ZGridId&, const ZGridId&) = default;
};

struct UGridId {
  int zone = 1;
  std::uint32_t interleaved = 0;

  static UGridId from_indices(int zone, std::uint32_t easting_index, std::uint32_t northing_index);
  std::uint32_t easting_index() const { return deinterleave(interleaved).first; }
  std::uint32_t northing_index() const { return deinterleave(interleaved).second; }

  friend auto operator<=>(const UGridId&, const UGridId&) = default;
};

/// Theme-tagged grid key used by the store, gazetteer and server. SPIN2 keys
/// carry zone 0. The packed form (zone << 30 | morton) orders keys by zone and
/// then Z-order, and its 12-digit decimal rendering is the public grid id.
struct GridKey {
  Theme theme = Theme::Usgs;
  std::uint8_t zone = 0;
  std::uint32_t morton = 0;

  static GridKey from(ZGridId id) { return {Theme::Spin2, 0, id.value}; }
  static GridKey from(UGridId id) {
    return {Theme::Usgs, static_cast<std::uint8_t>(id.zone), id.interleaved};
  }

  ZGridId zgrid() const;
  UGridId ugrid() const;

  std::uint64_t packed() const { return (std::uint64_t{zone} << 30) | morton; }
  std::string to_string() const;
  static GridKey parse(Theme theme, std::string_view text);

  friend auto operator<=>(const GridKey&, const GridKey&) = default;
};

ZGridId geo_to_zgrid(const GeoPoint& p);
GeoBox zgrid_to_extent(ZGridId id);

int utm_zone_for_longitude(double lon);
double utm_central_meridian(int zone);

/// Projects onto the UTM zone containing p (northern hemisphere, lat in [0, 84]).
UtmCoord geo_to_utm(const GeoPoint& p);
/// Projects onto an explicit zone; used when panning across a zone edge.
UtmCoord geo_to_utm(const GeoPoint& p, int zone);
GeoPoint utm_to_geo(const UtmCoord& c);

UGridId utm_to_ugrid(const UtmCoord& c);
UtmBox ugrid_to_extent(UGridId id);

/// True when the cell lies inside its zone's valid easting/northing band.
bool ugrid_in_zone(UGridId id);

/// Adjacent cells in index space. ZGrid wraps in longitude and drops rows
/// beyond the poles; UGrid drops cells outside the zone band.
std::vector<ZGridId> neighbors(ZGridId id);
std::vector<UGridId> neighbors(UGridId id);
std::vector<GridKey> neighbors(const GridKey& key);

/// Cells intersecting the box, in ascending Morton order.
std::vector<ZGridId> range_cells(const GeoBox& box);
std::vector<UGridId> range_cells(const UtmBox& box);

/// Geographic center of a cell of either theme.
GeoPoint cell_center(const GridKey& key);

/// Great-circle distance in meters on the mean-radius sphere.
double haversine_m(const GeoPoint& a, const GeoPoint& b);

}  // namespace terratile
