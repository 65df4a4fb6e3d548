#include "terratile/spatial_index.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "terratile/transverse_mercator.hpp"

namespace terratile {

namespace {

constexpr double kFalseEasting = 500000.0;
constexpr double kIndexEps = 1e-9;
constexpr double kMeanEarthRadiusM = 6371008.8;

std::uint32_t spread_bits(std::uint32_t x) {
  x &= 0x7FFFu;
  x = (x | (x << 8)) & 0x00FF00FFu;
  x = (x | (x << 4)) & 0x0F0F0F0Fu;
  x = (x | (x << 2)) & 0x33333333u;
  x = (x | (x << 1)) & 0x55555555u;
  return x;
}

std::uint32_t compact_bits(std::uint32_t x) {
  x &= 0x55555555u;
  x = (x | (x >> 1)) & 0x33333333u;
  x = (x | (x >> 2)) & 0x0F0F0F0Fu;
  x = (x | (x >> 4)) & 0x00FF00FFu;
  x = (x | (x >> 8)) & 0x0000FFFFu;
  return x;
}

void check_zone(int zone) {
  if (zone < 1 || zone > 60) throw RangeError("UTM zone out of range: " + std::to_string(zone));
}

// First and last cell index overlapped by the half-open interval [lo, hi)
// expressed in cell units, clamped to [0, limit).
std::pair<std::int64_t, std::int64_t> index_span(double lo, double hi, std::int64_t limit) {
  std::int64_t first = static_cast<std::int64_t>(std::floor(lo + kIndexEps));
  std::int64_t last = static_cast<std::int64_t>(std::ceil(hi - kIndexEps)) - 1;
  first = std::max<std::int64_t>(first, 0);
  last = std::min<std::int64_t>(last, limit - 1);
  return {first, last};
}

const std::uint32_t kUGridMinEastingIndex =
    static_cast<std::uint32_t>((kUtmMinEasting + kUGridEastingOffsetM) / kUGridCellWidthM);
const std::uint32_t kUGridMaxEastingIndex =
    static_cast<std::uint32_t>((kUtmMaxEasting + kUGridEastingOffsetM) / kUGridCellWidthM);
const std::uint32_t kUGridMaxNorthingIndex =
    static_cast<std::uint32_t>(kUtmMaxNorthing / kUGridCellHeightM);

GeoPoint utm_to_geo_unchecked(const UtmCoord& c) {
  const auto g = TransverseMercator::utm_grs80().inverse(c.easting - kFalseEasting, c.northing,
                                                         utm_central_meridian(c.zone));
  return GeoPoint::make(g.lat, g.lon);
}

}  // namespace

std::uint32_t interleave(std::uint32_t u, std::uint32_t v) {
  if (u >= kMortonAxisLimit || v >= kMortonAxisLimit) {
    throw RangeError("interleave index exceeds 15 bits");
  }
  return spread_bits(u) | (spread_bits(v) << 1);
}

std::pair<std::uint32_t, std::uint32_t> deinterleave(std::uint32_t code) {
  if (code >= kMortonCodeLimit) throw RangeError("Morton code exceeds 30 bits");
  return {compact_bits(code), compact_bits(code >> 1)};
}

GeoPoint GeoPoint::make(double lat, double lon) {
  if (!std::isfinite(lat) || !std::isfinite(lon) || lat < -90.0 || lat > 90.0) {
    throw RangeError("latitude out of range");
  }
  double normalized = std::fmod(lon + 180.0, 360.0);
  if (normalized < 0.0) normalized += 360.0;
  normalized -= 180.0;
  if (normalized >= 180.0) normalized = -180.0;
  return {lat, normalized};
}

GeoPoint GeoBox::center() const {
  return {(lat_min + lat_max) / 2.0, (lon_min + lon_max) / 2.0};
}

bool GeoBox::contains(const GeoPoint& p) const {
  return p.lat >= lat_min && p.lat < lat_max && p.lon >= lon_min && p.lon < lon_max;
}

UtmCoord UtmBox::center() const {
  return {zone, (easting_min + easting_max) / 2.0, (northing_min + northing_max) / 2.0};
}

ZGridId ZGridId::from_indices(std::uint32_t lon_index, std::uint32_t lat_index) {
  if (lon_index >= kZGridLonCells || lat_index >= kZGridLatCells) {
    throw RangeError("ZGrid index out of range");
  }
  return {interleave(lon_index, lat_index)};
}

UGridId UGridId::from_indices(int zone, std::uint32_t easting_index,
                              std::uint32_t northing_index) {
  check_zone(zone);
  return {zone, interleave(easting_index, northing_index)};
}

ZGridId GridKey::zgrid() const {
  if (theme != Theme::Spin2) throw RangeError("not a SPIN2 grid key");
  return {morton};
}

UGridId GridKey::ugrid() const {
  if (theme != Theme::Usgs) throw RangeError("not a USGS grid key");
  return {zone, morton};
}

std::string GridKey::to_string() const {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%012llu", static_cast<unsigned long long>(packed()));
  return buf;
}

GridKey GridKey::parse(Theme theme, std::string_view text) {
  std::uint64_t packed = 0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, packed);
  if (text.empty() || res.ec != std::errc() || res.ptr != end) {
    throw FormatError("bad grid id: " + std::string(text));
  }
  const std::uint64_t zone = packed >> 30;
  const auto morton = static_cast<std::uint32_t>(packed & (kMortonCodeLimit - 1));
  if (theme == Theme::Spin2) {
    if (zone != 0) throw RangeError("SPIN2 grid id carries a zone");
    const auto [lon_i, lat_i] = deinterleave(morton);
    if (lon_i >= kZGridLonCells || lat_i >= kZGridLatCells) {
      throw RangeError("SPIN2 grid id outside the globe");
    }
  } else if (zone < 1 || zone > 60) {
    throw RangeError("USGS grid id has no valid zone");
  }
  return {theme, static_cast<std::uint8_t>(zone), morton};
}

ZGridId geo_to_zgrid(const GeoPoint& p) {
  const GeoPoint q = GeoPoint::make(p.lat, p.lon);
  auto lon_index = static_cast<std::int64_t>(std::floor((q.lon + 180.0) * kZGridLonCellsPerDegree));
  auto lat_index = static_cast<std::int64_t>(std::floor((q.lat + 90.0) * kZGridLatCellsPerDegree));
  lon_index = std::clamp<std::int64_t>(lon_index, 0, kZGridLonCells - 1);
  lat_index = std::clamp<std::int64_t>(lat_index, 0, kZGridLatCells - 1);
  return ZGridId::from_indices(static_cast<std::uint32_t>(lon_index),
                               static_cast<std::uint32_t>(lat_index));
}

GeoBox zgrid_to_extent(ZGridId id) {
  const auto [lon_i, lat_i] = deinterleave(id.value);
  if (lon_i >= kZGridLonCells || lat_i >= kZGridLatCells) {
    throw RangeError("ZGrid id outside the globe");
  }
  GeoBox box;
  box.lon_min = static_cast<double>(lon_i) / kZGridLonCellsPerDegree - 180.0;
  box.lon_max = static_cast<double>(lon_i + 1) / kZGridLonCellsPerDegree - 180.0;
  box.lat_min = static_cast<double>(lat_i) / kZGridLatCellsPerDegree - 90.0;
  box.lat_max = static_cast<double>(lat_i + 1) / kZGridLatCellsPerDegree - 90.0;
  return box;
}

int utm_zone_for_longitude(double lon) {
  const GeoPoint p = GeoPoint::make(0.0, lon);
  const int zone = static_cast<int>(std::floor((p.lon + 180.0) / 6.0)) + 1;
  return std::clamp(zone, 1, 60);
}

double utm_central_meridian(int zone) {
  check_zone(zone);
  return -183.0 + 6.0 * zone;
}

UtmCoord geo_to_utm(const GeoPoint& p) {
  return geo_to_utm(p, utm_zone_for_longitude(p.lon));
}

UtmCoord geo_to_utm(const GeoPoint& p, int zone) {
  check_zone(zone);
  if (!(p.lat >= 0.0 && p.lat <= kUtmMaxLatitude)) {
    throw ProjectionError("latitude outside the northern UTM band [0, 84]");
  }
  const auto xy = TransverseMercator::utm_grs80().forward(p.lat, p.lon, utm_central_meridian(zone));
  return {zone, xy.x + kFalseEasting, xy.y};
}

GeoPoint utm_to_geo(const UtmCoord& c) {
  check_zone(c.zone);
  if (!(c.easting >= kUtmMinEasting && c.easting <= kUtmMaxEasting)) {
    throw RangeError("easting outside the zone band");
  }
  if (!(c.northing >= 0.0 && c.northing <= kUtmMaxNorthing)) {
    throw RangeError("northing outside the zone band");
  }
  return utm_to_geo_unchecked(c);
}

UGridId utm_to_ugrid(const UtmCoord& c) {
  check_zone(c.zone);
  const double e = std::floor((c.easting + kUGridEastingOffsetM) / kUGridCellWidthM);
  const double n = std::floor(c.northing / kUGridCellHeightM);
  if (!(e >= 0 && e < kMortonAxisLimit && n >= 0 && n < kMortonAxisLimit)) {
    throw RangeError("UTM coordinate outside the UGrid index space");
  }
  return UGridId::from_indices(c.zone, static_cast<std::uint32_t>(e),
                               static_cast<std::uint32_t>(n));
}

UtmBox ugrid_to_extent(UGridId id) {
  const auto [e, n] = deinterleave(id.interleaved);
  UtmBox box;
  box.zone = id.zone;
  box.easting_min = e * kUGridCellWidthM - kUGridEastingOffsetM;
  box.easting_max = (e + 1) * kUGridCellWidthM - kUGridEastingOffsetM;
  box.northing_min = n * kUGridCellHeightM;
  box.northing_max = (n + 1) * kUGridCellHeightM;
  return box;
}

bool ugrid_in_zone(UGridId id) {
  if (id.zone < 1 || id.zone > 60) return false;
  const auto [e, n] = deinterleave(id.interleaved);
  return e >= kUGridMinEastingIndex && e <= kUGridMaxEastingIndex && n <= kUGridMaxNorthingIndex;
}

std::vector<ZGridId> neighbors(ZGridId id) {
  const auto [lon_i, lat_i] = deinterleave(id.value);
  std::vector<ZGridId> out;
  out.reserve(8);
  for (int dlat = -1; dlat <= 1; ++dlat) {
    const std::int64_t lat = std::int64_t{lat_i} + dlat;
    if (lat < 0 || lat >= kZGridLatCells) continue;
    for (int dlon = -1; dlon <= 1; ++dlon) {
      if (dlat == 0 && dlon == 0) continue;
      const std::int64_t lon = (std::int64_t{lon_i} + dlon + kZGridLonCells) % kZGridLonCells;
      out.push_back(ZGridId::from_indices(static_cast<std::uint32_t>(lon),
                                          static_cast<std::uint32_t>(lat)));
    }
  }
  return out;
}

std::vector<UGridId> neighbors(UGridId id) {
  const auto [e_i, n_i] = deinterleave(id.interleaved);
  std::vector<UGridId> out;
  out.reserve(8);
  for (int dn = -1; dn <= 1; ++dn) {
    for (int de = -1; de <= 1; ++de) {
      if (dn == 0 && de == 0) continue;
      const std::int64_t e = std::int64_t{e_i} + de;
      const std::int64_t n = std::int64_t{n_i} + dn;
      if (e < 0 || n < 0 || e >= kMortonAxisLimit || n >= kMortonAxisLimit) continue;
      const UGridId cand = UGridId::from_indices(id.zone, static_cast<std::uint32_t>(e),
                                                 static_cast<std::uint32_t>(n));
      if (ugrid_in_zone(cand)) out.push_back(cand);
    }
  }
  return out;
}

std::vector<GridKey> neighbors(const GridKey& key) {
  std::vector<GridKey> out;
  if (key.theme == Theme::Spin2) {
    for (ZGridId z : neighbors(key.zgrid())) out.push_back(GridKey::from(z));
  } else {
    for (UGridId u : neighbors(key.ugrid())) out.push_back(GridKey::from(u));
  }
  return out;
}

std::vector<ZGridId> range_cells(const GeoBox& box) {
  std::vector<ZGridId> out;
  if (box.empty()) return out;
  const auto [lon0, lon1] = index_span((box.lon_min + 180.0) * kZGridLonCellsPerDegree,
                                       (box.lon_max + 180.0) * kZGridLonCellsPerDegree,
                                       kZGridLonCells);
  const auto [lat0, lat1] = index_span((box.lat_min + 90.0) * kZGridLatCellsPerDegree,
                                       (box.lat_max + 90.0) * kZGridLatCellsPerDegree,
                                       kZGridLatCells);
  if (lon1 < lon0 || lat1 < lat0) return out;
  out.reserve(static_cast<std::size_t>((lon1 - lon0 + 1) * (lat1 - lat0 + 1)));
  for (std::int64_t lat = lat0; lat <= lat1; ++lat) {
    for (std::int64_t lon = lon0; lon <= lon1; ++lon) {
      out.push_back(ZGridId::from_indices(static_cast<std::uint32_t>(lon),
                                          static_cast<std::uint32_t>(lat)));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<UGridId> range_cells(const UtmBox& box) {
  check_zone(box.zone);
  std::vector<UGridId> out;
  if (box.empty()) return out;
  const auto [e0, e1] = index_span((box.easting_min + kUGridEastingOffsetM) / kUGridCellWidthM,
                                   (box.easting_max + kUGridEastingOffsetM) / kUGridCellWidthM,
                                   kMortonAxisLimit);
  const auto [n0, n1] = index_span(box.northing_min / kUGridCellHeightM,
                                   box.northing_max / kUGridCellHeightM, kMortonAxisLimit);
  if (e1 < e0 || n1 < n0) return out;
  out.reserve(static_cast<std::size_t>((e1 - e0 + 1) * (n1 - n0 + 1)));
  for (std::int64_t n = n0; n <= n1; ++n) {
    for (std::int64_t e = e0; e <= e1; ++e) {
      out.push_back(UGridId::from_indices(box.zone, static_cast<std::uint32_t>(e),
                                          static_cast<std::uint32_t>(n)));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

GeoPoint cell_center(const GridKey& key) {
  if (key.theme == Theme::Spin2) return zgrid_to_extent(key.zgrid()).center();
  return utm_to_geo_unchecked(ugrid_to_extent(key.ugrid()).center());
}

double haversine_m(const GeoPoint& a, const GeoPoint& b) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * kDeg;
  const double dlon = (b.lon - a.lon) * kDeg;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * kDeg) * std::cos(b.lat * kDeg) * std::sin(dlon / 2) *
                       std::sin(dlon / 2);
  return 2.0 * kMeanEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

}  // namespace terratile
