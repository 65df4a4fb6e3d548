#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "terratile/spatial_index.hpp"
#include "terratile/transverse_mercator.hpp"

using namespace terratile;

namespace {

// Bit-at-a-time reference for the Morton code.
std::uint32_t loop_interleave(std::uint32_t u, std::uint32_t v) {
  std::uint32_t out = 0;
  for (int i = 0; i < 15; ++i) {
    out |= ((u >> i) & 1u) << (2 * i);
    out |= ((v >> i) & 1u) << (2 * i + 1);
  }
  return out;
}

// Snyder's transverse Mercator series (Map Projections, eqs. 8-9 .. 8-15).
// Different expansion from the Krueger series under test; agrees to a few
// millimeters within 3 degrees of the central meridian.
struct SnyderTm {
  double a = 6378137.0;
  double f = 1.0 / 298.257222101;
  double k0 = 0.9996;

  double arc(double phi) const {
    const double e2 = f * (2 - f);
    const double e4 = e2 * e2, e6 = e4 * e2;
    return a * ((1 - e2 / 4 - 3 * e4 / 64 - 5 * e6 / 256) * phi -
                (3 * e2 / 8 + 3 * e4 / 32 + 45 * e6 / 1024) * std::sin(2 * phi) +
                (15 * e4 / 256 + 45 * e6 / 1024) * std::sin(4 * phi) - (35 * e6 / 3072) * std::sin(6 * phi));
  }

  std::pair<double, double> forward(double lat, double lon, double lon0) const {
    const double d = M_PI / 180.0;
    const double phi = lat * d;
    const double e2 = f * (2 - f);
    const double ep2 = e2 / (1 - e2);
    const double n = a / std::sqrt(1 - e2 * std::sin(phi) * std::sin(phi));
    const double t = std::tan(phi) * std::tan(phi);
    const double c = ep2 * std::cos(phi) * std::cos(phi);
    const double A = (lon - lon0) * d * std::cos(phi);
    const double x = k0 * n *
                     (A + (1 - t + c) * std::pow(A, 3) / 6 +
                      (5 - 18 * t + t * t + 72 * c - 58 * ep2) * std::pow(A, 5) / 120);
    const double y =
        k0 * (arc(phi) + n * std::tan(phi) *
                             (A * A / 2 + (5 - t + 9 * c + 4 * c * c) * std::pow(A, 4) / 24 +
                              (61 - 58 * t + t * t + 600 * c - 330 * ep2) * std::pow(A, 6) / 720));
    return {x, y};
  }
};

}  // namespace

TEST_CASE("morton interleave matches the bit loop") {
  for (std::uint32_t u = 0; u < 256; ++u) {
    for (std::uint32_t v = 0; v < 256; ++v) {
      const std::uint32_t code = interleave(u, v);
      REQUIRE(code == loop_interleave(u, v));
      REQUIRE(deinterleave(code) == std::pair{u, v});
    }
  }
  std::mt19937 rng(7);
  for (int i = 0; i < 20000; ++i) {
    const std::uint32_t u = rng() & 0x7fff, v = rng() & 0x7fff;
    REQUIRE(interleave(u, v) == loop_interleave(u, v));
  }
  CHECK(interleave(0x7fff, 0x7fff) == kMortonCodeLimit - 1);
  CHECK_THROWS_AS(interleave(kMortonAxisLimit, 0), RangeError);
}

TEST_CASE("zgrid geometry") {
  CHECK(zgrid_cell_count() == 298598400ull);
  const ZGridId sw = geo_to_zgrid(GeoPoint::make(-90.0, -180.0));
  CHECK(sw.lon_index() == 0);
  CHECK(sw.lat_index() == 0);
  const ZGridId ne = geo_to_zgrid(GeoPoint::make(90.0, 179.9999999));
  CHECK(ne.lon_index() == kZGridLonCells - 1);
  CHECK(ne.lat_index() == kZGridLatCells - 1);

  // A cell is 1/48 degree of longitude by 1/96 of latitude.
  const GeoPoint p = GeoPoint::make(47.6062, -122.3321);
  const GeoBox b = zgrid_to_extent(geo_to_zgrid(p));
  CHECK(b.contains(p));
  CHECK(b.lon_max - b.lon_min == doctest::Approx(1.0 / 48));
  CHECK(b.lat_max - b.lat_min == doctest::Approx(1.0 / 96));

  // Longitude wraps.
  CHECK(GeoPoint::make(0.0, 180.0).lon == doctest::Approx(-180.0));
  CHECK_THROWS_AS(GeoPoint::make(91.0, 0.0), RangeError);
}

TEST_CASE("grid key text form") {
  const GridKey k = GridKey::from(UGridId::from_indices(10, 307, 4393));
  CHECK(k.to_string().size() == 12);
  CHECK(GridKey::parse(Theme::Usgs, k.to_string()) == k);
  CHECK(k.packed() == ((std::uint64_t{10} << 30) | interleave(307, 4393)));
  CHECK_THROWS_AS(GridKey::parse(Theme::Usgs, "12x"), FormatError);
  CHECK_THROWS_AS(GridKey::parse(Theme::Usgs, "000000000005"), RangeError);  // zone 0
  CHECK_THROWS(GridKey::parse(Theme::Spin2, k.to_string()));
}

TEST_CASE("utm zones") {
  CHECK(utm_zone_for_longitude(-180.0) == 1);
  CHECK(utm_zone_for_longitude(-122.33) == 10);
  CHECK(utm_zone_for_longitude(179.99) == 60);
  CHECK(utm_central_meridian(10) == -123.0);
  CHECK(utm_central_meridian(31) == 3.0);
}

TEST_CASE("utm against published and independent values") {
  // On the equator at the central meridian.
  const UtmCoord origin = geo_to_utm(GeoPoint::make(0.0, 3.0));
  CHECK(origin.zone == 31);
  CHECK(origin.easting == doctest::Approx(500000.0).epsilon(1e-12));
  CHECK(std::abs(origin.northing) < 1e-6);

  // Meridian arc to 45N on GRS80/WGS84 is 4,984,944.378 m.
  const UtmCoord m45 = geo_to_utm(GeoPoint::make(45.0, -123.0));
  CHECK(std::abs(m45.northing - 0.9996 * 4984944.378) < 0.01);
  CHECK(std::abs(m45.easting - 500000.0) < 1e-6);

  const SnyderTm oracle;
  for (double lat = 1.0; lat <= 80.0; lat += 7.3) {
    for (double dlon = -2.9; dlon <= 2.9; dlon += 0.7) {
      const double lon0 = utm_central_meridian(14);
      const UtmCoord u = geo_to_utm(GeoPoint::make(lat, lon0 + dlon), 14);
      const auto [x, y] = oracle.forward(lat, lon0 + dlon, lon0);
      CHECK(std::abs(u.easting - 500000.0 - x) < 0.005);
      CHECK(std::abs(u.northing - y) < 0.005);
    }
  }
}

TEST_CASE("utm round trip and limits") {
  for (double lat = 0.5; lat < 84.0; lat += 3.1) {
    for (double lon = -179.5; lon < 180.0; lon += 13.7) {
      const GeoPoint p = GeoPoint::make(lat, lon);
      const GeoPoint q = utm_to_geo(geo_to_utm(p));
      CHECK(haversine_m(p, q) < 1e-3);
    }
  }
  CHECK_THROWS_AS(geo_to_utm(GeoPoint::make(85.0, 0.0)), ProjectionError);
  CHECK_THROWS_AS(geo_to_utm(GeoPoint::make(-10.0, 0.0)), ProjectionError);

  // The core projection handles the southern hemisphere directly.
  const auto& tm = TransverseMercator::utm_grs80();
  const auto fwd = tm.forward(-33.9, 151.2, 153.0);
  const auto inv = tm.inverse(fwd.x, fwd.y, 153.0);
  CHECK(inv.lat == doctest::Approx(-33.9).epsilon(1e-11));
  CHECK(inv.lon == doctest::Approx(151.2).epsilon(1e-11));
}

TEST_CASE("ugrid cells") {
  const UtmCoord c{10, 552200.0 + 10.0, 5271600.0 + 10.0};
  const UGridId id = utm_to_ugrid(c);
  CHECK(id.zone == 10);
  CHECK(id.easting_index() == 307);
  CHECK(id.northing_index() == 4393);
  const UtmBox b = ugrid_to_extent(id);
  CHECK(b.easting_min == 552200.0);
  CHECK(b.easting_max - b.easting_min == kUGridCellWidthM);
  CHECK(b.northing_max - b.northing_min == kUGridCellHeightM);
  CHECK(ugrid_in_zone(id));
  CHECK_FALSE(ugrid_in_zone(UGridId::from_indices(10, 0, 4393)));
}

TEST_CASE("neighbors and range queries") {
  const ZGridId z = ZGridId::from_indices(100, 200);
  const auto n = neighbors(z);
  CHECK(n.size() == 8);
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  for (auto id : n) seen.insert({id.lon_index(), id.lat_index()});
  CHECK(seen.count({99, 199}) == 1);
  CHECK(seen.count({101, 201}) == 1);
  CHECK(seen.count({100, 200}) == 0);

  // Longitude wraps at the antimeridian, latitude does not.
  CHECK(neighbors(ZGridId::from_indices(0, 0)).size() == 5);

  const GeoBox box{10.0, 10.5, 20.0, 21.0};
  const auto cells = range_cells(box);
  CHECK(cells.size() == 48u * 48u);
  for (auto id : cells) CHECK(zgrid_to_extent(id).lat_min >= 10.0 - 1e-9);

  const UtmBox ub{10, 552200.0, 552200.0 + 3 * 1800.0, 5271600.0, 5271600.0 + 2 * 1200.0};
  CHECK(range_cells(ub).size() == 6);
}

TEST_CASE("haversine") {
  // One degree of latitude on the mean sphere.
  CHECK(haversine_m(GeoPoint::make(0, 0), GeoPoint::make(1, 0)) == doctest::Approx(111195.0).epsilon(1e-3));
}
