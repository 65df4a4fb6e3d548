#include "terratile/coverage.hpp"

#include <algorithm>
#include <cmath>

#include "terratile/common.hpp"

namespace terratile {

namespace {

struct Ring {
  const std::vector<std::pair<double, double>>* points;
  GeoBox bounds;
};

const std::vector<Ring>& rings() {
  static const std::vector<Ring> out = [] {
    std::vector<Ring> r;
    for (const auto& ring : world_outline()) {
      GeoBox b{90.0, -90.0, 180.0, -180.0};
      for (const auto& [lon, lat] : ring) {
        b.lat_min = std::min(b.lat_min, lat);
        b.lat_max = std::max(b.lat_max, lat);
        b.lon_min = std::min(b.lon_min, lon);
        b.lon_max = std::max(b.lon_max, lon);
      }
      r.push_back({&ring, b});
    }
    return r;
  }();
  return out;
}

bool inside(const std::vector<std::pair<double, double>>& ring, double lon, double lat) {
  bool in = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const auto [xi, yi] = ring[i];
    const auto [xj, yj] = ring[j];
    if ((yi > lat) != (yj > lat) && lon < (xj - xi) * (lat - yi) / (yj - yi) + xi) in = !in;
  }
  return in;
}

void paint(RgbImage& img, Eigen::Index row, Eigen::Index col, const Rgb& c) {
  img.r(row, col) = c[0];
  img.g(row, col) = c[1];
  img.b(row, col) = c[2];
}

}  // namespace

int coverage_tiles_per_side(int level) {
  if (level < 0 || level >= kCoverageLevels) {
    throw RangeError("coverage level out of range: " + std::to_string(level));
  }
  return 1 << (2 * level);
}

GeoPoint coverage_pixel_to_geo(int level, int x, int y, int px, int py) {
  const int n = coverage_tiles_per_side(level);
  if (x < 0 || x >= n || y < 0 || y >= n) throw RangeError("coverage tile out of range");
  if (px < 0 || px >= kCoverageTileWidth || py < 0 || py >= kCoverageTileHeight) {
    throw RangeError("coverage pixel out of range");
  }
  const double ppd = coverage_pixels_per_degree(level);
  const double lon = -180.0 + (x * kCoverageTileWidth + px + 0.5) / ppd;
  const double lat = 90.0 - (y * kCoverageTileHeight + py + 0.5) / ppd;
  return GeoPoint::make(lat, lon);
}

CoveragePixel geo_to_coverage_pixel(int level, const GeoPoint& p) {
  const int n = coverage_tiles_per_side(level);
  const double ppd = coverage_pixels_per_degree(level);
  const int gx = std::clamp(static_cast<int>(std::floor((p.lon + 180.0) * ppd)), 0,
                            n * kCoverageTileWidth - 1);
  const int gy = std::clamp(static_cast<int>(std::floor((90.0 - p.lat) * ppd)), 0,
                            n * kCoverageTileHeight - 1);
  return {gx / kCoverageTileWidth, gy / kCoverageTileHeight, gx % kCoverageTileWidth,
          gy % kCoverageTileHeight};
}

bool on_land(const GeoPoint& p) {
  for (const auto& r : rings()) {
    if (p.lat < r.bounds.lat_min || p.lat > r.bounds.lat_max || p.lon < r.bounds.lon_min ||
        p.lon > r.bounds.lon_max) {
      continue;
    }
    if (inside(*r.points, p.lon, p.lat)) return true;
  }
  return false;
}

GeoBox cell_geo_box(const GridKey& grid) {
  if (grid.theme == Theme::Spin2) return zgrid_to_extent(grid.zgrid());
  // UTM cell edges are curves in geographic space; sampling corners and
  // edge midpoints is plenty at coverage-map resolution.
  const UtmBox u = ugrid_to_extent(grid.ugrid());
  GeoBox b{90.0, -90.0, 180.0, -180.0};
  for (double fe : {0.0, 0.5, 1.0}) {
    for (double fn : {0.0, 0.5, 1.0}) {
      const GeoPoint g = utm_to_geo({u.zone, u.easting_min + fe * (u.easting_max - u.easting_min),
                                     u.northing_min + fn * (u.northing_max - u.northing_min)});
      b.lat_min = std::min(b.lat_min, g.lat);
      b.lat_max = std::max(b.lat_max, g.lat);
      b.lon_min = std::min(b.lon_min, g.lon);
      b.lon_max = std::max(b.lon_max, g.lon);
    }
  }
  return b;
}

RgbImage render_coverage_tile(int level, int x, int y, std::span<const GeoBox> covered) {
  const int n = coverage_tiles_per_side(level);
  if (x < 0 || x >= n || y < 0 || y >= n) throw RangeError("coverage tile out of range");
  const double ppd = coverage_pixels_per_degree(level);
  RgbImage img(kCoverageTileHeight, kCoverageTileWidth);
  for (int py = 0; py < kCoverageTileHeight; ++py) {
    for (int px = 0; px < kCoverageTileWidth; ++px) {
      const GeoPoint g = coverage_pixel_to_geo(level, x, y, px, py);
      paint(img, py, px, on_land(g) ? kCoverageLand : kCoverageOcean);
    }
  }
  const double col0 = x * kCoverageTileWidth;
  const double row0 = y * kCoverageTileHeight;
  for (const GeoBox& box : covered) {
    const double gx0 = (box.lon_min + 180.0) * ppd - col0;
    const double gx1 = (box.lon_max + 180.0) * ppd - col0;
    const double gy0 = (90.0 - box.lat_max) * ppd - row0;
    const double gy1 = (90.0 - box.lat_min) * ppd - row0;
    const int c0 = std::max(0, static_cast<int>(std::floor(gx0)));
    const int c1 = std::min(kCoverageTileWidth - 1, static_cast<int>(std::ceil(gx1)) - 1);
    const int r0 = std::max(0, static_cast<int>(std::floor(gy0)));
    const int r1 = std::min(kCoverageTileHeight - 1, static_cast<int>(std::ceil(gy1)) - 1);
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) paint(img, r, c, kCoverageGreen);
    }
  }
  return img;
}

}  // namespace terratile
