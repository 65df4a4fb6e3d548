#pragma once

// Coverage map: an equirectangular world base map, shaded green wherever a
// cell has visible imagery. Three zoom levels: planet (1 tile), continent
// (4x4 tiles) and region (16x16 tiles); every tile is 360x180 pixels with
// tile (0, 0) at the north-west corner.

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "terratile/png.hpp"
#include "terratile/spatial_index.hpp"

namespace terratile {

inline constexpr int kCoverageLevels = 3;
inline constexpr int kCoverageTileWidth = 360;
inline constexpr int kCoverageTileHeight = 180;

using Rgb = std::array<std::uint8_t, 3>;
inline constexpr Rgb kCoverageOcean{168, 198, 226};
inline constexpr Rgb kCoverageLand{222, 214, 190};
inline constexpr Rgb kCoverageGreen{34, 168, 58};

/// Tiles per side at a level: 1, 4, 16. Throws RangeError outside 0..2.
int coverage_tiles_per_side(int level);

/// Pixels per degree at a level (equal in both axes).
inline int coverage_pixels_per_degree(int level) { return coverage_tiles_per_side(level); }

struct CoveragePixel {
  int x = 0;
  int y = 0;
  int px = 0;
  int py = 0;
};

/// Geographic center of a tile pixel. Throws RangeError on bad arguments.
GeoPoint coverage_pixel_to_geo(int level, int x, int y, int px, int py);
CoveragePixel geo_to_coverage_pixel(int level, const GeoPoint& p);

/// Coarse continental outlines, (lon, lat) vertex rings.
const std::vector<std::vector<std::pair<double, double>>>& world_outline();
bool on_land(const GeoPoint& p);

/// Geographic bounding box of a grid cell of either theme.
GeoBox cell_geo_box(const GridKey& grid);

RgbImage render_coverage_tile(int level, int x, int y, std::span<const GeoBox> covered);

}  // namespace terratile
