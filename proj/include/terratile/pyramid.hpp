#pragma once

// Cutting geo-anchored source rasters into grid cells ("cuts"), slicing cuts
// into full-resolution tiles, and deriving the browse/thumb/jump levels.
//
// Source rasters are north-up 8-bit grayscale, anchored at the top-left
// corner of the top-left pixel. Value 255 is no-data. Where sources overlap,
// the newer acquisition wins, ties going to the smaller source id; no-data
// pixels never overwrite. Cut pixels no source covers stay white.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "terratile/common.hpp"
#include "terratile/raster.hpp"
#include "terratile/spatial_index.hpp"

namespace terratile {

inline constexpr double kUsgsPixelScaleM = 1.0;
inline constexpr double kSpin2PixelScaleM = 1.56;
inline constexpr double kMetersPerDegreeLat = 111320.0;

inline constexpr int kUsgsCutWidth = 1800;
inline constexpr int kUsgsCutHeight = 1200;
inline constexpr int kUsgsTileGrid = 8;
inline constexpr int kSpin2TileGrid = 5;

/// Sidecar contents for one source raster. After parsing, USGS sources always
/// carry a UTM anchor and SPIN2 sources a geographic one.
struct SourceInfo {
  Theme theme = Theme::Usgs;
  double pixel_scale_m = kUsgsPixelScaleM;
  int width = 0;
  int height = 0;
  int zone = 0;
  double easting = 0.0;
  double northing = 0.0;
  double lat = 0.0;
  double lon = 0.0;
  Date acquired;
  Date processed;
  std::string source_id;
  std::string instrument;
  std::string image_type;
  std::map<std::string, std::string> attributes;

  /// Parses the JSON sidecar. Throws FormatError on missing or bad fields.
  static SourceInfo from_json(std::string_view text);
  std::string to_json() const;

  /// Geographic degrees per pixel for SPIN2 sources.
  double degrees_per_pixel_lat() const;
  double degrees_per_pixel_lon() const;

  UtmBox utm_extent() const;
  GeoBox geo_extent() const;
};

struct SourceRaster {
  SourceInfo info;
  Gray8 pixels;
};

/// Reads a raw 8-bit file and its JSON sidecar.
SourceRaster read_source(const std::filesystem::path& raw_path,
                         const std::filesystem::path& sidecar_path);
void write_source(const SourceRaster& source, const std::filesystem::path& raw_path,
                  const std::filesystem::path& sidecar_path);

/// Inclusive range of cell rows (northing index or latitude index).
struct RowRange {
  std::int64_t first = 0;
  std::int64_t last = 0;
  bool contains(std::int64_t row) const { return row >= first && row <= last; }
};

struct Cut {
  Theme theme = Theme::Usgs;
  GridKey grid;
  Gray8 pixels;
  Date acquired;
  std::vector<std::string> sources;  // contributing sources, merge priority order
};

struct CutDims {
  int width = 0;
  int height = 0;
};

/// SPIN2 cut pixel dimensions at a cell-center latitude; both are multiples of 5.
CutDims spin2_cut_dims(double lat_center);
CutDims cut_dims(const GridKey& grid);

/// Cell rows a source touches.
RowRange source_rows(const SourceInfo& info);
std::int64_t cell_row(const GridKey& grid);

std::vector<Cut> cut_usgs(std::span<const SourceRaster> sources, int zone,
                          std::optional<RowRange> rows = std::nullopt);
std::vector<Cut> cut_spin2(std::span<const SourceRaster> sources,
                           std::optional<RowRange> rows = std::nullopt);
/// Dispatches on the theme of the first source.
std::vector<Cut> cut_sources(std::span<const SourceRaster> sources,
                             std::optional<RowRange> rows = std::nullopt);

/// Tile grid side for a theme: 8 for USGS, 5 for SPIN2.
int tile_grid(Theme theme);

/// Full-resolution tiles, row-major.
std::vector<Gray8> slice_cut(const Cut& cut);

struct PyramidImages {
  Gray8 browse;  // 8 m/px
  Gray8 thumb;   // 16 m/px
  Gray8 jump;    // 32 m/px
};

PyramidImages build_pyramid(const Cut& cut);

struct EncodedTile {
  Level level = Level::Tile;
  int sub_row = 0;
  int sub_col = 0;
  std::vector<std::uint8_t> blob;
  bool encrypted = false;
  std::string key_id;
};

/// All images for one cut: the full-resolution tiles (row-major) followed by
/// browse, thumb and jump. SPIN2 full-resolution tiles are light-encrypted
/// with a key derived from key_secret.
std::vector<EncodedTile> encode_cut(const Cut& cut, std::string_view key_secret);

/// File name used by staging and the debug dump: {gridid}_{level}_{row}_{col}.jpg
std::string tile_file_name(const GridKey& grid, Level level, int sub_row, int sub_col);

/// Writes every image of the cut into dir; encrypted tiles are decrypted first
/// so the dump is viewable.
void dump_cut(const Cut& cut, const std::vector<EncodedTile>& tiles,
              const std::filesystem::path& dir);

}  // namespace terratile
