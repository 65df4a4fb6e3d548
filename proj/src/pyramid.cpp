#include "terratile/pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>

#include "json.hpp"
#include "terratile/jpeg.hpp"
#include "terratile/light_cipher.hpp"

namespace terratile {

namespace {

using nlohmann::json;

constexpr double kDeg = std::numbers::pi / 180.0;

double require_number(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw FormatError(std::string("sidecar field missing or not a number: ") + key);
  }
  return j.at(key).get<double>();
}

std::string require_string(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw FormatError(std::string("sidecar field missing or not a string: ") + key);
  }
  return j.at(key).get<std::string>();
}

bool same_scale(double a, double b) { return std::abs(a - b) < 1e-6; }

// Merge priority: newest acquisition first, then ascending source id.
std::vector<const SourceRaster*> priority_order(std::span<const SourceRaster> sources) {
  std::vector<const SourceRaster*> order;
  for (const auto& s : sources) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(), [](const SourceRaster* a, const SourceRaster* b) {
    if (a->info.acquired != b->info.acquired) return a->info.acquired > b->info.acquired;
    return a->info.source_id < b->info.source_id;
  });
  return order;
}

void check_source(const SourceRaster& s, Theme theme, double scale) {
  if (s.info.theme != theme) throw FormatError("source theme mismatch: " + s.info.source_id);
  if (!same_scale(s.info.pixel_scale_m, scale)) {
    throw FormatError("source pixel scale mismatch: " + s.info.source_id);
  }
  if (s.pixels.rows() == 0 || s.pixels.cols() == 0 || s.pixels.rows() != s.info.height ||
      s.pixels.cols() != s.info.width) {
    throw FormatError("source raster shape does not match its sidecar: " + s.info.source_id);
  }
}

// Fills cut pixels not yet filled from one source through per-axis index maps
// (-1 = outside the source). Returns whether any pixel was taken.
bool merge_source(Gray8& cut, Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& filled,
                  const Gray8& src, const std::vector<Eigen::Index>& row_map,
                  const std::vector<Eigen::Index>& col_map) {
  bool contributed = false;
  for (Eigen::Index r = 0; r < cut.rows(); ++r) {
    const Eigen::Index sr = row_map[static_cast<std::size_t>(r)];
    if (sr < 0) continue;
    for (Eigen::Index c = 0; c < cut.cols(); ++c) {
      const Eigen::Index sc = col_map[static_cast<std::size_t>(c)];
      if (sc < 0 || filled(r, c)) continue;
      const std::uint8_t v = src(sr, sc);
      if (v == kWhite) continue;
      cut(r, c) = v;
      filled(r, c) = true;
      contributed = true;
    }
  }
  return contributed;
}

Eigen::Index map_index(double offset_px, Eigen::Index size) {
  const double f = std::floor(offset_px);
  if (f < 0 || f >= static_cast<double>(size)) return -1;
  return static_cast<Eigen::Index>(f);
}

bool boxes_overlap(const UtmBox& a, const UtmBox& b) {
  return a.easting_min < b.easting_max && b.easting_min < a.easting_max &&
         a.northing_min < b.northing_max && b.northing_min < a.northing_max;
}

bool boxes_overlap(const GeoBox& a, const GeoBox& b) {
  return a.lon_min < b.lon_max && b.lon_min < a.lon_max && a.lat_min < b.lat_max &&
         b.lat_min < a.lat_max;
}

Cut assemble(Theme theme, const GridKey& grid, CutDims dims,
             const std::vector<const SourceRaster*>& order,
             const std::function<void(const SourceInfo&, std::vector<Eigen::Index>&,
                                      std::vector<Eigen::Index>&)>& build_maps) {
  Cut cut;
  cut.theme = theme;
  cut.grid = grid;
  cut.pixels = Gray8::Constant(dims.height, dims.width, kWhite);
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> filled =
      decltype(filled)::Constant(dims.height, dims.width, false);
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(dims.height));
  std::vector<Eigen::Index> cols(static_cast<std::size_t>(dims.width));
  Date newest_touching;
  for (const SourceRaster* src : order) {
    build_maps(src->info, rows, cols);
    const bool any_row = std::any_of(rows.begin(), rows.end(), [](auto v) { return v >= 0; });
    const bool any_col = std::any_of(cols.begin(), cols.end(), [](auto v) { return v >= 0; });
    if (!any_row || !any_col) continue;
    newest_touching = std::max(newest_touching, src->info.acquired);
    if (merge_source(cut.pixels, filled, src->pixels, rows, cols)) {
      cut.sources.push_back(src->info.source_id);
      cut.acquired = std::max(cut.acquired, src->info.acquired);
    }
  }
  if (cut.acquired.empty()) cut.acquired = newest_touching;
  return cut;
}

}  // namespace

SourceInfo SourceInfo::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("sidecar is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("sidecar must be a JSON object");
  SourceInfo info;
  info.theme = parse_theme(require_string(j, "theme"));
  info.pixel_scale_m = require_number(j, "pixel_scale_m");
  info.width = static_cast<int>(require_number(j, "width"));
  info.height = static_cast<int>(require_number(j, "height"));
  if (info.width <= 0 || info.height <= 0) throw FormatError("sidecar raster size must be positive");
  info.acquired = Date::parse(require_string(j, "acquired_date"));
  info.processed = j.contains("processed_date") ? Date::parse(require_string(j, "processed_date"))
                                                : info.acquired;
  info.source_id = require_string(j, "source_id");
  if (info.source_id.empty()) throw FormatError("sidecar source_id is empty");
  info.instrument = j.value("instrument", std::string());
  info.image_type =
      j.value("image_type", std::string(info.theme == Theme::Usgs ? "JPEG" : "TIFF"));
  if (info.image_type != "JPEG" && info.image_type != "TIFF") {
    throw FormatError("sidecar image_type must be JPEG or TIFF");
  }

  if (!j.contains("anchor") || !j.at("anchor").is_object()) {
    throw FormatError("sidecar anchor missing");
  }
  const json& anchor = j.at("anchor");
  const bool utm = anchor.contains("easting");
  if (utm) {
    info.zone = static_cast<int>(require_number(anchor, "zone"));
    info.easting = require_number(anchor, "easting");
    info.northing = require_number(anchor, "northing");
  } else {
    info.lat = require_number(anchor, "lat");
    info.lon = require_number(anchor, "lon");
  }
  try {
    if (info.theme == Theme::Usgs && !utm) {
      const UtmCoord c = anchor.contains("zone")
                             ? geo_to_utm(GeoPoint::make(info.lat, info.lon),
                                          static_cast<int>(require_number(anchor, "zone")))
                             : geo_to_utm(GeoPoint::make(info.lat, info.lon));
      info.zone = c.zone;
      info.easting = c.easting;
      info.northing = c.northing;
    } else if (info.theme == Theme::Spin2 && utm) {
      const GeoPoint p = utm_to_geo({info.zone, info.easting, info.northing});
      info.lat = p.lat;
      info.lon = p.lon;
      info.zone = 0;
    } else if (info.theme == Theme::Spin2) {
      const GeoPoint p = GeoPoint::make(info.lat, info.lon);
      info.lat = p.lat;
      info.lon = p.lon;
    }
  } catch (const RangeError& e) {
    throw RangeError("source " + info.source_id + " anchor: " + e.what());
  }

  static const char* kKnown[] = {"theme",  "pixel_scale_m",  "width",      "height",
                                 "anchor", "acquired_date",  "source_id",  "processed_date",
                                 "instrument", "image_type", "attributes"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kKnown), std::end(kKnown), key) != std::end(kKnown)) continue;
    info.attributes[key] = value.is_string() ? value.get<std::string>() : value.dump();
  }
  if (j.contains("attributes") && j.at("attributes").is_object()) {
    for (const auto& [key, value] : j.at("attributes").items()) {
      info.attributes[key] = value.is_string() ? value.get<std::string>() : value.dump();
    }
  }
  return info;
}

std::string SourceInfo::to_json() const {
  json j;
  j["theme"] = std::string(terratile::to_string(theme));
  j["pixel_scale_m"] = pixel_scale_m;
  j["width"] = width;
  j["height"] = height;
  if (theme == Theme::Usgs) {
    j["anchor"] = {{"zone", zone}, {"easting", easting}, {"northing", northing}};
  } else {
    j["anchor"] = {{"lat", lat}, {"lon", lon}};
  }
  j["acquired_date"] = acquired.to_string();
  j["processed_date"] = processed.to_string();
  j["source_id"] = source_id;
  if (!instrument.empty()) j["instrument"] = instrument;
  j["image_type"] = image_type;
  if (!attributes.empty()) j["attributes"] = attributes;
  return j.dump(2);
}

double SourceInfo::degrees_per_pixel_lat() const { return pixel_scale_m / kMetersPerDegreeLat; }

double SourceInfo::degrees_per_pixel_lon() const {
  const double lat_center = lat - height * degrees_per_pixel_lat() / 2.0;
  return pixel_scale_m / (kMetersPerDegreeLat * std::max(1e-6, std::cos(lat_center * kDeg)));
}

UtmBox SourceInfo::utm_extent() const {
  return {zone, easting, easting + width * pixel_scale_m, northing - height * pixel_scale_m,
          northing};
}

GeoBox SourceInfo::geo_extent() const {
  GeoBox box;
  box.lat_max = lat;
  box.lat_min = lat - height * degrees_per_pixel_lat();
  box.lon_min = lon;
  box.lon_max = lon + width * degrees_per_pixel_lon();
  return box;
}

SourceRaster read_source(const std::filesystem::path& raw_path,
                         const std::filesystem::path& sidecar_path) {
  std::ifstream side(sidecar_path);
  if (!side) throw IoError("cannot open sidecar " + sidecar_path.string());
  const std::string text((std::istreambuf_iterator<char>(side)), std::istreambuf_iterator<char>());
  SourceRaster src;
  src.info = SourceInfo::from_json(text);

  std::ifstream raw(raw_path, std::ios::binary);
  if (!raw) throw IoError("cannot open raster " + raw_path.string());
  src.pixels.resize(src.info.height, src.info.width);
  const std::streamsize expected = static_cast<std::streamsize>(src.info.width) * src.info.height;
  raw.read(reinterpret_cast<char*>(src.pixels.data()), expected);
  if (raw.gcount() != expected || raw.peek() != std::char_traits<char>::eof()) {
    throw FormatError("raster " + raw_path.string() + " size does not match width x height");
  }
  return src;
}

void write_source(const SourceRaster& source, const std::filesystem::path& raw_path,
                  const std::filesystem::path& sidecar_path) {
  std::ofstream raw(raw_path, std::ios::binary | std::ios::trunc);
  raw.write(reinterpret_cast<const char*>(source.pixels.data()),
            static_cast<std::streamsize>(source.pixels.size()));
  std::ofstream side(sidecar_path, std::ios::trunc);
  side << source.info.to_json() << '\n';
  if (!raw || !side) throw IoError("failed writing source " + raw_path.string());
}

CutDims spin2_cut_dims(double lat_center) {
  const double lon_m = kMetersPerDegreeLat * std::cos(lat_center * kDeg);
  const int w = 5 * static_cast<int>(std::lround(lon_m / kZGridLonCellsPerDegree / kSpin2PixelScaleM / 5.0));
  const int h = 5 * static_cast<int>(
                        std::lround(kMetersPerDegreeLat / kZGridLatCellsPerDegree / kSpin2PixelScaleM / 5.0));
  return {std::max(w, 5), h};
}

CutDims cut_dims(const GridKey& grid) {
  if (grid.theme == Theme::Usgs) return {kUsgsCutWidth, kUsgsCutHeight};
  return spin2_cut_dims(zgrid_to_extent(grid.zgrid()).center().lat);
}

RowRange source_rows(const SourceInfo& info) {
  if (info.theme == Theme::Usgs) {
    const UtmBox box = info.utm_extent();
    const auto first = static_cast<std::int64_t>(std::floor(box.northing_min / kUGridCellHeightM + 1e-9));
    const auto last =
        static_cast<std::int64_t>(std::ceil(box.northing_max / kUGridCellHeightM - 1e-9)) - 1;
    return {first, last};
  }
  const GeoBox box = info.geo_extent();
  const auto first =
      static_cast<std::int64_t>(std::floor((box.lat_min + 90.0) * kZGridLatCellsPerDegree + 1e-9));
  const auto last = static_cast<std::int64_t>(
                        std::ceil((box.lat_max + 90.0) * kZGridLatCellsPerDegree - 1e-9)) - 1;
  return {first, last};
}

std::int64_t cell_row(const GridKey& grid) {
  return deinterleave(grid.morton).second;
}

std::vector<Cut> cut_usgs(std::span<const SourceRaster> sources, int zone,
                          std::optional<RowRange> rows) {
  for (const auto& s : sources) {
    check_source(s, Theme::Usgs, kUsgsPixelScaleM);
    if (s.info.zone != zone) throw FormatError("source zone mismatch: " + s.info.source_id);
  }
  std::vector<UGridId> cells;
  for (const auto& s : sources) {
    for (UGridId id : range_cells(s.info.utm_extent())) {
      if (!rows || rows->contains(id.northing_index())) cells.push_back(id);
    }
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());

  const auto order = priority_order(sources);
  std::vector<Cut> cuts;
  for (UGridId id : cells) {
    const UtmBox cell = ugrid_to_extent(id);
    std::vector<const SourceRaster*> touching;
    for (const SourceRaster* s : order) {
      if (boxes_overlap(cell, s->info.utm_extent())) touching.push_back(s);
    }
    cuts.push_back(assemble(
        Theme::Usgs, GridKey::from(id), {kUsgsCutWidth, kUsgsCutHeight}, touching,
        [&](const SourceInfo& info, std::vector<Eigen::Index>& row_map,
            std::vector<Eigen::Index>& col_map) {
          for (std::size_t c = 0; c < col_map.size(); ++c) {
            const double e = cell.easting_min + static_cast<double>(c) + 0.5;
            col_map[c] = map_index((e - info.easting) / info.pixel_scale_m, info.width);
          }
          for (std::size_t r = 0; r < row_map.size(); ++r) {
            const double n = cell.northing_max - static_cast<double>(r) - 0.5;
            row_map[r] = map_index((info.northing - n) / info.pixel_scale_m, info.height);
          }
        }));
  }
  return cuts;
}

std::vector<Cut> cut_spin2(std::span<const SourceRaster> sources, std::optional<RowRange> rows) {
  for (const auto& s : sources) check_source(s, Theme::Spin2, kSpin2PixelScaleM);
  std::vector<ZGridId> cells;
  for (const auto& s : sources) {
    for (ZGridId id : range_cells(s.info.geo_extent())) {
      if (!rows || rows->contains(id.lat_index())) cells.push_back(id);
    }
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());

  const auto order = priority_order(sources);
  std::vector<Cut> cuts;
  for (ZGridId id : cells) {
    const GeoBox cell = zgrid_to_extent(id);
    const CutDims dims = spin2_cut_dims(cell.center().lat);
    const double dlon = (cell.lon_max - cell.lon_min) / dims.width;
    const double dlat = (cell.lat_max - cell.lat_min) / dims.height;
    std::vector<const SourceRaster*> touching;
    for (const SourceRaster* s : order) {
      if (boxes_overlap(cell, s->info.geo_extent())) touching.push_back(s);
    }
    cuts.push_back(assemble(
        Theme::Spin2, GridKey::from(id), dims, touching,
        [&](const SourceInfo& info, std::vector<Eigen::Index>& row_map,
            std::vector<Eigen::Index>& col_map) {
          const double src_dlon = info.degrees_per_pixel_lon();
          const double src_dlat = info.degrees_per_pixel_lat();
          for (std::size_t c = 0; c < col_map.size(); ++c) {
            const double lon = cell.lon_min + (static_cast<double>(c) + 0.5) * dlon;
            col_map[c] = map_index((lon - info.lon) / src_dlon, info.width);
          }
          for (std::size_t r = 0; r < row_map.size(); ++r) {
            const double lat = cell.lat_max - (static_cast<double>(r) + 0.5) * dlat;
            row_map[r] = map_index((info.lat - lat) / src_dlat, info.height);
          }
        }));
  }
  return cuts;
}

std::vector<Cut> cut_sources(std::span<const SourceRaster> sources, std::optional<RowRange> rows) {
  if (sources.empty()) return {};
  if (sources.front().info.theme == Theme::Usgs) {
    return cut_usgs(sources, sources.front().info.zone, rows);
  }
  return cut_spin2(sources, rows);
}

int tile_grid(Theme theme) { return theme == Theme::Usgs ? kUsgsTileGrid : kSpin2TileGrid; }

std::vector<Gray8> slice_cut(const Cut& cut) {
  const int grid = tile_grid(cut.theme);
  return slice_grid(cut.pixels, grid, grid);
}

PyramidImages build_pyramid(const Cut& cut) {
  PyramidImages out;
  if (cut.theme == Theme::Usgs) {
    out.browse = box_downsample(cut.pixels, 8);
  } else {
    const double factor = 8.0 / kSpin2PixelScaleM;
    const auto rows = std::max<Eigen::Index>(1, std::lround(cut.pixels.rows() / factor));
    const auto cols = std::max<Eigen::Index>(1, std::lround(cut.pixels.cols() / factor));
    out.browse = resample_area(cut.pixels, rows, cols);
  }
  out.thumb = resample_area(out.browse, std::max<Eigen::Index>(1, out.browse.rows() / 2),
                            std::max<Eigen::Index>(1, out.browse.cols() / 2));
  out.jump = resample_area(out.thumb, std::max<Eigen::Index>(1, out.thumb.rows() / 2),
                           std::max<Eigen::Index>(1, out.thumb.cols() / 2));
  return out;
}

std::vector<EncodedTile> encode_cut(const Cut& cut, std::string_view key_secret) {
  std::vector<EncodedTile> out;
  const int grid = tile_grid(cut.theme);
  const auto tiles = slice_cut(cut);
  const bool encrypt = cut.theme == Theme::Spin2;
  const CipherKey key = derive_cut_key(key_secret, cut.grid, cut.acquired);
  for (int r = 0; r < grid; ++r) {
    for (int c = 0; c < grid; ++c) {
      EncodedTile t;
      t.level = Level::Tile;
      t.sub_row = r;
      t.sub_col = c;
      t.blob = encode_tile_jpeg(tiles[static_cast<std::size_t>(r * grid + c)]);
      if (encrypt) {
        t.blob = light_encrypt(t.blob, key, tile_nonce(cut.grid, Level::Tile, r, c, cut.acquired));
        t.encrypted = true;
        t.key_id = key_to_id(key);
      }
      out.push_back(std::move(t));
    }
  }
  const PyramidImages levels = build_pyramid(cut);
  const std::pair<Level, const Gray8*> coarse[] = {
      {Level::Browse, &levels.browse}, {Level::Thumb, &levels.thumb}, {Level::Jump, &levels.jump}};
  for (const auto& [level, image] : coarse) {
    EncodedTile t;
    t.level = level;
    t.blob = encode_tile_jpeg(*image);
    out.push_back(std::move(t));
  }
  return out;
}

std::string tile_file_name(const GridKey& grid, Level level, int sub_row, int sub_col) {
  return grid.to_string() + "_" + std::string(to_string(level)) + "_" + std::to_string(sub_row) +
         "_" + std::to_string(sub_col) + ".jpg";
}

void dump_cut(const Cut& cut, const std::vector<EncodedTile>& tiles,
              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& t : tiles) {
    std::vector<std::uint8_t> bytes = t.blob;
    if (t.encrypted) {
      bytes = light_decrypt(t.blob, key_from_id(t.key_id),
                            tile_nonce(cut.grid, t.level, t.sub_row, t.sub_col, cut.acquired));
    }
    std::ofstream out(dir / tile_file_name(cut.grid, t.level, t.sub_row, t.sub_col),
                      std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing dump into " + dir.string());
  }
}

}  // namespace terratile
