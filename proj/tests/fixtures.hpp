#pragma once

// Synthetic inputs shared by the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "terratile/gazetteer.hpp"
#include "terratile/pyramid.hpp"
#include "terratile/store.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using namespace terratile;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("terratile-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

/// Smooth terrain-like texture plus mild noise. Never emits the no-data value.
inline Gray8 texture(int rows, int cols, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 6.283);
  std::normal_distribution<double> noise(0.0, 4.0);
  const double p1 = phase(rng), p2 = phase(rng), p3 = phase(rng);
  Gray8 img(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = 120.0 + 40.0 * std::sin(r / 37.0 + p1) * std::cos(c / 53.0 + p2) +
                       20.0 * std::sin((r + c) / 11.0 + p3) + noise(rng);
      img(r, c) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 254.0));
    }
  }
  return img;
}

/// USGS source whose top-left corner sits at (easting, northing).
inline SourceRaster usgs_source(const std::string& id, int zone, double easting, double northing,
                                int width, int height, Date acquired, std::uint32_t seed) {
  SourceRaster s;
  s.info.theme = Theme::Usgs;
  s.info.pixel_scale_m = kUsgsPixelScaleM;
  s.info.width = width;
  s.info.height = height;
  s.info.zone = zone;
  s.info.easting = easting;
  s.info.northing = northing;
  s.info.acquired = acquired;
  s.info.processed = acquired;
  s.info.source_id = id;
  s.info.instrument = "aerial camera";
  s.info.image_type = "JPEG";
  s.pixels = texture(height, width, seed);
  return s;
}

inline SourceRaster spin2_source(const std::string& id, double lat, double lon, int width,
                                 int height, Date acquired, std::uint32_t seed) {
  SourceRaster s;
  s.info.theme = Theme::Spin2;
  s.info.pixel_scale_m = kSpin2PixelScaleM;
  s.info.width = width;
  s.info.height = height;
  s.info.lat = lat;
  s.info.lon = lon;
  s.info.acquired = acquired;
  s.info.processed = acquired;
  s.info.source_id = id;
  s.info.instrument = "KVR-1000";
  s.info.image_type = "TIFF";
  s.pixels = texture(height, width, seed);
  return s;
}

/// Writes {id}.raw and {id}.json for each source plus manifest.json.
inline fs::path write_manifest(const fs::path& dir, const std::vector<SourceRaster>& sources) {
  nlohmann::json m = nlohmann::json::array();
  for (const auto& s : sources) {
    write_source(s, dir / (s.info.source_id + ".raw"), dir / (s.info.source_id + ".json"));
    m.push_back({{"path", s.info.source_id + ".raw"}, {"sidecar_path", s.info.source_id + ".json"}});
  }
  spit(dir / "manifest.json", m.dump(2));
  return dir / "manifest.json";
}

/// Three USGS cell rows (northing 4393..4395, zone 10) from two overlapping
/// sources; with one row per band this plans three bands.
inline fs::path three_band_manifest(const fs::path& dir) {
  const UtmBox sw = ugrid_to_extent(UGridId::from_indices(10, 307, 4393));
  const double top = sw.northing_min + 3 * kUGridCellHeightM;
  std::vector<SourceRaster> sources{
      usgs_source("strip-a", 10, sw.easting_min, top, 1800, 3600, Date(19970415), 11),
      usgs_source("strip-b", 10, sw.easting_min + 900, top - 1200, 1800, 2400, Date(19980520), 12)};
  return write_manifest(dir, sources);
}

/// A cut built directly from random pixels (no source geometry involved).
inline Cut random_cut(Theme theme, std::mt19937& rng) {
  Cut cut;
  cut.theme = theme;
  cut.acquired = Date(19980000 + 100 * static_cast<int>(rng() % 12 + 1) + static_cast<int>(rng() % 28 + 1));
  if (theme == Theme::Usgs) {
    const std::uint32_t e = 100 + rng() % 300;
    const std::uint32_t n = 3000 + rng() % 3000;
    cut.grid = GridKey::from(UGridId::from_indices(static_cast<int>(1 + rng() % 60), e, n));
  } else {
    cut.grid = GridKey::from(ZGridId::from_indices(rng() % kZGridLonCells, 4000 + rng() % 9000));
  }
  const CutDims d = cut_dims(cut.grid);
  cut.pixels.resize(d.height, d.width);
  for (Eigen::Index i = 0; i < cut.pixels.size(); ++i) cut.pixels.data()[i] = static_cast<std::uint8_t>(rng());
  cut.sources = {"random"};
  return cut;
}

/// Store batch for one cut: every pyramid tile plus its image and source records.
inline LoadBatch batch_for(const Cut& cut, const std::string& source) {
  LoadBatch b;
  std::string key_id;
  for (auto& t : encode_cut(cut, "secret")) {
    TileRecord r;
    r.key = {cut.grid, t.level, static_cast<std::uint8_t>(t.sub_row), static_cast<std::uint8_t>(t.sub_col),
             cut.acquired};
    r.blob = std::move(t.blob);
    r.encrypted = t.encrypted;
    r.key_id = t.key_id;
    if (!t.key_id.empty()) key_id = t.key_id;
    b.tiles.push_back(std::move(r));
  }
  ImageMetaRecord m;
  m.grid = cut.grid;
  m.acquired = cut.acquired;
  m.source = source;
  m.key_id = key_id;
  b.images.push_back(m);
  OriginalMetadataRecord o;
  o.source_id = source;
  o.img_source = cut.theme;
  o.acquired_date = cut.acquired;
  o.processed_date = cut.acquired;
  o.resolution = cut.theme == Theme::Usgs ? 1.0 : 1.56;
  o.width = static_cast<std::uint32_t>(cut.pixels.cols());
  o.height = static_cast<std::uint32_t>(cut.pixels.rows());
  o.attributes = {{"camera", "test"}};
  b.originals.push_back(o);
  return b;
}

inline Cut cut_at(Theme theme, GridKey grid, Date acquired, std::uint32_t seed) {
  Cut c;
  c.theme = theme;
  c.grid = grid;
  c.acquired = acquired;
  const CutDims d = cut_dims(grid);
  c.pixels = texture(d.height, d.width, seed);
  c.sources = {"s"};
  return c;
}

// Gazetteer fixture: a small alias table and places whose names share
// prefixes often enough that prefix searches return multi-page results.
inline constexpr const char* kGazetteerHeader =
    "@country|USA|United States\n"
    "@country|USA|US\n"
    "@country|CAN|Canada\n"
    "@country|MEX|Mexico\n"
    "@country|FRA|France\n"
    "@state|USA|WA|Washington\n"
    "@state|USA|CA|California\n"
    "@state|USA|TX|Texas\n"
    "@state|USA|NY|New York\n"
    "@state|CAN|BC|British Columbia\n"
    "@state|CAN|ON|Ontario\n"
    "@state|MEX|JAL|Jalisco\n";

struct GazetteerFixture {
  std::string text;
  std::vector<std::string> countries{"USA", "CAN", "MEX", "FRA"};
  std::vector<std::vector<std::string>> states{{"WA", "CA", "TX", "NY"}, {"BC", "ON"}, {"JAL"}, {}};
  std::vector<std::string> syllables{"san", "ta", "mon", "ri", "ver", "lake", "port", "ash", "el", "o"};
};

inline std::string random_name(std::mt19937& rng, const std::vector<std::string>& syl) {
  std::string s;
  const int n = 1 + static_cast<int>(rng() % 3);
  for (int i = 0; i < n; ++i) s += syl[rng() % syl.size()];
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  if (rng() % 4 == 0) s += " " + syl[rng() % syl.size()];
  return s;
}

/// `places` distinct place ids; about one in five has an alternate spelling,
/// which becomes a second record.
inline GazetteerFixture synthetic_gazetteer(int places, std::uint32_t seed) {
  GazetteerFixture f;
  std::mt19937 rng(seed);
  std::ostringstream out;
  out << kGazetteerHeader;
  std::uniform_real_distribution<double> lat(20.0, 60.0);
  std::uniform_real_distribution<double> lon(-125.0, -70.0);
  for (int i = 0; i < places; ++i) {
    const std::size_t ci = rng() % f.countries.size();
    const auto& st = f.states[ci];
    const std::string state = st.empty() ? "" : st[rng() % st.size()];
    const std::string name = random_name(rng, f.syllables);
    const int type = 1 + static_cast<int>(rng() % 12);
    char coords[64];
    std::snprintf(coords, sizeof coords, "%.5f|%.5f", lat(rng), lon(rng));
    out << (1000 + i) << '|' << name << '|' << name << '|' << f.countries[ci] << '|' << state << '|'
        << type << '|' << coords << '\n';
    if (rng() % 5 == 0) {
      out << (1000 + i) << '|' << name << '|' << random_name(rng, f.syllables) << '|' << f.countries[ci]
          << '|' << state << '|' << type << '|' << coords << '\n';
    }
  }
  f.text = out.str();
  return f;
}

}  // namespace fixtures
