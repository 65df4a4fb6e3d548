#include "terratile/server.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "terratile/coverage.hpp"
#include "terratile/gazetteer.hpp"
#include "terratile/light_cipher.hpp"
#include "terratile/loader.hpp"
#include "terratile/png.hpp"
#include "terratile/pyramid.hpp"
#include "terratile/store.hpp"

// After the Eigen-based headers: <resolv.h> defines an _res macro.
#include "httplib.h"

namespace terratile {

using nlohmann::json;

namespace {

class BadRequest : public Error {
 public:
  using Error::Error;
};

HttpResponse json_response(int status, const json& body) {
  HttpResponse r;
  r.status = status;
  r.body = body.dump();
  return r;
}

HttpResponse error_response(int status, std::string_view message) {
  return json_response(status, json{{"error", message}});
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t at = 0;
  while (true) {
    const std::size_t next = text.find(sep, at);
    out.push_back(text.substr(at, next - at));
    if (next == std::string_view::npos) break;
    at = next + 1;
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (text.empty() || res.ec != std::errc() || res.ptr != end) return std::nullopt;
  return value;
}

std::optional<double> parse_double(std::string_view text) {
  auto v = parse_number<double>(text);
  if (v && !std::isfinite(*v)) return std::nullopt;
  return v;
}

std::optional<std::string> param(const HttpRequest& req, const std::string& name) {
  const auto it = req.query.find(name);
  if (it == req.query.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

template <typename T>
std::optional<T> number_param(const HttpRequest& req, const std::string& name) {
  const auto text = param(req, name);
  if (!text) return std::nullopt;
  std::optional<T> v;
  if constexpr (std::is_floating_point_v<T>) {
    v = parse_double(*text);
  } else {
    v = parse_number<T>(*text);
  }
  if (!v) throw BadRequest("bad " + name + ": " + *text);
  return v;
}

std::string format_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.7f", v);
  return buf;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a / b - ((a % b != 0) && ((a < 0) != (b < 0)));
}

std::int64_t floor_mod(std::int64_t a, std::int64_t b) { return a - floor_div(a, b) * b; }

Level coarser(Level l) { return static_cast<Level>(static_cast<int>(l) + 1); }
Level finer(Level l) { return static_cast<Level>(static_cast<int>(l) - 1); }

constexpr std::string_view kSizeNames[] = {"small", "medium", "large"};

// Unit geometry of one (theme, level, zone) view grid.
struct UnitFrame {
  Theme theme = Theme::Usgs;
  Level level = Level::Tile;
  int zone = 0;
  int per_cell = 1;

  double unit_w() const {
    return theme == Theme::Usgs ? kUGridCellWidthM / per_cell
                                : 1.0 / (kZGridLonCellsPerDegree * per_cell);
  }
  double unit_h() const {
    return theme == Theme::Usgs ? kUGridCellHeightM / per_cell
                                : 1.0 / (kZGridLatCellsPerDegree * per_cell);
  }

  // Continuous unit coordinates of a point; throws ProjectionError when a
  // USGS frame cannot represent it.
  std::pair<double, double> to_units(const GeoPoint& p) const {
    if (theme == Theme::Usgs) {
      const UtmCoord u = geo_to_utm(p, zone);
      return {(u.easting + kUGridEastingOffsetM) / unit_w(), u.northing / unit_h()};
    }
    return {(p.lon + 180.0) / unit_w(), (p.lat + 90.0) / unit_h()};
  }

  std::optional<GeoPoint> to_geo(double x, double y) const {
    try {
      if (theme == Theme::Usgs) {
        return utm_to_geo({zone, x * unit_w() - kUGridEastingOffsetM, y * unit_h()});
      }
      const double lat = y * unit_h() - 90.0;
      if (lat < -90.0 || lat > 90.0) return std::nullopt;
      return GeoPoint::make(lat, x * unit_w() - 180.0);
    } catch (const Error&) {
      return std::nullopt;
    }
  }

  struct Slot {
    GridKey grid;
    int sub_row = 0;
    int sub_col = 0;
  };

  std::optional<Slot> slot(std::int64_t x, std::int64_t y) const {
    const std::int64_t cy = floor_div(y, per_cell);
    std::int64_t cx = floor_div(x, per_cell);
    const int sub_col = static_cast<int>(floor_mod(x, per_cell));
    const int sub_row = per_cell - 1 - static_cast<int>(floor_mod(y, per_cell));
    if (cy < 0) return std::nullopt;
    if (theme == Theme::Spin2) {
      if (cy >= kZGridLatCells) return std::nullopt;
      cx = floor_mod(cx, kZGridLonCells);
      return Slot{GridKey::from(ZGridId::from_indices(static_cast<std::uint32_t>(cx),
                                                      static_cast<std::uint32_t>(cy))),
                  sub_row, sub_col};
    }
    if (cx < 0 || cx >= kMortonAxisLimit || cy >= kMortonAxisLimit) return std::nullopt;
    const UGridId id = UGridId::from_indices(zone, static_cast<std::uint32_t>(cx),
                                             static_cast<std::uint32_t>(cy));
    if (!ugrid_in_zone(id)) return std::nullopt;
    return Slot{GridKey::from(id), sub_row, sub_col};
  }
};

std::string page_url(Theme theme, Level level, ViewSize size) {
  return "/page?theme=" + std::string(to_string(theme)) + "&level=" +
         std::string(to_string(level)) + "&size=" + std::string(to_string(size));
}

std::string page_url(Theme theme, Level level, ViewSize size, const GeoPoint& p) {
  return page_url(theme, level, size) + "&lat=" + format_coord(p.lat) + "&lon=" + format_coord(p.lon);
}

std::string page_url(const UnitFrame& f, ViewSize size, std::int64_t x, std::int64_t y) {
  std::string url = page_url(f.theme, f.level, size);
  if (f.theme == Theme::Usgs) url += "&zone=" + std::to_string(f.zone);
  return url + "&x=" + std::to_string(x) + "&y=" + std::to_string(y);
}

std::string tile_url(const GridKey& grid, Level level, int row, int col) {
  return "/tile/" + std::string(to_string(grid.theme)) + "/" + std::string(to_string(level)) + "/" +
         grid.to_string() + "/" + std::to_string(row) + "/" + std::to_string(col);
}

json extent_json(const GridKey& grid) {
  if (grid.theme == Theme::Spin2) {
    const GeoBox b = zgrid_to_extent(grid.zgrid());
    return {{"lat_min", b.lat_min}, {"lat_max", b.lat_max}, {"lon_min", b.lon_min},
            {"lon_max", b.lon_max}};
  }
  const UtmBox b = ugrid_to_extent(grid.ugrid());
  return {{"zone", b.zone},
          {"easting_min", b.easting_min},
          {"easting_max", b.easting_max},
          {"northing_min", b.northing_min},
          {"northing_max", b.northing_max}};
}

std::optional<GridKey> cell_at(Theme theme, const GeoPoint& p, int zone) {
  try {
    if (theme == Theme::Spin2) return GridKey::from(geo_to_zgrid(p));
    const UGridId id = utm_to_ugrid(geo_to_utm(p, zone));
    if (!ugrid_in_zone(id)) return std::nullopt;
    return GridKey::from(id);
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string content_type_for(const std::filesystem::path& p) {
  const std::string ext = ascii_lower(p.extension().string());
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string_view to_string(ViewSize size) { return kSizeNames[static_cast<int>(size)]; }

ViewSize parse_view_size(std::string_view text) {
  for (int i = 0; i < 3; ++i) {
    if (kSizeNames[i] == text) return static_cast<ViewSize>(i);
  }
  throw FormatError("unknown view size: " + std::string(text));
}

ViewDims view_dims(Level level, ViewSize size) {
  static constexpr int kSmallSide[kLevelCount] = {2, 2, 4, 8};
  const int s = kSmallSide[static_cast<int>(level)];
  switch (size) {
    case ViewSize::Small:
      return {s, s};
    case ViewSize::Medium:
      return {2 * s, s};
    case ViewSize::Large:
      return {2 * s, 2 * s};
  }
  return {s, s};
}

int units_per_cell(Theme theme, Level level) {
  return level == Level::Tile ? tile_grid(theme) : 1;
}

ServerConfig ServerConfig::from_json(std::string_view text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw FormatError("server config is not a JSON object");
  ServerConfig c;
  try {
    c.listen = j.value("listen", c.listen);
    c.port = j.value("port", c.port);
    c.store_root = j.value("store_root", c.store_root.string());
    c.gazetteer_path = j.value("gazetteer_path", std::string());
    c.admin_token = j.value("admin_token", std::string());
    c.work_dir = j.value("work_dir", std::string());
    c.ui_dir = j.value("ui_dir", std::string());
  } catch (const json::exception& e) {
    throw FormatError(std::string("server config: ") + e.what());
  }
  return c;
}

ServerConfig ServerConfig::from_file(const std::filesystem::path& path) {
  ServerConfig c = from_json(read_file(path));
  // Relative paths in a config file are relative to the file.
  const auto base = path.parent_path();
  for (auto* p : {&c.store_root, &c.gazetteer_path, &c.work_dir, &c.ui_dir}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return c;
}

void ServerConfig::apply_env() {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  if (auto v = env("TERRATILE_LISTEN")) listen = *v;
  if (auto v = env("TERRATILE_PORT")) {
    const auto p = parse_number<int>(*v);
    if (!p || *p <= 0 || *p > 65535) throw FormatError("bad TERRATILE_PORT: " + *v);
    port = *p;
  }
  if (auto v = env("TERRATILE_STORE_ROOT")) store_root = *v;
  if (auto v = env("TERRATILE_GAZETTEER")) gazetteer_path = *v;
  if (auto v = env("TERRATILE_ADMIN_TOKEN")) admin_token = *v;
  if (auto v = env("TERRATILE_WORK_DIR")) work_dir = *v;
  if (auto v = env("TERRATILE_UI_DIR")) ui_dir = *v;
}

HttpRequest parse_target(std::string_view method, std::string_view target) {
  HttpRequest req;
  req.method = std::string(method);
  const std::size_t q = target.find('?');
  req.path = httplib::detail::decode_url(std::string(target.substr(0, q)), false);
  if (q != std::string_view::npos) {
    httplib::Params params;
    httplib::detail::parse_query_text(std::string(target.substr(q + 1)), params);
    for (const auto& [k, v] : params) req.query.emplace(k, v);
  }
  return req;
}

TileService::TileService(Store& store, Gazetteer* gazetteer, ServerConfig config)
    : store_(store), gazetteer_(gazetteer), config_(std::move(config)) {}

std::size_t TileService::sync_gazetteer() {
  if (!gazetteer_) return 0;
  std::vector<ImageRegistration> regs;
  for (const auto& m : store_.all_image_metas()) {
    if (m.visible) regs.push_back({m.grid, m.acquired});
  }
  return gazetteer_->register_images(regs);
}

HttpResponse TileService::handle(const HttpRequest& req) {
  const std::string_view path = req.path;
  auto after = [&](std::string_view prefix) -> std::optional<std::string_view> {
    if (path.substr(0, prefix.size()) != prefix) return std::nullopt;
    return path.substr(prefix.size());
  };
  const bool is_get = req.method == "GET" || req.method == "HEAD";
  const bool is_post = req.method == "POST";
  try {
    if (auto rest = after("/tile/")) {
      return is_get ? tile(req, *rest) : error_response(405, "method not allowed");
    }
    if (path == "/page") return is_get ? page(req) : error_response(405, "method not allowed");
    if (path == "/gazetteer") {
      return is_get ? gazetteer(req) : error_response(405, "method not allowed");
    }
    if (auto rest = after("/coverage/")) {
      return is_get ? coverage(*rest) : error_response(405, "method not allowed");
    }
    if (path == "/coverage_nav") {
      return is_get ? coverage_nav(req) : error_response(405, "method not allowed");
    }
    if (path == "/picks") {
      return is_get || is_post ? picks(req) : error_response(405, "method not allowed");
    }
    if (path == "/admin/progress") {
      return is_get ? progress(req) : error_response(405, "method not allowed");
    }
    if (path == "/admin/hide") return is_post ? hide(req) : error_response(405, "method not allowed");
    if (path == "/ui") {
      HttpResponse r;
      r.status = 301;
      r.headers["Location"] = "/ui/";
      return r;
    }
    if (auto rest = after("/ui/")) return is_get ? ui(*rest) : error_response(405, "method not allowed");
    if (auto rest = after("/download/")) {
      return error_response(501, "original imagery download is not available");
    }
    if (path == "/") {
      HttpResponse r;
      r.status = 302;
      r.headers["Location"] = "/ui/";
      return r;
    }
    return error_response(404, "no such endpoint");
  } catch (const BadRequest& e) {
    return error_response(400, e.what());
  } catch (const FormatError& e) {
    return error_response(400, e.what());
  } catch (const QueryError& e) {
    return error_response(400, e.what());
  } catch (const RangeError& e) {
    return error_response(400, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

HttpResponse TileService::tile(const HttpRequest& req, std::string_view rest) {
  const auto parts = split(rest, '/');
  if (parts.size() != 5) throw BadRequest("expected /tile/{theme}/{level}/{gridid}/{row}/{col}");
  const Theme theme = parse_theme(parts[0]);
  const Level level = parse_level(parts[1]);
  const GridKey grid = GridKey::parse(theme, parts[2]);
  const auto row = parse_number<int>(parts[3]);
  const auto col = parse_number<int>(parts[4]);
  if (!row || !col) throw BadRequest("bad tile row/col");
  std::optional<Date> date;
  if (auto d = param(req, "date")) date = Date::parse(*d);
  const int side = units_per_cell(theme, level);
  if (*row < 0 || *col < 0 || *row >= side || *col >= side) {
    return error_response(404, "no such tile");
  }
  const auto rec = store_.get_tile(grid, level, *row, *col, date);
  if (!rec) return error_response(404, "no such tile");

  HttpResponse r;
  r.content_type = "image/jpeg";
  const std::string etag = "\"" + grid.to_string() + "-" + std::string(to_string(level)) + "-" +
                           std::to_string(*row) + "-" + std::to_string(*col) + "-" +
                           std::to_string(rec->key.acquired.value()) + "\"";
  r.headers["ETag"] = etag;
  // A dated URL names one immutable acquisition; an undated one follows the
  // latest visible image and has to be revalidated.
  r.headers["Cache-Control"] = date ? "public, max-age=31536000, immutable" : "no-cache";
  const auto inm = req.headers.find("if-none-match");
  if (inm != req.headers.end() && inm->second == etag) {
    r.status = 304;
    return r;
  }
  if (rec->encrypted) {
    const CipherKey key = key_from_id(rec->key_id);
    const auto plain = light_decrypt(rec->blob, key,
                                     tile_nonce(grid, level, *row, *col, rec->key.acquired));
    r.body.assign(plain.begin(), plain.end());
  } else {
    r.body.assign(rec->blob.begin(), rec->blob.end());
  }
  return r;
}

HttpResponse TileService::page(const HttpRequest& req) {
  const auto theme_text = param(req, "theme");
  if (!theme_text) throw BadRequest("theme is required");
  UnitFrame f;
  f.theme = parse_theme(*theme_text);
  f.level = parse_level(param(req, "level").value_or("tile"));
  f.per_cell = units_per_cell(f.theme, f.level);
  const ViewSize size = parse_view_size(param(req, "size").value_or("small"));
  const ViewDims dims = view_dims(f.level, size);

  const auto lat = number_param<double>(req, "lat");
  const auto lon = number_param<double>(req, "lon");
  const auto ox = number_param<std::int64_t>(req, "x");
  const auto oy = number_param<std::int64_t>(req, "y");
  const auto zone = number_param<int>(req, "zone");
  if (zone && (*zone < 1 || *zone > 60)) throw BadRequest("zone out of range");

  std::optional<GeoPoint> requested;
  std::int64_t x0 = 0;
  std::int64_t y0 = 0;
  bool in_coverage = true;
  if (ox && oy) {
    if (f.theme == Theme::Usgs && !zone) throw BadRequest("zone is required with x/y");
    f.zone = zone.value_or(0);
    x0 = *ox;
    y0 = *oy;
  } else if (lat && lon) {
    if (*lat < -90.0 || *lat > 90.0 || *lon < -180.0 || *lon > 180.0) {
      throw BadRequest("lat/lon out of range");
    }
    requested = GeoPoint::make(*lat, *lon);
    if (f.theme == Theme::Usgs) f.zone = zone.value_or(utm_zone_for_longitude(requested->lon));
    try {
      const auto [fx, fy] = f.to_units(*requested);
      x0 = static_cast<std::int64_t>(std::floor(fx - dims.cols / 2.0 + 0.5));
      y0 = static_cast<std::int64_t>(std::floor(fy - dims.rows / 2.0 + 0.5));
    } catch (const ProjectionError&) {
      in_coverage = false;
    }
  } else {
    throw BadRequest("either lat&lon or x&y is required");
  }

  json d;
  d["theme"] = to_string(f.theme);
  d["level"] = to_string(f.level);
  d["size"] = to_string(size);
  d["cols"] = dims.cols;
  d["rows"] = dims.rows;
  d["zone"] = f.theme == Theme::Usgs ? json(f.zone) : json(nullptr);

  std::optional<GeoPoint> center_point;
  if (in_coverage) {
    center_point = f.to_geo(x0 + dims.cols / 2.0, y0 + dims.rows / 2.0);
    d["origin"] = {{"x", x0}, {"y", y0}};
  } else {
    d["origin"] = nullptr;
  }
  const std::optional<GeoPoint> focus = requested ? requested : center_point;
  std::optional<GridKey> center_cell;
  if (in_coverage && focus) center_cell = cell_at(f.theme, *focus, f.zone);

  json center = json::object();
  if (focus) {
    center["lat"] = focus->lat;
    center["lon"] = focus->lon;
  }
  if (center_cell) {
    center["gridid"] = center_cell->to_string();
    center["extent"] = extent_json(*center_cell);
    store_.record_hit(HitKind::GridRequest,
                      std::string(to_string(f.theme)) + ":" + center_cell->to_string());
  } else {
    center["gridid"] = nullptr;
  }
  d["center"] = center;

  json place = nullptr;
  if (center_cell && gazetteer_) {
    if (auto p = gazetteer_->nearest_place(*center_cell)) {
      place = {{"name", p->name}, {"place_id", p->place_id}, {"country", p->country},
               {"state", p->state}, {"lat", p->lat}, {"lon", p->lon}};
    }
  }
  d["place"] = place;

  json tiles = json::array();
  for (int r = 0; r < dims.rows; ++r) {
    for (int c = 0; c < dims.cols; ++c) {
      const std::int64_t x = x0 + c;
      const std::int64_t y = y0 + dims.rows - 1 - r;
      json slot{{"x", x}, {"y", y}, {"present", false}, {"url", nullptr}, {"gridid", nullptr}};
      const auto s = in_coverage ? f.slot(x, y) : std::nullopt;
      if (s) {
        slot["gridid"] = s->grid.to_string();
        slot["row"] = s->sub_row;
        slot["col"] = s->sub_col;
        std::string url = tile_url(s->grid, f.level, s->sub_row, s->sub_col);
        if (auto rec = store_.get_tile(s->grid, f.level, s->sub_row, s->sub_col)) {
          slot["present"] = true;
          slot["date"] = rec->key.acquired.to_string();
          url += "?date=" + std::to_string(rec->key.acquired.value());
        }
        slot["url"] = url;
      }
      tiles.push_back(std::move(slot));
    }
  }
  d["tiles"] = std::move(tiles);

  json nav = json::object();
  if (in_coverage) {
    const int hx = dims.cols / 2;
    const int hy = dims.rows / 2;
    nav["north"] = page_url(f, size, x0, y0 + hy);
    nav["south"] = page_url(f, size, x0, y0 - hy);
    nav["east"] = page_url(f, size, x0 + hx, y0);
    nav["west"] = page_url(f, size, x0 - hx, y0);
  }
  if (focus) {
    nav["zoom_in"] = f.level == Level::Tile ? json(nullptr)
                                            : json(page_url(f.theme, finer(f.level), size, *focus));
    nav["zoom_out"] = f.level == Level::Jump
                          ? json(nullptr)
                          : json(page_url(f.theme, coarser(f.level), size, *focus));
    const Theme other = f.theme == Theme::Usgs ? Theme::Spin2 : Theme::Usgs;
    nav["theme"] = page_url(other, f.level, size, *focus);
    json sizes = json::object();
    for (ViewSize vs : {ViewSize::Small, ViewSize::Medium, ViewSize::Large}) {
      sizes[std::string(to_string(vs))] = page_url(f.theme, f.level, vs, *focus);
    }
    nav["sizes"] = sizes;
  }
  d["nav"] = nav;
  d["download_url"] = center_cell ? json("/download/" + std::string(to_string(f.theme)) + "/" +
                                         center_cell->to_string())
                                  : json(nullptr);
  return json_response(200, d);
}

HttpResponse TileService::gazetteer(const HttpRequest& req) {
  if (!gazetteer_) return error_response(503, "no gazetteer loaded");
  SearchCriteria c;
  c.name = param(req, "place");
  c.state = param(req, "state");
  c.country = param(req, "country");
  c.feature_type = param(req, "type");
  c.cursor = param(req, "cursor");
  std::string hit_key;
  for (const auto& [k, v] : {std::pair{"place", c.name}, std::pair{"state", c.state},
                             std::pair{"country", c.country}, std::pair{"type", c.feature_type}}) {
    if (!v) continue;
    if (!hit_key.empty()) hit_key += '&';
    hit_key += std::string(k) + "=" + ascii_lower(*v);
  }
  const SearchPage page = gazetteer_->search(c);
  store_.record_hit(HitKind::GazetteerRequest, hit_key);

  json rows = json::array();
  for (const Place& p : page.rows) {
    json links = json::object();
    const GeoPoint at = GeoPoint::make(p.lat, p.lon);
    if (!p.usgs_date.empty()) links["usgs"] = page_url(Theme::Usgs, Level::Tile, ViewSize::Small, at);
    if (!p.spin2_date.empty()) {
      links["spin2"] = page_url(Theme::Spin2, Level::Tile, ViewSize::Small, at);
    }
    rows.push_back({{"place_id", p.place_id},
                    {"name", p.name},
                    {"alternate_name", p.alternate_name},
                    {"country", p.country},
                    {"state", p.state},
                    {"feature_type", p.feature_type},
                    {"feature_type_name", feature_type_name(p.feature_type)},
                    {"lat", p.lat},
                    {"lon", p.lon},
                    {"image_flag", p.image_flag()},
                    {"usgs_date", p.usgs_date.empty() ? json(nullptr) : json(p.usgs_date.to_string())},
                    {"spin2_date",
                     p.spin2_date.empty() ? json(nullptr) : json(p.spin2_date.to_string())},
                    {"links", links}});
  }
  return json_response(200, {{"rows", rows},
                             {"next_cursor", page.next_cursor ? json(*page.next_cursor) : json(nullptr)},
                             {"index", to_string(page.index)}});
}

HttpResponse TileService::coverage(std::string_view rest) {
  const auto parts = split(rest, '/');
  if (parts.size() != 3) throw BadRequest("expected /coverage/{level}/{x}/{y}");
  std::string_view ytext = parts[2];
  if (ytext.size() > 4 && ytext.substr(ytext.size() - 4) == ".png") ytext.remove_suffix(4);
  const auto level = parse_number<int>(parts[0]);
  const auto x = parse_number<int>(parts[1]);
  const auto y = parse_number<int>(ytext);
  if (!level || !x || !y) throw BadRequest("bad coverage tile address");
  if (*level < 0 || *level >= kCoverageLevels) return error_response(404, "no such coverage level");
  const int n = coverage_tiles_per_side(*level);
  if (*x < 0 || *y < 0 || *x >= n || *y >= n) return error_response(404, "no such coverage tile");

  std::set<GridKey> cells;
  for (const auto& m : store_.all_image_metas()) {
    if (m.visible) cells.insert(m.grid);
  }
  std::vector<GeoBox> boxes;
  boxes.reserve(cells.size());
  for (const GridKey& g : cells) boxes.push_back(cell_geo_box(g));
  const auto png = encode_png(render_coverage_tile(*level, *x, *y, boxes));
  HttpResponse r;
  r.content_type = "image/png";
  r.body.assign(png.begin(), png.end());
  r.headers["Cache-Control"] = "no-cache";
  return r;
}

HttpResponse TileService::coverage_nav(const HttpRequest& req) {
  const auto level = number_param<int>(req, "level");
  const auto x = number_param<int>(req, "x");
  const auto y = number_param<int>(req, "y");
  const auto px = number_param<int>(req, "px");
  const auto py = number_param<int>(req, "py");
  if (!level || !x || !y || !px || !py) throw BadRequest("level, x, y, px and py are required");
  if (*level < 0 || *level >= kCoverageLevels) return error_response(404, "no such coverage level");
  const GeoPoint g = coverage_pixel_to_geo(*level, *x, *y, *px, *py);
  json links{{"spin2", page_url(Theme::Spin2, Level::Jump, ViewSize::Small, g)}};
  if (g.lat >= 0.0 && g.lat <= kUtmMaxLatitude) {
    links["usgs"] = page_url(Theme::Usgs, Level::Jump, ViewSize::Small, g);
  }
  return json_response(200, {{"lat", g.lat}, {"lon", g.lon}, {"links", links}});
}

bool TileService::authorized(const HttpRequest& req) const {
  if (config_.admin_token.empty()) return false;
  const auto it = req.headers.find("authorization");
  return it != req.headers.end() && it->second == "Bearer " + config_.admin_token;
}

HttpResponse TileService::picks(const HttpRequest& req) {
  if (req.method == "POST") {
    if (!authorized(req)) return error_response(401, "admin token required");
    const json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw BadRequest("body must be a JSON object");
    PickRecord pick;
    try {
      const Theme theme = parse_theme(body.at("theme").get<std::string>());
      pick.grid = GridKey::parse(theme, body.at("gridid").get<std::string>());
      pick.title = body.at("title").get<std::string>();
      pick.caption = body.value("caption", std::string());
    } catch (const json::exception& e) {
      throw BadRequest(std::string("bad pick: ") + e.what());
    }
    try {
      store_.add_pick(pick);
    } catch (const InvariantError& e) {
      return error_response(409, e.what());
    }
    return json_response(201, {{"ok", true}});
  }
  json out = json::array();
  for (const PickRecord& p : store_.picks()) {
    if (!store_.has_visible_imagery(p.grid)) continue;
    const GeoPoint c = cell_center(p.grid);
    out.push_back({{"title", p.title},
                   {"theme", to_string(p.grid.theme)},
                   {"gridid", p.grid.to_string()},
                   {"caption", p.caption},
                   {"page_url", page_url(p.grid.theme, Level::Browse, ViewSize::Small, c)}});
  }
  return json_response(200, out);
}

HttpResponse TileService::progress(const HttpRequest&) {
  if (config_.work_dir.empty() || !std::filesystem::exists(config_.work_dir / "plan.json")) {
    return error_response(404, "no load in progress");
  }
  HttpResponse r;
  r.body = load_progress(config_.work_dir).to_json();
  return r;
}

HttpResponse TileService::hide(const HttpRequest& req) {
  if (!authorized(req)) return error_response(401, "admin token required");
  const json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) throw BadRequest("body must be a JSON object");
  Theme theme = Theme::Usgs;
  std::vector<GridKey> cells;
  bool visible = false;
  try {
    theme = parse_theme(body.at("theme").get<std::string>());
    for (const auto& id : body.at("gridIds")) cells.push_back(GridKey::parse(theme, id.get<std::string>()));
    visible = body.value("visible", false);
  } catch (const json::exception& e) {
    throw BadRequest(std::string("bad hide request: ") + e.what());
  }
  const std::size_t changed = store_.hide_region(theme, cells, visible);
  return json_response(200, {{"changed", changed}});
}

HttpResponse TileService::ui(std::string_view rest) {
  if (config_.ui_dir.empty()) return error_response(404, "no ui configured");
  std::filesystem::path rel;
  for (std::string_view part : split(rest, '/')) {
    if (part.empty() || part == ".") continue;
    if (part == "..") return error_response(404, "not found");
    rel /= std::string(part);
  }
  std::filesystem::path file = config_.ui_dir / rel;
  if (std::filesystem::is_directory(file)) file /= "index.html";
  if (!std::filesystem::is_regular_file(file)) return error_response(404, "not found");
  HttpResponse r;
  r.content_type = content_type_for(file);
  r.body = read_file(file);
  return r;
}

int serve(const ServerConfig& config, std::ostream& log) {
  Store store(config.store_root);
  std::optional<Gazetteer> gaz;
  if (!config.gazetteer_path.empty()) gaz = Gazetteer::load(config.gazetteer_path);
  TileService service(store, gaz ? &*gaz : nullptr, config);
  const std::size_t synced = service.sync_gazetteer();

  std::mutex log_mutex;
  auto handler = [&](const httplib::Request& in, httplib::Response& out) {
    const auto start = std::chrono::steady_clock::now();
    HttpRequest req;
    req.method = in.method;
    req.path = in.path;
    for (const auto& [k, v] : in.params) req.query.emplace(k, v);
    for (const auto& [k, v] : in.headers) req.headers.emplace(ascii_lower(k), v);
    req.body = in.body;
    const HttpResponse res = service.handle(req);
    out.status = res.status;
    for (const auto& [k, v] : res.headers) out.set_header(k, v);
    out.set_content(res.body, res.content_type);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char ts[32];
    std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", &tm);
    char line[64];
    std::snprintf(line, sizeof line, " %d %zu %.1f", res.status, res.body.size(), ms);
    std::lock_guard lock(log_mutex);
    log << ts << ' ' << in.method << ' ' << in.path << line << '\n' << std::flush;
  };

  httplib::Server server;
  server.Get(".*", handler);
  server.Post(".*", handler);
  log << "terratile serving " << config.store_root.string() << " on " << config.listen << ":"
      << config.port << " (" << synced << " gazetteer places synced)\n"
      << std::flush;
  if (!server.listen(config.listen, config.port)) {
    log << "cannot listen on " << config.listen << ":" << config.port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace terratile
