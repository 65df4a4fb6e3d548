#pragma once

// HTTP front end. TileService maps a plain request to a plain response and
// holds no per-client state; serve() binds it to cpp-httplib.
//
//   GET  /tile/{theme}/{level}/{gridid}/{row}/{col}[?date=YYYYMMDD]
//   GET  /page?theme&level&size&lat&lon      or  ...&zone&x&y (view origin)
//   GET  /gazetteer?place&state&country&type&cursor
//   GET  /coverage/{level}/{x}/{y}            PNG
//   GET  /coverage_nav?level&x&y&px&py
//   GET  /picks                POST /picks          (admin)
//   GET  /admin/progress       POST /admin/hide     (admin)
//   GET  /ui/...               static files from ui_dir
//
// Page views are measured in "units": tiles at the tile level, whole cells
// at browse/thumb/jump. Unit x grows east and y grows north; for USGS the
// origin is the zone's UGrid origin, for SPIN2 (lon, lat) = (-180, -90).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "terratile/common.hpp"
#include "terratile/spatial_index.hpp"

namespace terratile {

class Store;
class Gazetteer;

enum class ViewSize { Small, Medium, Large };

std::string_view to_string(ViewSize size);
ViewSize parse_view_size(std::string_view text);

struct ViewDims {
  int cols = 0;
  int rows = 0;
};

/// Small views are about 450x300 pixels at every level and large views
/// twice that per side. Medium views are twice as wide as small ones.
ViewDims view_dims(Level level, ViewSize size);

/// Tiles (or cells) per unit side: 8/5 at the tile level, 1 otherwise.
int units_per_cell(Theme theme, Level level);

struct ServerConfig {
  std::string listen = "127.0.0.1";
  int port = 8080;
  std::filesystem::path store_root = "store";
  std::filesystem::path gazetteer_path;
  std::string admin_token;
  std::filesystem::path work_dir;
  std::filesystem::path ui_dir;

  /// Unknown keys are ignored. Throws FormatError on malformed JSON.
  static ServerConfig from_json(std::string_view text);
  static ServerConfig from_file(const std::filesystem::path& path);
  /// TERRATILE_LISTEN, TERRATILE_PORT, TERRATILE_STORE_ROOT,
  /// TERRATILE_GAZETTEER, TERRATILE_ADMIN_TOKEN, TERRATILE_WORK_DIR,
  /// TERRATILE_UI_DIR.
  void apply_env();
};

struct HttpRequest {
  std::string method = "GET";
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;
};

/// Splits "/path?a=1&b=x%20y" into path and decoded query parameters.
HttpRequest parse_target(std::string_view method, std::string_view target);

class TileService {
 public:
  TileService(Store& store, Gazetteer* gazetteer, ServerConfig config);

  HttpResponse handle(const HttpRequest& request);
  HttpResponse get(std::string_view target) { return handle(parse_target("GET", target)); }

  /// Registers every visible image with the gazetteer; returns places updated.
  std::size_t sync_gazetteer();

 private:
  HttpResponse tile(const HttpRequest& req, std::string_view rest);
  HttpResponse page(const HttpRequest& req);
  HttpResponse gazetteer(const HttpRequest& req);
  HttpResponse coverage(std::string_view rest);
  HttpResponse coverage_nav(const HttpRequest& req);
  HttpResponse picks(const HttpRequest& req);
  HttpResponse progress(const HttpRequest& req);
  HttpResponse hide(const HttpRequest& req);
  HttpResponse ui(std::string_view rest);
  bool authorized(const HttpRequest& req) const;

  Store& store_;
  Gazetteer* gazetteer_;
  ServerConfig config_;
};

/// Opens the store and gazetteer named by the config and serves until the
/// process is stopped. Access log lines go to `log`.
int serve(const ServerConfig& config, std::ostream& log);

}  // namespace terratile
