// terratile command line: grid ids, store maintenance, gazetteer queries,
// bulk loads, the HTTP server and a pyramid debug dump.

#include <bitset>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "terratile/gazetteer.hpp"
#include "terratile/loader.hpp"
#include "terratile/pyramid.hpp"
#include "terratile/server.hpp"
#include "terratile/spatial_index.hpp"
#include "terratile/store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace terratile;

namespace {

std::string binary(std::uint64_t v, int bits) {
  std::string s;
  for (int i = bits - 1; i >= 0; --i) s.push_back((v >> i) & 1 ? '1' : '0');
  return s;
}

void print_key(const GridKey& key) {
  json j{{"theme", to_string(key.theme)},
         {"gridid", key.to_string()},
         {"binary", binary(key.packed(), 36)}};
  if (key.theme == Theme::Spin2) {
    const ZGridId z = key.zgrid();
    const GeoBox b = zgrid_to_extent(z);
    j["lon_index"] = z.lon_index();
    j["lat_index"] = z.lat_index();
    j["extent"] = {{"lat_min", b.lat_min}, {"lat_max", b.lat_max}, {"lon_min", b.lon_min},
                   {"lon_max", b.lon_max}};
  } else {
    const UGridId u = key.ugrid();
    const UtmBox b = ugrid_to_extent(u);
    j["zone"] = u.zone;
    j["easting_index"] = u.easting_index();
    j["northing_index"] = u.northing_index();
    j["extent"] = {{"easting_min", b.easting_min}, {"easting_max", b.easting_max},
                   {"northing_min", b.northing_min}, {"northing_max", b.northing_max}};
  }
  std::cout << j.dump(2) << "\n";
}

json place_json(const Place& p) {
  return {{"place_id", p.place_id},
          {"name", p.name},
          {"alternate_name", p.alternate_name},
          {"country", p.country},
          {"state", p.state},
          {"type", feature_type_name(p.feature_type)},
          {"lat", p.lat},
          {"lon", p.lon},
          {"image_flag", p.image_flag()},
          {"usgs_date", p.usgs_date.empty() ? json(nullptr) : json(p.usgs_date.to_string())},
          {"spin2_date", p.spin2_date.empty() ? json(nullptr) : json(p.spin2_date.to_string())}};
}

void print_stats(const StoreStats& s) {
  json tiles = json::object();
  for (const auto& [k, n] : s.tiles) {
    tiles[std::string(to_string(k.first)) + "/" + std::string(to_string(k.second))] = n;
  }
  std::cout << json{{"tiles", tiles},
                    {"tile_bytes", s.tile_bytes},
                    {"images", s.images},
                    {"hidden_images", s.hidden_images},
                    {"originals", s.originals},
                    {"picks", s.picks},
                    {"epoch", s.epoch},
                    {"wal_bytes", s.wal_bytes},
                    {"segments", s.segments},
                    {"generation", s.generation}}
                   .dump(2)
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"terratile: aerial and satellite imagery atlas"};
  app.require_subcommand(1);

  // gridid
  auto* gridid = app.add_subcommand("gridid", "Encode or decode grid ids");
  gridid->require_subcommand(1);
  std::string theme_text = "spin2";
  double lat = 0.0, lon = 0.0;
  int zone = 0;
  auto* gencode = gridid->add_subcommand("encode", "Grid id of the cell containing a point");
  gencode->add_option("--theme", theme_text)->check(CLI::IsMember({"usgs", "spin2"}));
  gencode->add_option("--lat", lat)->required();
  gencode->add_option("--lon", lon)->required();
  gencode->add_option("--zone", zone, "UTM zone (default: from longitude)");
  std::string id_text;
  auto* gdecode = gridid->add_subcommand("decode", "Indices and extent of a grid id");
  gdecode->add_option("--theme", theme_text)->check(CLI::IsMember({"usgs", "spin2"}));
  gdecode->add_option("gridid", id_text)->required();

  // store
  auto* store_cmd = app.add_subcommand("store", "Store maintenance");
  store_cmd->require_subcommand(1);
  std::string root = "store";
  store_cmd->add_option("--root", root, "Store directory")->capture_default_str();
  auto* s_compact = store_cmd->add_subcommand("compact", "Rewrite segments and empty the WAL");
  auto* s_snapshot = store_cmd->add_subcommand("snapshot", "Write a full or incremental snapshot");
  bool full = false;
  std::optional<std::uint64_t> since;
  std::string out_path;
  s_snapshot->add_flag("--full", full);
  s_snapshot->add_option("--since", since, "Epoch for an incremental snapshot");
  s_snapshot->add_option("--out", out_path)->required();
  auto* s_restore = store_cmd->add_subcommand("restore", "Apply snapshot files");
  std::vector<std::string> restore_files;
  s_restore->add_option("files", restore_files)->required();
  auto* s_stats = store_cmd->add_subcommand("stats", "Record counts and sizes");

  // gazetteer
  auto* gaz = app.add_subcommand("gazetteer", "Place-name gazetteer");
  gaz->require_subcommand(1);
  std::string gaz_file;
  auto* g_load = gaz->add_subcommand("load", "Parse a gazetteer file and print counts");
  g_load->add_option("file", gaz_file)->required();
  auto* g_search = gaz->add_subcommand("search", "One page of search results");
  SearchCriteria criteria;
  std::string g_root;
  g_search->add_option("--file", gaz_file)->required();
  g_search->add_option("--root", g_root, "Store whose imagery marks places");
  g_search->add_option("--name", criteria.name);
  g_search->add_option("--state", criteria.state);
  g_search->add_option("--country", criteria.country);
  g_search->add_option("--type", criteria.feature_type);
  g_search->add_option("--cursor", criteria.cursor);

  // load
  auto* load = app.add_subcommand("load", "Bulk load of source rasters");
  load->require_subcommand(1);
  std::string work = "work";
  load->add_option("--work", work, "Work directory")->capture_default_str();
  std::string manifest;
  int rows_per_band = kDefaultRowsPerBand;
  auto* l_plan = load->add_subcommand("plan", "Group a manifest into bands and jobs");
  l_plan->add_option("manifest", manifest)->required();
  l_plan->add_option("--rows-per-band", rows_per_band)->capture_default_str();
  auto* l_run = load->add_subcommand("run", "Run or resume the plan");
  RunOptions run_opts;
  std::string l_root = "store";
  std::string l_gaz;
  l_run->add_option("--root", l_root, "Store directory")->capture_default_str();
  l_run->add_option("--cutters", run_opts.cutters)->capture_default_str();
  l_run->add_option("--loaders", run_opts.loaders)->capture_default_str();
  l_run->add_option("--secret", run_opts.key_secret, "SPIN2 key secret");
  l_run->add_option("--gazetteer", l_gaz);
  auto* l_status = load->add_subcommand("status", "Per-band job states");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP server");
  std::string config_path;
  serve_cmd->add_option("--config", config_path, "JSON config file");

  // pyramid
  auto* pyr = app.add_subcommand("pyramid", "Pyramid debugging");
  pyr->require_subcommand(1);
  auto* p_dump = pyr->add_subcommand("dump", "Cut sources and write every image to a directory");
  std::vector<std::string> raws;
  std::string dump_dir;
  std::string secret = "terratile";
  p_dump->add_option("raw", raws, "Raw rasters; sidecars are <raw>.json")->required();
  p_dump->add_option("--out", dump_dir)->required();
  p_dump->add_option("--secret", secret);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gencode->parsed()) {
      const Theme theme = parse_theme(theme_text);
      const GeoPoint p = GeoPoint::make(lat, lon);
      if (theme == Theme::Spin2) {
        print_key(GridKey::from(geo_to_zgrid(p)));
      } else {
        const UtmCoord u = zone ? geo_to_utm(p, zone) : geo_to_utm(p);
        print_key(GridKey::from(utm_to_ugrid(u)));
      }
    } else if (gdecode->parsed()) {
      print_key(GridKey::parse(parse_theme(theme_text), id_text));
    } else if (s_compact->parsed()) {
      Store store(root);
      store.compact();
      print_stats(store.stats());
    } else if (s_snapshot->parsed()) {
      if (full == since.has_value()) {
        std::cerr << "give exactly one of --full and --since\n";
        return 2;
      }
      Store store(root);
      const SnapshotInfo info =
          full ? store.snapshot_full(out_path) : store.snapshot_incremental(out_path, *since);
      std::cout << json{{"since", info.since_epoch},
                        {"upto", info.upto_epoch},
                        {"records", info.record_count}}
                       .dump()
                << "\n";
    } else if (s_restore->parsed()) {
      Store store(root);
      std::vector<fs::path> files(restore_files.begin(), restore_files.end());
      std::cout << json{{"applied", store.restore(files)}, {"epoch", store.current_epoch()}}.dump()
                << "\n";
    } else if (s_stats->parsed()) {
      Store store(root);
      print_stats(store.stats());
    } else if (g_load->parsed()) {
      const Gazetteer g = Gazetteer::load(gaz_file);
      const GazetteerCounts c = g.counts();
      std::cout << json{{"places", c.places},
                        {"countries", c.countries},
                        {"states", c.states},
                        {"feature_types", c.feature_types}}
                       .dump()
                << "\n";
    } else if (g_search->parsed()) {
      Gazetteer g = Gazetteer::load(gaz_file);
      if (!g_root.empty()) {
        Store store(g_root);
        std::vector<ImageRegistration> regs;
        for (const auto& m : store.all_image_metas()) {
          if (m.visible) regs.push_back({m.grid, m.acquired});
        }
        g.register_images(regs);
      }
      const SearchPage page = g.search(criteria);
      json rows = json::array();
      for (const Place& p : page.rows) rows.push_back(place_json(p));
      std::cout << json{{"rows", rows},
                        {"next_cursor", page.next_cursor ? json(*page.next_cursor) : json(nullptr)},
                        {"index", to_string(page.index)}}
                       .dump(2)
                << "\n";
    } else if (l_plan->parsed()) {
      const LoadPlan plan = plan_load(manifest, rows_per_band);
      save_plan(plan, work);
      std::cout << json{{"sources", plan.sources.size()},
                        {"bands", plan.bands.size()},
                        {"jobs", plan.jobs.size()},
                        {"flagged", plan.flagged.size()}}
                       .dump()
                << "\n";
      for (const auto& f : plan.flagged) std::cerr << "flagged " << f.path << ": " << f.reason << "\n";
    } else if (l_run->parsed()) {
      Store store(l_root);
      std::optional<Gazetteer> g;
      if (!l_gaz.empty()) g = Gazetteer::load(l_gaz);
      const LoadStats st = run_load(work, store, g ? &*g : nullptr, run_opts);
      std::cout << json{{"jobs_cleaned", st.jobs_cleaned},
                        {"jobs_failed", st.jobs_failed},
                        {"tiles_loaded", st.tiles_loaded},
                        {"bytes_loaded", st.bytes_loaded},
                        {"cut_mb_per_s", st.cut_mb_per_s()},
                        {"load_mb_per_s", st.load_mb_per_s()},
                        {"wall_seconds", st.wall_seconds}}
                       .dump()
                << "\n";
      return st.jobs_failed == 0 ? 0 : 1;
    } else if (l_status->parsed()) {
      std::cout << json::parse(load_progress(work).to_json()).dump(2) << "\n";
    } else if (serve_cmd->parsed()) {
      ServerConfig config = config_path.empty() ? ServerConfig{} : ServerConfig::from_file(config_path);
      config.apply_env();
      return serve(config, std::cout);
    } else if (p_dump->parsed()) {
      std::vector<SourceRaster> sources;
      for (const auto& raw : raws) sources.push_back(read_source(raw, raw + ".json"));
      std::size_t images = 0;
      const auto cuts = cut_sources(sources);
      for (const Cut& cut : cuts) {
        const auto tiles = encode_cut(cut, secret);
        dump_cut(cut, tiles, dump_dir);
        images += tiles.size();
      }
      std::cout << json{{"cuts", cuts.size()}, {"images", images}}.dump() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
