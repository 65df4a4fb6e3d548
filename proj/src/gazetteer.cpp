#include "terratile/gazetteer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>
#include <queue>
#include <set>
#include <sstream>

#include "json.hpp"

namespace terratile {

namespace {

constexpr int kAkCount = 5;
constexpr double kLatCellM = 111320.0 / kZGridLatCellsPerDegree;
constexpr double kLonCellEquatorM = 111320.0 / kZGridLonCellsPerDegree;

int img_rank(const Place& p) { return p.image_flag() ? 0 : 1; }

template <typename T>
int cmp3(const T& a, const T& b) {
  return a < b ? -1 : (b < a ? 1 : 0);
}

/// 0 when folded starts with prefix, otherwise its order relative to the
/// block of strings that do.
int prefix_cmp(const std::string& folded, const std::string& prefix) {
  if (folded.compare(0, prefix.size(), prefix) == 0) return 0;
  return folded < prefix ? -1 : 1;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t at = line.find(sep, start);
    out.push_back(line.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

[[noreturn]] void bad_line(std::size_t line, const std::string& what) {
  throw FormatError("gazetteer line " + std::to_string(line) + ": " + what);
}

std::string encode_cursor(const PlaceOrderKey& key) {
  const nlohmann::json j = nlohmann::json::array({std::get<0>(key), std::get<1>(key), std::get<2>(key),
                                                  std::get<3>(key), std::get<4>(key), std::get<5>(key)});
  const std::string text = j.dump();
  return to_hex({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

PlaceOrderKey decode_cursor(std::string_view cursor) {
  if (cursor.size() % 2 != 0) throw QueryError("invalid cursor");
  std::string text;
  for (std::size_t i = 0; i < cursor.size(); i += 2) {
    unsigned v = 0;
    const auto [ptr, ec] = std::from_chars(cursor.data() + i, cursor.data() + i + 2, v, 16);
    if (ec != std::errc() || ptr != cursor.data() + i + 2) throw QueryError("invalid cursor");
    text.push_back(static_cast<char>(v));
  }
  try {
    const auto j = nlohmann::json::parse(text);
    return {j.at(0).get<int>(), j.at(1).get<std::string>(), j.at(2).get<int>(),
            j.at(3).get<std::string>(), j.at(4).get<std::uint64_t>(), j.at(5).get<std::uint32_t>()};
  } catch (const nlohmann::json::exception&) {
    throw QueryError("invalid cursor");
  }
}

}  // namespace

std::optional<int> match_feature_type(std::string_view text) {
  text = trim(text);
  int id = 0;
  if (parse_number(text, id)) {
    if (id >= 1 && id <= static_cast<int>(kFeatureTypes.size())) return id;
    return std::nullopt;
  }
  const std::string folded = ascii_lower(text);
  for (const auto& t : kFeatureTypes) {
    if (ascii_lower(t.description) == folded) return t.id;
    for (const auto part : split(t.description, '/')) {
      if (ascii_lower(part) == folded) return t.id;
    }
  }
  return std::nullopt;
}

std::string_view feature_type_name(int id) {
  if (id < 1 || id > static_cast<int>(kFeatureTypes.size())) return {};
  return kFeatureTypes[id - 1].description;
}

std::string_view to_string(PlaceIndex index) {
  switch (index) {
    case PlaceIndex::AkPlace1: return "akplace1";
    case PlaceIndex::AkPlace2: return "akplace2";
    case PlaceIndex::AkPlace3: return "akplace3";
    case PlaceIndex::AkPlace4: return "akplace4";
    case PlaceIndex::AkPlace5: return "akplace5";
    case PlaceIndex::PlaceId: return "placeId";
    case PlaceIndex::UGrid: return "ugrid";
    case PlaceIndex::ZGrid: return "zgrid";
  }
  return "?";
}

PlaceIndex pick_index(const SearchCriteria& c) {
  const bool country = c.country || c.state;
  if (!country) return PlaceIndex::AkPlace1;
  if (c.state) return c.name ? PlaceIndex::AkPlace2 : PlaceIndex::AkPlace3;
  return c.name ? PlaceIndex::AkPlace4 : PlaceIndex::AkPlace5;
}

PlaceOrderKey place_order_key(const Place& p) {
  return {img_rank(p), ascii_lower(p.alternate_name), p.feature_type, p.alternate_name, p.place_id, p.row};
}

struct Gazetteer::Data {
  std::vector<Place> places;
  std::vector<std::string> folded;
  std::map<std::string, std::string> country_alias;                       // folded alias -> id
  std::map<std::pair<std::string, std::string>, std::string> state_alias;  // (country, folded alias) -> id
  std::set<std::string> countries;
  std::set<std::pair<std::string, std::string>> states;
  std::array<std::vector<std::uint32_t>, kAkCount> ak;
  std::map<GridKey, std::vector<std::uint32_t>> by_ugrid;
  std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> by_zcell;

  /// Strict weak order of index `which` (0-based akplace number).
  bool index_less(int which, std::uint32_t a, std::uint32_t b) const {
    const Place& p = places[a];
    const Place& q = places[b];
    const auto tail = [&](bool with_type) {
      return std::tie(folded[a], with_type ? p.feature_type : zero, p.alternate_name, p.place_id, p.row) <
             std::tie(folded[b], with_type ? q.feature_type : zero, q.alternate_name, q.place_id, q.row);
    };
    if (int c = cmp3(img_rank(p), img_rank(q))) return c < 0;
    switch (which) {
      case 0: return tail(true);
      case 1:
        if (int c = cmp3(p.country, q.country)) return c < 0;
        if (int c = cmp3(p.state, q.state)) return c < 0;
        return tail(true);
      case 2:
        if (int c = cmp3(p.country, q.country)) return c < 0;
        if (int c = cmp3(p.state, q.state)) return c < 0;
        if (int c = cmp3(p.feature_type, q.feature_type)) return c < 0;
        return tail(false);
      case 3:
        if (int c = cmp3(p.country, q.country)) return c < 0;
        return tail(true);
      default:
        if (int c = cmp3(p.country, q.country)) return c < 0;
        if (int c = cmp3(p.feature_type, q.feature_type)) return c < 0;
        return tail(false);
    }
  }

  struct Probe {
    int img = 0;
    std::string country;
    std::string state;
    int type = 0;
    std::optional<std::string> name;
  };

  /// Position of a row relative to the probe's key prefix under index `which`.
  int probe_cmp(int which, std::uint32_t row, const Probe& pr) const {
    const Place& p = places[row];
    if (int c = cmp3(img_rank(p), pr.img)) return c;
    const auto name = [&] { return pr.name ? prefix_cmp(folded[row], *pr.name) : 0; };
    switch (which) {
      case 0: return name();
      case 1:
        if (int c = cmp3(p.country, pr.country)) return c;
        if (int c = cmp3(p.state, pr.state)) return c;
        return name();
      case 2:
        if (int c = cmp3(p.country, pr.country)) return c;
        if (int c = cmp3(p.state, pr.state)) return c;
        return cmp3(p.feature_type, pr.type);
      case 3:
        if (int c = cmp3(p.country, pr.country)) return c;
        return name();
      default:
        if (int c = cmp3(p.country, pr.country)) return c;
        return cmp3(p.feature_type, pr.type);
    }
  }

  bool result_less(std::uint32_t a, std::uint32_t b) const {
    const Place& p = places[a];
    const Place& q = places[b];
    return std::make_tuple(img_rank(p), std::cref(folded[a]), p.feature_type, std::cref(p.alternate_name),
                           p.place_id, p.row) <
           std::make_tuple(img_rank(q), std::cref(folded[b]), q.feature_type, std::cref(q.alternate_name),
                           q.place_id, q.row);
  }

  bool at_or_before(std::uint32_t row, const PlaceOrderKey& key) const {
    const Place& p = places[row];
    return std::make_tuple(img_rank(p), std::cref(folded[row]), p.feature_type, std::cref(p.alternate_name),
                           p.place_id, p.row) <=
           std::make_tuple(std::get<0>(key), std::cref(std::get<1>(key)), std::get<2>(key),
                           std::cref(std::get<3>(key)), std::get<4>(key), std::get<5>(key));
  }

  static constexpr int zero = 0;
};

Gazetteer::Gazetteer() : data_(std::make_unique<Data>()), mutex_(std::make_unique<std::shared_mutex>()) {}
Gazetteer::Gazetteer(Gazetteer&&) noexcept = default;
Gazetteer& Gazetteer::operator=(Gazetteer&&) noexcept = default;
Gazetteer::~Gazetteer() = default;

Gazetteer Gazetteer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read gazetteer " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

Gazetteer Gazetteer::parse(std::string_view text) {
  Gazetteer g;
  Data& d = *g.data_;

  std::vector<std::pair<std::size_t, std::string_view>> lines;
  {
    std::size_t number = 0;
    for (const auto raw : split(text, '\n')) {
      ++number;
      const auto line = trim(raw);
      if (line.empty() || line.front() == '#') continue;
      lines.emplace_back(number, line);
    }
  }

  auto add_country_alias = [&](std::size_t n, std::string_view alias, const std::string& id) {
    const std::string key = ascii_lower(trim(alias));
    if (key.empty()) bad_line(n, "empty country alias");
    const auto [it, inserted] = d.country_alias.emplace(key, id);
    if (!inserted && it->second != id) bad_line(n, "country alias '" + key + "' names two countries");
  };
  auto add_state_alias = [&](std::size_t n, const std::string& country, std::string_view alias,
                             const std::string& id) {
    const std::string key = ascii_lower(trim(alias));
    if (key.empty()) bad_line(n, "empty state alias");
    const auto [it, inserted] = d.state_alias.emplace(std::make_pair(country, key), id);
    if (!inserted && it->second != id) bad_line(n, "state alias '" + key + "' names two states");
  };

  // Directives first so that place lines may precede the declarations they use.
  for (const auto& [n, line] : lines) {
    if (line.front() != '@') continue;
    const auto f = split(line, '|');
    const auto kind = trim(f[0]);
    if (kind == "@country") {
      if (f.size() != 3) bad_line(n, "expected @country|<id>|<alias>");
      const std::string id(trim(f[1]));
      if (id.empty()) bad_line(n, "empty country id");
      d.countries.insert(id);
      add_country_alias(n, id, id);
      add_country_alias(n, f[2], id);
    } else if (kind != "@state") {
      bad_line(n, "unknown directive " + std::string(kind));
    }
  }
  for (const auto& [n, line] : lines) {
    if (line.front() != '@') continue;
    const auto f = split(line, '|');
    if (trim(f[0]) != "@state") continue;
    if (f.size() != 4) bad_line(n, "expected @state|<countryId>|<stateId>|<alias>");
    const std::string country(trim(f[1]));
    const std::string id(trim(f[2]));
    if (!d.countries.count(country)) bad_line(n, "state refers to undeclared country " + country);
    if (id.empty()) bad_line(n, "empty state id");
    d.states.insert({country, id});
    add_state_alias(n, country, id, id);
    add_state_alias(n, country, f[3], id);
  }

  for (const auto& [n, line] : lines) {
    if (line.front() == '@') continue;
    const auto f = split(line, '|');
    if (f.size() != 8) bad_line(n, "expected 8 '|'-separated fields");
    Place p;
    p.row = static_cast<std::uint32_t>(d.places.size());
    if (!parse_number(f[0], p.place_id)) bad_line(n, "bad place id");
    p.name = std::string(trim(f[1]));
    p.alternate_name = std::string(trim(f[2]));
    if (p.alternate_name.empty()) p.alternate_name = p.name;
    if (p.name.empty()) bad_line(n, "empty place name");
    p.country = std::string(trim(f[3]));
    p.state = std::string(trim(f[4]));
    if (!d.countries.count(p.country)) bad_line(n, "undeclared country " + p.country);
    if (!p.state.empty() && !d.states.count({p.country, p.state}))
      bad_line(n, "undeclared state " + p.state + " in " + p.country);
    if (!parse_number(f[5], p.feature_type) || p.feature_type < 1 ||
        p.feature_type > static_cast<int>(kFeatureTypes.size()))
      bad_line(n, "unknown feature type " + std::string(trim(f[5])));
    if (!parse_number(f[6], p.lat) || !parse_number(f[7], p.lon) || !(std::abs(p.lat) <= 90.0) ||
        !(std::abs(p.lon) <= 180.0))
      bad_line(n, "bad coordinates");
    const GeoPoint gp = GeoPoint::make(p.lat, p.lon);
    p.lon = gp.lon;
    p.zgrid = GridKey::from(geo_to_zgrid(gp));
    if (p.lat >= 0.0 && p.lat <= kUtmMaxLatitude) {
      try {
        const UGridId u = utm_to_ugrid(geo_to_utm(gp));
        if (ugrid_in_zone(u)) p.ugrid = GridKey::from(u);
      } catch (const RangeError&) {
      }
    }
    d.folded.push_back(ascii_lower(p.alternate_name));
    if (p.ugrid) d.by_ugrid[*p.ugrid].push_back(p.row);
    d.by_zcell[p.zgrid.morton].push_back(p.row);
    d.places.push_back(std::move(p));
  }
  g.rebuild_indices();
  return g;
}

void Gazetteer::rebuild_indices() {
  Data& d = *data_;
  for (int k = 0; k < kAkCount; ++k) {
    auto& ix = d.ak[k];
    ix.resize(d.places.size());
    for (std::uint32_t i = 0; i < ix.size(); ++i) ix[i] = i;
    std::sort(ix.begin(), ix.end(),
              [&](std::uint32_t a, std::uint32_t b) { return d.index_less(k, a, b); });
  }
}

GazetteerCounts Gazetteer::counts() const {
  std::shared_lock lock(*mutex_);
  return {data_->places.size(), data_->countries.size(), data_->states.size(), kFeatureTypes.size()};
}

std::optional<std::string> Gazetteer::resolve_country(std::string_view text) const {
  std::shared_lock lock(*mutex_);
  const auto it = data_->country_alias.find(ascii_lower(trim(text)));
  if (it == data_->country_alias.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> Gazetteer::resolve_state(std::string_view country_id,
                                                    std::string_view text) const {
  std::shared_lock lock(*mutex_);
  const auto it = data_->state_alias.find({std::string(country_id), ascii_lower(trim(text))});
  if (it == data_->state_alias.end()) return std::nullopt;
  return it->second;
}

SearchPage Gazetteer::search(const SearchCriteria& criteria, std::size_t page_size) const {
  if (criteria.empty()) throw QueryError("search needs a name, state, country or feature type");
  if (page_size == 0) throw QueryError("page size must be positive");
  std::optional<PlaceOrderKey> after;
  if (criteria.cursor) after = decode_cursor(*criteria.cursor);

  SearchPage page;
  page.index = pick_index(criteria);
  const int which = static_cast<int>(page.index);

  std::optional<std::string> country;
  std::optional<std::string> state;
  std::optional<int> type;
  if (criteria.country || criteria.state) {
    country = resolve_country(criteria.country.value_or("USA"));
    if (!country) return page;
  }
  if (criteria.state) {
    state = resolve_state(*country, *criteria.state);
    if (!state) return page;
  }
  if (criteria.feature_type) {
    type = match_feature_type(*criteria.feature_type);
    if (!type) return page;
  }

  std::shared_lock lock(*mutex_);
  const Data& d = *data_;
  const auto& ix = d.ak[which];
  const bool type_in_key = which == 2 || which == 4;

  struct Run {
    std::size_t pos;
    std::size_t end;
  };
  std::vector<Place> rows;
  for (int img = 0; img <= 1 && rows.size() <= page_size; ++img) {
    std::vector<Run> runs;
    std::vector<int> run_types;
    if (type_in_key) {
      if (type) {
        run_types.push_back(*type);
      } else {
        for (const auto& t : kFeatureTypes) run_types.push_back(t.id);
      }
    } else {
      run_types.push_back(0);
    }
    for (const int t : run_types) {
      Data::Probe probe{img, country.value_or(""), state.value_or(""), t, std::nullopt};
      if (criteria.name) probe.name = ascii_lower(*criteria.name);
      const auto lo = std::partition_point(ix.begin(), ix.end(), [&](std::uint32_t r) {
        return d.probe_cmp(which, r, probe) < 0;
      });
      const auto hi = std::partition_point(lo, ix.end(), [&](std::uint32_t r) {
        return d.probe_cmp(which, r, probe) <= 0;
      });
      auto from = lo;
      if (after) {
        from = std::partition_point(lo, hi, [&](std::uint32_t r) { return d.at_or_before(r, *after); });
      }
      if (from != hi) {
        runs.push_back({static_cast<std::size_t>(from - ix.begin()), static_cast<std::size_t>(hi - ix.begin())});
      }
    }
    // k-way merge of runs, each already in result order.
    auto worse = [&](const Run& a, const Run& b) { return d.result_less(ix[b.pos], ix[a.pos]); };
    std::priority_queue<Run, std::vector<Run>, decltype(worse)> heap(worse, std::move(runs));
    while (!heap.empty() && rows.size() <= page_size) {
      Run run = heap.top();
      heap.pop();
      const std::uint32_t r = ix[run.pos];
      ++page.rows_examined;
      if (++run.pos < run.end) heap.push(run);
      if (type && !type_in_key && d.places[r].feature_type != *type) continue;
      rows.push_back(d.places[r]);
    }
  }
  if (rows.size() > page_size) {
    rows.resize(page_size);
    page.next_cursor = encode_cursor(place_order_key(rows.back()));
  }
  page.rows = std::move(rows);
  return page;
}

std::optional<Place> Gazetteer::nearest_place(const GridKey& grid) const {
  const GeoPoint center = cell_center(grid);
  const ZGridId cz = geo_to_zgrid(center);
  const auto cx = static_cast<std::int64_t>(cz.lon_index());
  const auto cy = static_cast<std::int64_t>(cz.lat_index());

  const double lat_span_deg = kNearestPlaceRadiusM / 111320.0 + 1.0 / kZGridLatCellsPerDegree;
  const double far_lat = std::min(90.0, std::abs(center.lat) + lat_span_deg);
  const double lon_cell_min_m = kLonCellEquatorM * std::cos(far_lat * std::numbers::pi / 180.0);
  const std::int64_t ry = static_cast<std::int64_t>(std::ceil(kNearestPlaceRadiusM / kLatCellM)) + 1;
  const std::int64_t half_lon = kZGridLonCells / 2;
  const std::int64_t rx =
      lon_cell_min_m <= 1.0
          ? half_lon
          : std::min<std::int64_t>(half_lon, static_cast<std::int64_t>(std::ceil(kNearestPlaceRadiusM / lon_cell_min_m)) + 1);
  // Lower bound on the distance to any cell of ring r+1, with slack for the
  // parallel-vs-great-circle difference.
  const double step_m = 0.99 * std::min(kLatCellM, std::max(lon_cell_min_m, 0.0));

  std::shared_lock lock(*mutex_);
  const Data& d = *data_;
  std::optional<std::uint32_t> best;
  double best_m = kNearestPlaceRadiusM;

  auto visit = [&](std::int64_t dx, std::int64_t dy) {
    const std::int64_t y = cy + dy;
    if (y < 0 || y >= static_cast<std::int64_t>(kZGridLatCells)) return;
    const std::int64_t x = ((cx + dx) % kZGridLonCells + kZGridLonCells) % kZGridLonCells;
    const auto it = d.by_zcell.find(interleave(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y)));
    if (it == d.by_zcell.end()) return;
    for (const std::uint32_t r : it->second) {
      const Place& p = d.places[r];
      const double m = haversine_m(center, GeoPoint{p.lat, p.lon});
      if (m > kNearestPlaceRadiusM) continue;
      if (!best || m < best_m ||
          (m == best_m && std::tie(p.alternate_name, p.place_id, p.row) <
                              std::tie(d.places[*best].alternate_name, d.places[*best].place_id,
                                       d.places[*best].row))) {
        best = r;
        best_m = m;
      }
    }
  };

  const std::int64_t rmax = std::max(rx, ry);
  for (std::int64_t r = 0; r <= rmax; ++r) {
    if (best && step_m > 0.0 && static_cast<double>(r - 1) * step_m > best_m) break;
    const std::int64_t ylo = std::max(-r, -ry), yhi = std::min(r, ry);
    const std::int64_t xlo = std::max(-r, -rx), xhi = std::min(r, rx);
    for (std::int64_t dy = ylo; dy <= yhi; ++dy) {
      for (std::int64_t dx = xlo; dx <= xhi; ++dx) {
        if (std::max(std::abs(dx), std::abs(dy)) != r) continue;
        // Avoid visiting the antimeridian-wrapped column twice.
        if (rx == half_lon && dx == -half_lon) continue;
        visit(dx, dy);
      }
    }
  }
  if (!best) return std::nullopt;
  return d.places[*best];
}

std::size_t Gazetteer::register_locked(const GridKey& grid, Date acquired) {
  Data& d = *data_;
  const std::vector<std::uint32_t>* rows = nullptr;
  if (grid.theme == Theme::Usgs) {
    const auto it = d.by_ugrid.find(grid);
    if (it != d.by_ugrid.end()) rows = &it->second;
  } else {
    const auto it = d.by_zcell.find(grid.morton);
    if (it != d.by_zcell.end()) rows = &it->second;
  }
  if (rows == nullptr) return 0;
  std::size_t changed = 0;
  for (const std::uint32_t r : *rows) {
    Place& p = d.places[r];
    Date& date = grid.theme == Theme::Usgs ? p.usgs_date : p.spin2_date;
    if (acquired > date) {
      date = acquired;
      ++changed;
    }
  }
  return changed;
}

std::size_t Gazetteer::register_image(const GridKey& grid, Date acquired) {
  const ImageRegistration one{grid, acquired};
  return register_images({&one, 1});
}

std::size_t Gazetteer::register_images(std::span<const ImageRegistration> images) {
  std::unique_lock lock(*mutex_);
  std::vector<bool> flag_before(data_->places.size());
  for (std::size_t i = 0; i < flag_before.size(); ++i) flag_before[i] = data_->places[i].image_flag();
  std::size_t changed = 0;
  for (const auto& img : images) changed += register_locked(img.grid, img.acquired);
  bool flipped = false;
  for (std::size_t i = 0; i < flag_before.size() && !flipped; ++i)
    flipped = flag_before[i] != data_->places[i].image_flag();
  if (flipped) rebuild_indices();
  return changed;
}

std::vector<Place> Gazetteer::places() const {
  std::shared_lock lock(*mutex_);
  return data_->places;
}

}  // namespace terratile
