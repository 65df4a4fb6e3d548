#include "terratile/loader.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "terratile/gazetteer.hpp"
#include "terratile/store.hpp"

namespace terratile {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void sync_path(const fs::path& path, int flags) {
  const int fd = ::open(path.c_str(), flags | O_CLOEXEC);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

/// tmp + rename so a crash never leaves a half-written file under the final name.
void write_file(const fs::path& path, std::string_view bytes, bool sync) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  if (sync) sync_path(tmp, O_RDONLY);
  fs::rename(tmp, path);
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

double mb_per_s(std::uint64_t bytes, double seconds) {
  return seconds > 0.0 ? static_cast<double>(bytes) / 1e6 / seconds : 0.0;
}

std::int64_t anchor_row(const SourceInfo& info) {
  if (info.theme == Theme::Usgs) {
    return static_cast<std::int64_t>(
        std::floor((info.northing - 0.5 * info.pixel_scale_m) / kUGridCellHeightM));
  }
  const double lat = info.lat - 0.5 * info.degrees_per_pixel_lat();
  return static_cast<std::int64_t>(std::floor((lat + 90.0) * kZGridLatCellsPerDegree));
}

std::optional<std::string> zone_problem(const SourceInfo& info) {
  if (info.theme == Theme::Usgs) {
    if (info.zone < 1 || info.zone > 60) return "UTM zone out of range";
    const UtmBox box = info.utm_extent();
    if (box.easting_min < kUtmMinEasting || box.easting_max > kUtmMaxEasting ||
        box.northing_min < 0.0 || box.northing_max > kUtmMaxNorthing)
      return "source outside all UTM zones";
    return std::nullopt;
  }
  const GeoBox box = info.geo_extent();
  if (box.lat_min < -90.0 || box.lat_max > 90.0 || box.lon_min < -180.0 || box.lon_max > 180.0)
    return "source outside the geographic grid";
  return std::nullopt;
}

ImageType parse_image_type(std::string_view text) {
  return ascii_lower(text) == "tiff" ? ImageType::Tiff : ImageType::Jpeg;
}

fs::path staged_dir(const fs::path& work, int band_id) {
  return work / "staged" / std::to_string(band_id);
}

}  // namespace

double LoadStats::cut_mb_per_s() const { return mb_per_s(bytes_cut, cut_seconds); }
double LoadStats::load_mb_per_s() const { return mb_per_s(bytes_loaded, load_seconds); }

const PlannedSource& LoadPlan::source(std::string_view id) const {
  for (const auto& s : sources) {
    if (s.source_id == id) return s;
  }
  throw KeyError("plan has no source " + std::string(id));
}

std::string LoadPlan::to_json() const {
  json j;
  j["rows_per_band"] = rows_per_band;
  j["sources"] = json::array();
  for (const auto& s : sources) {
    j["sources"].push_back({{"id", s.source_id},
                            {"raw", s.raw_path.string()},
                            {"sidecar", s.sidecar_path.string()},
                            {"theme", to_string(s.theme)},
                            {"zone", s.zone},
                            {"anchor_row", s.anchor_row},
                            {"rows", {s.rows.first, s.rows.last}}});
  }
  j["bands"] = json::array();
  for (const auto& b : bands) {
    j["bands"].push_back({{"id", b.band_id},
                          {"theme", to_string(b.theme)},
                          {"zone", b.zone},
                          {"rows", {b.rows.first, b.rows.last}},
                          {"members", b.members},
                          {"jobs", b.jobs}});
  }
  j["jobs"] = json::array();
  for (const auto& job : jobs) {
    j["jobs"].push_back({{"id", job.job_id},
                         {"band", job.band_id},
                         {"theme", to_string(job.theme)},
                         {"zone", job.zone},
                         {"row", job.cell_row},
                         {"sources", job.sources}});
  }
  j["flagged"] = json::array();
  for (const auto& f : flagged) j["flagged"].push_back({{"path", f.path}, {"reason", f.reason}});
  return j.dump(2) + "\n";
}

LoadPlan LoadPlan::from_json(std::string_view text) {
  LoadPlan plan;
  try {
    const json j = json::parse(text);
    plan.rows_per_band = j.at("rows_per_band").get<int>();
    for (const auto& s : j.at("sources")) {
      PlannedSource p;
      p.source_id = s.at("id").get<std::string>();
      p.raw_path = s.at("raw").get<std::string>();
      p.sidecar_path = s.at("sidecar").get<std::string>();
      p.theme = parse_theme(s.at("theme").get<std::string>());
      p.zone = s.at("zone").get<int>();
      p.anchor_row = s.at("anchor_row").get<std::int64_t>();
      p.rows = {s.at("rows").at(0).get<std::int64_t>(), s.at("rows").at(1).get<std::int64_t>()};
      plan.sources.push_back(std::move(p));
    }
    for (const auto& b : j.at("bands")) {
      Band band;
      band.band_id = b.at("id").get<int>();
      band.theme = parse_theme(b.at("theme").get<std::string>());
      band.zone = b.at("zone").get<int>();
      band.rows = {b.at("rows").at(0).get<std::int64_t>(), b.at("rows").at(1).get<std::int64_t>()};
      band.members = b.at("members").get<std::vector<std::string>>();
      band.jobs = b.at("jobs").get<std::vector<int>>();
      plan.bands.push_back(std::move(band));
    }
    for (const auto& jj : j.at("jobs")) {
      Job job;
      job.job_id = jj.at("id").get<int>();
      job.band_id = jj.at("band").get<int>();
      job.theme = parse_theme(jj.at("theme").get<std::string>());
      job.zone = jj.at("zone").get<int>();
      job.cell_row = jj.at("row").get<std::int64_t>();
      job.sources = jj.at("sources").get<std::vector<std::string>>();
      plan.jobs.push_back(std::move(job));
    }
    for (const auto& f : j.at("flagged")) {
      plan.flagged.push_back({f.at("path").get<std::string>(), f.at("reason").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad plan: ") + e.what());
  }
  for (std::size_t i = 0; i < plan.jobs.size(); ++i) {
    if (plan.jobs[i].job_id != static_cast<int>(i) + 1) throw FormatError("bad plan: job ids out of order");
  }
  for (std::size_t i = 0; i < plan.bands.size(); ++i) {
    if (plan.bands[i].band_id != static_cast<int>(i) + 1) throw FormatError("bad plan: band ids out of order");
  }
  return plan;
}

LoadPlan plan_load(const fs::path& manifest, int rows_per_band) {
  if (rows_per_band < 1) throw RangeError("rows per band must be positive");
  json entries;
  try {
    entries = json::parse(slurp(manifest));
  } catch (const json::exception& e) {
    throw FormatError("bad manifest " + manifest.string() + ": " + e.what());
  }
  if (!entries.is_array()) throw FormatError("manifest must be a JSON list");
  const fs::path base = manifest.parent_path();

  LoadPlan plan;
  plan.rows_per_band = rows_per_band;
  std::set<std::string> ids;
  for (const auto& e : entries) {
    std::string raw_text;
    std::string sidecar_text;
    try {
      raw_text = e.at("path").get<std::string>();
      sidecar_text = e.at("sidecar_path").get<std::string>();
    } catch (const json::exception&) {
      throw FormatError("manifest entries need path and sidecar_path");
    }
    const fs::path raw = fs::absolute(base / raw_text).lexically_normal();
    const fs::path sidecar = fs::absolute(base / sidecar_text).lexically_normal();
    SourceInfo info;
    try {
      info = SourceInfo::from_json(slurp(sidecar));
    } catch (const Error& err) {
      plan.flagged.push_back({raw_text, err.what()});
      continue;
    }
    std::error_code ec;
    const auto size = fs::file_size(raw, ec);
    if (ec || size != static_cast<std::uintmax_t>(info.width) * static_cast<std::uintmax_t>(info.height)) {
      plan.flagged.push_back({raw_text, "raster missing or size does not match sidecar"});
      continue;
    }
    if (const auto problem = zone_problem(info)) {
      plan.flagged.push_back({raw_text, *problem});
      continue;
    }
    if (!ids.insert(info.source_id).second) {
      plan.flagged.push_back({raw_text, "duplicate source id " + info.source_id});
      continue;
    }
    PlannedSource p;
    p.source_id = info.source_id;
    p.raw_path = raw;
    p.sidecar_path = sidecar;
    p.theme = info.theme;
    p.zone = info.theme == Theme::Usgs ? info.zone : 0;
    p.anchor_row = anchor_row(info);
    p.rows = source_rows(info);
    plan.sources.push_back(std::move(p));
  }
  std::sort(plan.sources.begin(), plan.sources.end(), [](const auto& a, const auto& b) {
    return std::tie(a.theme, a.zone, a.source_id) < std::tie(b.theme, b.zone, b.source_id);
  });

  // Group by (theme, zone); bands start at the zone's southernmost row.
  for (std::size_t g = 0; g < plan.sources.size();) {
    std::size_t end = g;
    while (end < plan.sources.size() && plan.sources[end].theme == plan.sources[g].theme &&
           plan.sources[end].zone == plan.sources[g].zone)
      ++end;
    const Theme theme = plan.sources[g].theme;
    const int zone = plan.sources[g].zone;
    std::int64_t lo = plan.sources[g].rows.first;
    std::int64_t hi = plan.sources[g].rows.last;
    for (std::size_t i = g; i < end; ++i) {
      lo = std::min(lo, plan.sources[i].rows.first);
      hi = std::max(hi, plan.sources[i].rows.last);
    }
    const std::int64_t band_count = (hi - lo) / rows_per_band + 1;
    for (std::int64_t k = 0; k < band_count; ++k) {
      Band band;
      band.theme = theme;
      band.zone = zone;
      band.rows = {lo + k * rows_per_band, lo + (k + 1) * rows_per_band - 1};
      for (std::size_t i = g; i < end; ++i) {
        if (band.rows.contains(plan.sources[i].anchor_row)) band.members.push_back(plan.sources[i].source_id);
      }
      std::vector<Job> jobs;
      for (std::int64_t row = band.rows.first; row <= band.rows.last; ++row) {
        Job job;
        job.theme = theme;
        job.zone = zone;
        job.cell_row = row;
        for (std::size_t i = g; i < end; ++i) {
          if (plan.sources[i].rows.contains(row)) job.sources.push_back(plan.sources[i].source_id);
        }
        if (!job.sources.empty()) jobs.push_back(std::move(job));
      }
      if (jobs.empty() && band.members.empty()) continue;
      band.band_id = static_cast<int>(plan.bands.size()) + 1;
      for (auto& job : jobs) {
        job.band_id = band.band_id;
        job.job_id = static_cast<int>(plan.jobs.size()) + 1;
        band.jobs.push_back(job.job_id);
        plan.jobs.push_back(std::move(job));
      }
      plan.bands.push_back(std::move(band));
    }
    g = end;
  }
  return plan;
}

void save_plan(const LoadPlan& plan, const fs::path& work_dir) {
  fs::create_directories(work_dir);
  const std::string text = plan.to_json();
  const fs::path path = work_dir / "plan.json";
  if (fs::exists(work_dir / "journal.log") && fs::exists(path) && slurp(path) != text) {
    throw Error("work directory " + work_dir.string() + " already tracks a different plan");
  }
  write_file(path, text, true);
  sync_path(work_dir, O_RDONLY | O_DIRECTORY);
}

LoadPlan read_plan(const fs::path& work_dir) { return LoadPlan::from_json(slurp(work_dir / "plan.json")); }

namespace {

class LoadRun {
 public:
  LoadRun(const fs::path& work, const LoadPlan& plan, Store& store, Gazetteer* gazetteer,
          const RunOptions& options)
      : work_(work),
        plan_(plan),
        store_(store),
        gazetteer_(gazetteer),
        options_(options),
        journal_(work / "journal.log", options.sync, options.faults),
        jobs_(plan.jobs.size()),
        band_claimed_(plan.bands.size(), false) {
    for (const auto& [id, status] : replay_journal(journal_.entries())) {
      if (id < 1 || id > static_cast<int>(jobs_.size())) continue;
      jobs_[id - 1].state = status.state;
      jobs_[id - 1].attempts = status.attempts;
    }
  }

  LoadStats run() {
    const auto start = Clock::now();
    std::vector<std::thread> threads;
    for (int i = 0; i < options_.cutters; ++i) threads.emplace_back([this] { guarded([this] { cutter(); }); });
    for (int i = 0; i < options_.loaders; ++i) threads.emplace_back([this] { guarded([this] { loader(); }); });
    threads.emplace_back([this] { guarded([this] { cleaner(); }); });
    for (auto& t : threads) t.join();
    if (fatal_) std::rethrow_exception(fatal_);
    stats_.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    for (const auto& j : jobs_) {
      if (j.state == JobState::Cleaned) ++stats_.jobs_cleaned;
      if (j.state == JobState::Failed) ++stats_.jobs_failed;
    }
    return stats_;
  }

 private:
  struct JobRuntime {
    JobState state = JobState::Queued;
    int attempts = 0;
    bool claimed = false;
    Clock::time_point not_before{};
  };

  // Any exception escaping a role loop (a simulated crash, or an I/O error
  // on the journal itself) stops every worker.
  template <typename F>
  void guarded(F body) {
    try {
      body();
    } catch (...) {
      std::lock_guard lock(mutex_);
      if (!fatal_) fatal_ = std::current_exception();
      cv_.notify_all();
    }
  }

  bool poisoned(const JobRuntime& j) const {
    return j.state == JobState::Failed && j.attempts >= options_.max_attempts;
  }

  bool finished_locked() const {
    return std::all_of(jobs_.begin(), jobs_.end(),
                       [&](const JobRuntime& j) { return j.state == JobState::Cleaned || poisoned(j); });
  }

  bool stop_locked() const { return fatal_ != nullptr || finished_locked(); }

  void transition_locked(int job_id, JobState to, std::uint64_t bytes = 0, std::int64_t phase_ms = 0,
                         std::string error = {}) {
    JobRuntime& j = jobs_[job_id - 1];
    journal_.append({job_id, to, j.attempts, now_ms(), bytes, phase_ms, std::move(error)});
    j.state = to;
  }

  void fail_locked(int job_id, const std::string& error) {
    JobRuntime& j = jobs_[job_id - 1];
    transition_locked(job_id, JobState::Failed, 0, 0, error);
    j.not_before = Clock::now() + options_.backoff * (1 << std::min(j.attempts, 10));
  }

  void cutter() {
    for (;;) {
      int job_id = 0;
      {
        std::unique_lock lock(mutex_);
        for (;;) {
          if (stop_locked()) return;
          const auto now = Clock::now();
          for (std::size_t i = 0; i < jobs_.size() && job_id == 0; ++i) {
            JobRuntime& j = jobs_[i];
            if (j.claimed) continue;
            const bool retry = j.state == JobState::Failed && !poisoned(j) && now >= j.not_before;
            if (j.state == JobState::Queued || j.state == JobState::Cutting || retry) job_id = static_cast<int>(i) + 1;
          }
          if (job_id != 0) break;
          cv_.wait_for(lock, std::chrono::milliseconds(20));
        }
        JobRuntime& j = jobs_[job_id - 1];
        j.claimed = true;
        if (j.state == JobState::Failed) transition_locked(job_id, JobState::Queued);
        if (j.state == JobState::Queued) {
          ++j.attempts;
          transition_locked(job_id, JobState::Cutting);
        }
      }
      const auto start = Clock::now();
      std::uint64_t read = 0;
      std::uint64_t staged = 0;
      std::string error;
      try {
        cut_job(plan_.jobs[job_id - 1], read, staged);
      } catch (const SimulatedCrash&) {
        throw;
      } catch (const std::exception& e) {
        error = e.what();
      }
      const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
      std::lock_guard lock(mutex_);
      jobs_[job_id - 1].claimed = false;
      if (error.empty()) {
        transition_locked(job_id, JobState::Cut, read, static_cast<std::int64_t>(seconds * 1000));
        stats_.bytes_cut += read;
        stats_.bytes_staged += staged;
        stats_.cut_seconds += seconds;
      } else {
        fail_locked(job_id, error);
      }
      cv_.notify_all();
    }
  }

  bool band_done(const Band& band) const {
    return std::all_of(band.jobs.begin(), band.jobs.end(), [&](int id) {
      const auto& j = jobs_[id - 1];
      return j.state == JobState::Loaded || j.state == JobState::Cleaned || poisoned(j);
    });
  }

  bool band_loadable(const Band& band) const {
    bool pending = false;
    for (int id : band.jobs) {
      const auto& j = jobs_[id - 1];
      if (j.state == JobState::Cut || j.state == JobState::Loading) {
        pending = true;
      } else if (j.state != JobState::Loaded && j.state != JobState::Cleaned && !poisoned(j)) {
        return false;
      }
    }
    return pending;
  }

  void loader() {
    for (;;) {
      int band_index = -1;
      std::vector<int> loading;
      {
        std::unique_lock lock(mutex_);
        for (;;) {
          if (stop_locked()) return;
          for (std::size_t b = 0; b < plan_.bands.size(); ++b) {
            if (band_claimed_[b] || band_done(plan_.bands[b])) continue;
            if (band_loadable(plan_.bands[b])) band_index = static_cast<int>(b);
            // One loader keeps bands strictly in plan order.
            if (band_index >= 0 || options_.loaders == 1) break;
          }
          if (band_index >= 0) break;
          cv_.wait_for(lock, std::chrono::milliseconds(20));
        }
        band_claimed_[band_index] = true;
        for (int id : plan_.bands[band_index].jobs) {
          auto& j = jobs_[id - 1];
          if (j.state == JobState::Cut) transition_locked(id, JobState::Loading);
          if (j.state == JobState::Loading) loading.push_back(id);
        }
      }
      const auto start = Clock::now();
      std::uint64_t bytes = 0;
      std::uint64_t tiles = 0;
      std::string error;
      try {
        load_band(plan_.bands[band_index], bytes, tiles);
      } catch (const SimulatedCrash&) {
        throw;
      } catch (const std::exception& e) {
        error = e.what();
      }
      const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
      std::lock_guard lock(mutex_);
      band_claimed_[band_index] = false;
      for (int id : loading) {
        if (error.empty()) {
          transition_locked(id, JobState::Loaded, id == loading.front() ? bytes : 0,
                            static_cast<std::int64_t>(seconds * 1000));
        } else {
          fail_locked(id, error);
        }
      }
      if (error.empty()) {
        stats_.bytes_loaded += bytes;
        stats_.tiles_loaded += tiles;
        stats_.load_seconds += seconds;
      }
      cv_.notify_all();
    }
  }

  void cleaner() {
    for (;;) {
      int band_index = -1;
      {
        std::unique_lock lock(mutex_);
        for (;;) {
          if (stop_locked()) return;
          for (std::size_t b = 0; b < plan_.bands.size() && band_index < 0; ++b) {
            const Band& band = plan_.bands[b];
            const bool any_loaded = std::any_of(band.jobs.begin(), band.jobs.end(), [&](int id) {
              return jobs_[id - 1].state == JobState::Loaded;
            });
            if (!band_claimed_[b] && any_loaded && band_done(band)) band_index = static_cast<int>(b);
          }
          if (band_index >= 0) break;
          cv_.wait_for(lock, std::chrono::milliseconds(20));
        }
        band_claimed_[band_index] = true;
      }
      const Band& band = plan_.bands[band_index];
      std::error_code ec;
      fs::remove_all(staged_dir(work_, band.band_id), ec);
      if (options_.sync) sync_path(work_ / "staged", O_RDONLY | O_DIRECTORY);
      checkpoint(options_.faults, "loader.cleanup.removed");
      std::lock_guard lock(mutex_);
      band_claimed_[band_index] = false;
      for (int id : band.jobs) {
        if (jobs_[id - 1].state == JobState::Loaded) transition_locked(id, JobState::Cleaned);
      }
      cv_.notify_all();
    }
  }

  void cut_job(const Job& job, std::uint64_t& read, std::uint64_t& staged) {
    std::vector<SourceRaster> rasters;
    for (const auto& id : job.sources) {
      const PlannedSource& src = plan_.source(id);
      rasters.push_back(read_source(src.raw_path, src.sidecar_path));
      read += static_cast<std::uint64_t>(rasters.back().pixels.size());
    }
    const RowRange rows{job.cell_row, job.cell_row};
    const std::vector<Cut> cuts =
        job.theme == Theme::Usgs ? cut_usgs(rasters, job.zone, rows) : cut_spin2(rasters, rows);
    const fs::path dir = staged_dir(work_, job.band_id);
    fs::create_directories(dir);

    json job_doc{{"job", job.job_id}, {"cuts", json::array()}};
    for (const Cut& cut : cuts) {
      const std::vector<EncodedTile> tiles = encode_cut(cut, options_.key_secret);
      json cut_doc{{"grid", cut.grid.to_string()},
                   {"theme", to_string(cut.theme)},
                   {"acquired", cut.acquired.to_string()},
                   {"sources", cut.sources},
                   {"key_id", ""},
                   {"place", ""},
                   {"tiles", json::array()}};
      for (const EncodedTile& t : tiles) {
        const std::string name = tile_file_name(cut.grid, t.level, t.sub_row, t.sub_col);
        write_file(dir / name, {reinterpret_cast<const char*>(t.blob.data()), t.blob.size()}, options_.sync);
        staged += t.blob.size();
        if (t.encrypted) cut_doc["key_id"] = t.key_id;
        cut_doc["tiles"].push_back({{"level", to_string(t.level)},
                                    {"row", t.sub_row},
                                    {"col", t.sub_col},
                                    {"encrypted", t.encrypted},
                                    {"file", name}});
      }
      if (gazetteer_ != nullptr) {
        if (const auto place = gazetteer_->nearest_place(cut.grid)) cut_doc["place"] = place->alternate_name;
      }
      write_file(dir / (cut.grid.to_string() + ".json"), cut_doc.dump(1), options_.sync);
      job_doc["cuts"].push_back(cut.grid.to_string());
      checkpoint(options_.faults, "loader.cut.staged");
    }
    write_file(dir / ("job-" + std::to_string(job.job_id) + ".json"), job_doc.dump(1), options_.sync);
    if (options_.sync) sync_path(dir, O_RDONLY | O_DIRECTORY);
  }

  void load_band(const Band& band, std::uint64_t& bytes, std::uint64_t& tile_count) {
    const fs::path dir = staged_dir(work_, band.band_id);
    LoadBatch batch;
    std::vector<ImageRegistration> registrations;
    std::set<std::string> source_ids;
    std::vector<int> staged_jobs;
    {
      std::lock_guard lock(mutex_);
      for (int id : band.jobs) {
        const JobState s = jobs_[id - 1].state;
        if (s == JobState::Cut || s == JobState::Loading || s == JobState::Loaded) staged_jobs.push_back(id);
      }
    }
    for (int id : staged_jobs) {
      const json job_doc = json::parse(slurp(dir / ("job-" + std::to_string(id) + ".json")));
      for (const auto& grid_text : job_doc.at("cuts")) {
        const json cut = json::parse(slurp(dir / (grid_text.get<std::string>() + ".json")));
        const Theme theme = parse_theme(cut.at("theme").get<std::string>());
        const GridKey grid = GridKey::parse(theme, cut.at("grid").get<std::string>());
        const Date acquired = Date::parse(cut.at("acquired").get<std::string>());
        std::string sources;
        for (const auto& s : cut.at("sources")) {
          if (!sources.empty()) sources += ",";
          sources += s.get<std::string>();
          source_ids.insert(s.get<std::string>());
        }
        batch.images.push_back(ImageMetaRecord{grid, acquired, sources, true, cut.at("key_id").get<std::string>(),
                                               cut.at("place").get<std::string>(), 0});
        registrations.push_back({grid, acquired});
        for (const auto& t : cut.at("tiles")) {
          const std::string blob_text = slurp(dir / t.at("file").get<std::string>());
          TileRecord rec;
          rec.key = TileKey{grid, parse_level(t.at("level").get<std::string>()),
                            static_cast<std::uint8_t>(t.at("row").get<int>()),
                            static_cast<std::uint8_t>(t.at("col").get<int>()), acquired};
          rec.blob.assign(blob_text.begin(), blob_text.end());
          rec.encrypted = t.at("encrypted").get<bool>();
          if (rec.encrypted) rec.key_id = cut.at("key_id").get<std::string>();
          bytes += rec.blob.size();
          batch.tiles.push_back(std::move(rec));
        }
      }
    }
    for (const auto& id : source_ids) {
      const PlannedSource& src = plan_.source(id);
      const SourceInfo info = SourceInfo::from_json(slurp(src.sidecar_path));
      OriginalMetadataRecord o;
      o.source_id = info.source_id;
      o.img_source = info.theme;
      o.image_type = parse_image_type(info.image_type);
      o.instrument = info.instrument;
      o.acquired_date = info.acquired;
      o.processed_date = info.processed;
      o.resolution = info.pixel_scale_m;
      o.width = static_cast<std::uint32_t>(info.width);
      o.height = static_cast<std::uint32_t>(info.height);
      o.attributes = info.attributes;
      batch.originals.push_back(std::move(o));
    }
    tile_count = batch.tiles.size();
    checkpoint(options_.faults, "loader.load.before_put");
    store_.put_tiles(batch);
    checkpoint(options_.faults, "loader.load.after_put");
    if (gazetteer_ != nullptr) gazetteer_->register_images(registrations);
  }

  fs::path work_;
  const LoadPlan& plan_;
  Store& store_;
  Gazetteer* gazetteer_;
  RunOptions options_;
  Journal journal_;

  std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<JobRuntime> jobs_;
  std::vector<bool> band_claimed_;
  std::exception_ptr fatal_;
  LoadStats stats_;
};

}  // namespace

LoadStats run_load(const fs::path& work_dir, Store& store, Gazetteer* gazetteer, const RunOptions& options) {
  if (options.cutters < 1 || options.loaders < 1) throw RangeError("need at least one cutter and one loader");
  const LoadPlan plan = read_plan(work_dir);
  LoadRun run(work_dir, plan, store, gazetteer, options);
  return run.run();
}

std::string LoadProgress::to_json() const {
  json states = json::object();
  for (int s = 0; s < kJobStateCount; ++s) states[std::string(to_string(static_cast<JobState>(s)))] = totals[s];
  json bands_doc = json::array();
  for (const auto& b : bands) {
    json counts = json::object();
    for (int s = 0; s < kJobStateCount; ++s) counts[std::string(to_string(static_cast<JobState>(s)))] = b.counts[s];
    bands_doc.push_back({{"band", b.band_id},
                         {"theme", to_string(b.theme)},
                         {"zone", b.zone},
                         {"rows", {b.rows.first, b.rows.last}},
                         {"counts", counts}});
  }
  json flagged_doc = json::array();
  for (const auto& f : flagged) flagged_doc.push_back({{"path", f.path}, {"reason", f.reason}});
  return json{{"total_jobs", total_jobs},
              {"totals", states},
              {"bands", bands_doc},
              {"bytes_cut", bytes_cut},
              {"bytes_loaded", bytes_loaded},
              {"cut_mb_per_s", cut_mb_per_s},
              {"load_mb_per_s", load_mb_per_s},
              {"flagged", flagged_doc}}
      .dump(2);
}

LoadProgress load_progress(const fs::path& work_dir) {
  const LoadPlan plan = read_plan(work_dir);
  const auto entries = Journal::read(work_dir / "journal.log");
  const auto status = replay_journal(entries);
  LoadProgress p;
  p.total_jobs = plan.jobs.size();
  p.flagged = plan.flagged;
  for (const Band& band : plan.bands) {
    BandProgress bp{band.band_id, band.theme, band.zone, band.rows, {}};
    for (int id : band.jobs) {
      const auto it = status.find(id);
      const JobState s = it == status.end() ? JobState::Queued : it->second.state;
      ++bp.counts[static_cast<int>(s)];
      ++p.totals[static_cast<int>(s)];
    }
    p.bands.push_back(bp);
  }
  std::int64_t cut_ms = 0;
  std::int64_t load_ms = 0;
  for (const auto& e : entries) {
    if (e.state == JobState::Cut) {
      p.bytes_cut += e.bytes;
      cut_ms += e.phase_ms;
    } else if (e.state == JobState::Loaded) {
      p.bytes_loaded += e.bytes;
      if (e.bytes > 0) load_ms += e.phase_ms;
    }
  }
  p.cut_mb_per_s = mb_per_s(p.bytes_cut, static_cast<double>(cut_ms) / 1000.0);
  p.load_mb_per_s = mb_per_s(p.bytes_loaded, static_cast<double>(load_ms) / 1000.0);
  return p;
}

}  // namespace terratile
