#pragma once

// Band-oriented bulk load. A plan groups source rasters into bands of
// consecutive cell rows per (theme, zone), south to north; each cell row of
// a band is one job. Cutters turn queued jobs into staged JPEG files,
// loaders commit one store batch per band, and the cleanup role deletes the
// staged files. Every transition goes through the journal first, so a
// restarted run resumes from the last durable state:
//
//   {work}/plan.json
//   {work}/journal.log
//   {work}/staged/{bandId}/{gridid}_{level}_{row}_{col}.jpg
//   {work}/staged/{bandId}/{gridid}.json      per-cut metadata
//   {work}/staged/{bandId}/job-{jobId}.json   cuts produced by a job

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "terratile/common.hpp"
#include "terratile/fault.hpp"
#include "terratile/journal.hpp"
#include "terratile/pyramid.hpp"

namespace terratile {

class Store;
class Gazetteer;

inline constexpr int kDefaultRowsPerBand = 10;
inline constexpr int kMaxJobAttempts = 3;

struct PlannedSource {
  std::string source_id;
  std::filesystem::path raw_path;
  std::filesystem::path sidecar_path;
  Theme theme = Theme::Usgs;
  int zone = 0;  // 0 for SPIN2
  std::int64_t anchor_row = 0;
  RowRange rows;
};

struct Band {
  int band_id = 0;
  Theme theme = Theme::Usgs;
  int zone = 0;
  RowRange rows;
  std::vector<std::string> members;  // sources anchored in this band
  std::vector<int> jobs;
};

struct Job {
  int job_id = 0;
  int band_id = 0;
  Theme theme = Theme::Usgs;
  int zone = 0;
  std::int64_t cell_row = 0;
  std::vector<std::string> sources;  // every source touching the row
};

struct FlaggedSource {
  std::string path;
  std::string reason;
};

struct LoadPlan {
  int rows_per_band = kDefaultRowsPerBand;
  std::vector<PlannedSource> sources;
  std::vector<Band> bands;
  std::vector<Job> jobs;
  std::vector<FlaggedSource> flagged;

  std::string to_json() const;
  static LoadPlan from_json(std::string_view text);
  const PlannedSource& source(std::string_view id) const;
};

/// Reads a manifest (JSON list of {path, sidecar_path}, relative to the
/// manifest's directory) and groups its sources. Deterministic.
LoadPlan plan_load(const std::filesystem::path& manifest, int rows_per_band = kDefaultRowsPerBand);

/// Writes plan.json into the work directory. Refuses to replace a different
/// plan once a journal exists.
void save_plan(const LoadPlan& plan, const std::filesystem::path& work_dir);
LoadPlan read_plan(const std::filesystem::path& work_dir);

struct RunOptions {
  int cutters = 1;
  int loaders = 1;
  int max_attempts = kMaxJobAttempts;
  std::chrono::milliseconds backoff{20};  // doubled per failed attempt
  std::string key_secret = "terratile";
  bool sync = true;
  FaultInjector* faults = nullptr;
};

struct LoadStats {
  std::uint64_t bytes_cut = 0;     // source raster bytes read by cutters
  std::uint64_t bytes_staged = 0;  // JPEG bytes written to staging
  std::uint64_t bytes_loaded = 0;  // tile bytes committed to the store
  std::uint64_t tiles_loaded = 0;
  double cut_seconds = 0.0;
  double load_seconds = 0.0;
  double wall_seconds = 0.0;
  std::size_t jobs_cleaned = 0;
  std::size_t jobs_failed = 0;

  double cut_mb_per_s() const;
  double load_mb_per_s() const;
};

/// Runs (or resumes) the plan in work_dir until every job is cleaned or
/// failed. The gazetteer, when given, receives register_image calls.
/// SimulatedCrash from the fault injector propagates after workers stop.
LoadStats run_load(const std::filesystem::path& work_dir, Store& store, Gazetteer* gazetteer,
                   const RunOptions& options = {});

struct BandProgress {
  int band_id = 0;
  Theme theme = Theme::Usgs;
  int zone = 0;
  RowRange rows;
  std::array<std::size_t, kJobStateCount> counts{};
};

struct LoadProgress {
  std::vector<BandProgress> bands;
  std::array<std::size_t, kJobStateCount> totals{};
  std::size_t total_jobs = 0;
  std::uint64_t bytes_cut = 0;
  std::uint64_t bytes_loaded = 0;
  double cut_mb_per_s = 0.0;
  double load_mb_per_s = 0.0;
  std::vector<FlaggedSource> flagged;

  std::string to_json() const;
};

/// Current per-band state counts from plan.json and the journal.
LoadProgress load_progress(const std::filesystem::path& work_dir);

}  // namespace terratile
