#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "terratile/fault.hpp"
#include "terratile/gazetteer.hpp"
#include "terratile/journal.hpp"
#include "terratile/loader.hpp"
#include "terratile/store.hpp"

using namespace terratile;
using fixtures::TempDir;
namespace fs = std::filesystem;

namespace {

Store::Options no_sync() {
  Store::Options o;
  o.sync = false;
  return o;
}

RunOptions quick() {
  RunOptions o;
  o.sync = false;
  o.backoff = std::chrono::milliseconds(1);
  return o;
}

}  // namespace

TEST_CASE("journal lines are checksummed and torn tails dropped") {
  TempDir dir("journal");
  const fs::path path = dir / "journal.log";
  {
    Journal j(path, false);
    j.append({1, JobState::Cutting, 1, 100, 0, 0, ""});
    j.append({1, JobState::Cut, 1, 200, 4096, 12, ""});
    j.append({2, JobState::Failed, 1, 300, 0, 0, "disk full"});
  }
  const auto entries = Journal::read(path);
  REQUIRE(entries.size() == 3);
  CHECK(entries[1].bytes == 4096);
  CHECK(entries[2].error == "disk full");
  const auto status = replay_journal(entries);
  CHECK(status.at(1).state == JobState::Cut);
  CHECK(status.at(2).last_error == "disk full");

  // A partial final line is discarded and truncated on the next open.
  std::string text = fixtures::slurp(path);
  fixtures::spit(path, text + text.substr(0, 20));
  CHECK(Journal::read(path).size() == 3);
  { Journal j(path, false); }
  CHECK(fixtures::slurp(path) == text);

  // A corrupted line ends the readable prefix.
  text[12] = text[12] == 'a' ? 'b' : 'a';
  fixtures::spit(path, text);
  CHECK(Journal::read(path).empty());
}

TEST_CASE("job state machine") {
  CHECK(is_legal_transition(JobState::Queued, JobState::Cutting));
  CHECK(is_legal_transition(JobState::Loaded, JobState::Cleaned));
  CHECK(is_legal_transition(JobState::Cutting, JobState::Failed));
  CHECK(is_legal_transition(JobState::Failed, JobState::Queued));
  CHECK_FALSE(is_legal_transition(JobState::Queued, JobState::Cut));
  CHECK_FALSE(is_legal_transition(JobState::Cleaned, JobState::Queued));
  CHECK_FALSE(is_legal_transition(JobState::Failed, JobState::Cutting));
  CHECK(parse_job_state("loading") == JobState::Loading);
  CHECK_THROWS_AS(parse_job_state("bogus"), FormatError);
}

TEST_CASE("planning groups cell rows into bands") {
  TempDir dir("plan");
  const fs::path manifest = fixtures::three_band_manifest(dir.path());
  // Add a raster whose size disagrees with its sidecar and a duplicate id.
  auto json = nlohmann::json::parse(fixtures::slurp(manifest));
  fixtures::spit(dir / "short.raw", "abc");
  json.push_back({{"path", "short.raw"}, {"sidecar_path", "strip-a.json"}});
  json.push_back({{"path", "strip-a.raw"}, {"sidecar_path", "strip-a.json"}});
  fixtures::spit(manifest, json.dump());

  const LoadPlan plan = plan_load(manifest, 1);
  CHECK(plan.sources.size() == 2);
  CHECK(plan.flagged.size() == 2);
  REQUIRE(plan.bands.size() == 3);
  CHECK(plan.jobs.size() == 3);
  CHECK(plan.bands[0].rows.first == 4393);
  CHECK(plan.bands[2].rows.last == 4395);
  for (const Band& b : plan.bands) CHECK(b.jobs.size() == 1);
  // strip-b starts one cell row below the top.
  for (const Job& j : plan.jobs) {
    if (j.cell_row == 4395) CHECK(j.sources == std::vector<std::string>{"strip-a"});
    else CHECK(j.sources.size() == 2);
  }

  const LoadPlan wide = plan_load(manifest);
  CHECK(wide.bands.size() == 1);
  CHECK(wide.jobs.size() == 3);

  // The plan round-trips through JSON and is deterministic.
  CHECK(LoadPlan::from_json(plan.to_json()).to_json() == plan.to_json());
  CHECK(plan_load(manifest, 1).to_json() == plan.to_json());

  save_plan(plan, dir / "work");
  fixtures::spit(dir / "work" / "journal.log", "");
  CHECK_THROWS(save_plan(wide, dir / "work"));
  CHECK_NOTHROW(save_plan(plan, dir / "work"));
}

TEST_CASE("a load run commits every cut and cleans staging") {
  TempDir dir("load");
  const fs::path manifest = fixtures::three_band_manifest(dir.path());
  save_plan(plan_load(manifest, 1), dir / "work");
  Store store(dir / "store", no_sync());
  Gazetteer gaz = Gazetteer::parse(
      "@country|USA|US\n@state|USA|WA|Washington\n"
      "1|Nowhere|Nowhere|USA|WA|8|47.62|-122.45\n");
  const LoadStats stats = run_load(dir / "work", store, &gaz, quick());
  CHECK(stats.jobs_cleaned == 3);
  CHECK(stats.jobs_failed == 0);
  CHECK(store.current_epoch() == 3);  // one commit per band

  // Oracle: cut the same sources directly.
  std::vector<SourceRaster> sources{read_source(dir / "strip-a.raw", dir / "strip-a.json"),
                                    read_source(dir / "strip-b.raw", dir / "strip-b.json")};
  const auto cuts = cut_usgs(sources, 10);
  REQUIRE(cuts.size() == 5);
  CHECK(stats.tiles_loaded == cuts.size() * 67);
  for (const Cut& cut : cuts) {
    const auto images = encode_cut(cut, "terratile");
    for (const auto& t : images) {
      const auto rec = store.get_tile(cut.grid, t.level, t.sub_row, t.sub_col);
      REQUIRE(rec);
      CHECK(rec->blob == t.blob);
      CHECK(rec->key.acquired == cut.acquired);
    }
    const auto meta = store.image_meta(cut.grid, cut.acquired);
    REQUIRE(meta);
    std::string joined;
    for (const auto& id : cut.sources) joined += (joined.empty() ? "" : ",") + id;
    CHECK(meta->source == joined);
  }
  CHECK(store.original_metadata("strip-b")->width == 1800);
  CHECK(fs::is_empty(dir / "work" / "staged"));

  const auto progress = load_progress(dir / "work");
  CHECK(progress.totals[static_cast<int>(JobState::Cleaned)] == 3);
  CHECK(progress.bands.size() == 3);

  // Re-running a finished plan is a no-op.
  run_load(dir / "work", store, &gaz, quick());
  CHECK(store.current_epoch() == 3);
}

TEST_CASE("a crashed run resumes to the same store") {
  TempDir dir("resume");
  const fs::path manifest = fixtures::three_band_manifest(dir.path());
  const LoadPlan plan = plan_load(manifest, 1);

  save_plan(plan, dir / "clean");
  CheckpointCounter counter;
  {
    Store store(dir / "clean-store", no_sync());
    RunOptions o = quick();
    o.faults = &counter;
    run_load(dir / "clean", store, nullptr, o);
    store.snapshot_full(dir / "clean.snap");
  }
  REQUIRE(counter.count() > 10);

  for (std::uint64_t n : {std::uint64_t{1}, counter.count() / 2, counter.count() - 1}) {
    const fs::path work = dir / ("w" + std::to_string(n));
    const fs::path root = dir / ("s" + std::to_string(n));
    save_plan(plan, work);
    CrashAfter crash(n);
    {
      Store store(root, no_sync());
      RunOptions o = quick();
      o.faults = &crash;
      CHECK_THROWS_AS(run_load(work, store, nullptr, o), SimulatedCrash);
    }
    Store store(root, no_sync());
    const LoadStats st = run_load(work, store, nullptr, quick());
    CHECK(st.jobs_cleaned == 3);
    store.snapshot_full(dir / "resumed.snap");
    CHECK(fixtures::slurp(dir / "resumed.snap") == fixtures::slurp(dir / "clean.snap"));
  }
}

TEST_CASE("failing jobs are retried and then parked") {
  TempDir dir("retry");
  const fs::path manifest = fixtures::three_band_manifest(dir.path());
  save_plan(plan_load(manifest, 1), dir / "work");
  // strip-b disappears after planning: the two rows it touches cannot be cut.
  fs::remove(dir / "strip-b.raw");
  Store store(dir / "store", no_sync());
  const LoadStats st = run_load(dir / "work", store, nullptr, quick());
  CHECK(st.jobs_failed == 2);
  CHECK(st.jobs_cleaned == 1);
  const auto status = replay_journal(Journal::read(dir / "work" / "journal.log"));
  int failed = 0;
  for (const auto& [id, s] : status) {
    if (s.state == JobState::Failed) {
      ++failed;
      CHECK(s.attempts == kMaxJobAttempts);
      CHECK_FALSE(s.last_error.empty());
    }
  }
  CHECK(failed == 2);
  CHECK(store.current_epoch() == 1);
}
