#include <atomic>
#include <random>
#include <thread>

#include "doctest.h"
#include "fixtures.hpp"
#include "terratile/fault.hpp"
#include "terratile/store.hpp"

using namespace terratile;
using fixtures::TempDir;
namespace fs = std::filesystem;

namespace {

// Crashes at the first checkpoint with this exact name.
class CrashAtSite : public FaultInjector {
 public:
  explicit CrashAtSite(std::string site) : site_(std::move(site)) {}
  void checkpoint(std::string_view site) override {
    if (site == site_) throw SimulatedCrash(site_);
  }

 private:
  std::string site_;
};

using fixtures::batch_for;
using fixtures::cut_at;

const GridKey kUsgsCell = GridKey::from(UGridId::from_indices(10, 307, 4393));
const GridKey kSpinCell = GridKey::from(ZGridId::from_indices(2768, 13209));

Store::Options fast() {
  Store::Options o;
  o.sync = false;
  return o;
}

}  // namespace

TEST_CASE("put and get survive reopen") {
  TempDir dir("store");
  const Cut cut = cut_at(Theme::Usgs, kUsgsCell, Date(19980601), 1);
  const LoadBatch batch = batch_for(cut, "src-1");
  {
    Store s(dir.path(), fast());
    CHECK(s.current_epoch() == 0);
    CHECK(s.put_tiles(batch) == 67);
    CHECK(s.current_epoch() == 1);
    // Re-putting the same batch changes nothing and consumes no epoch.
    CHECK(s.put_tiles(batch) == 0);
    CHECK(s.current_epoch() == 1);
  }
  Store s(dir.path(), fast());
  CHECK(s.current_epoch() == 1);
  const auto t = s.get_tile(kUsgsCell, Level::Tile, 3, 4);
  REQUIRE(t);
  CHECK(t->blob == batch.tiles[3 * 8 + 4].blob);
  CHECK(t->insert_epoch == 1);
  CHECK_FALSE(s.get_tile(kUsgsCell, Level::Tile, 8, 0));
  CHECK(s.get_tile(kUsgsCell, Level::Jump, 0, 0));
  CHECK(s.original_metadata("src-1")->attributes.at("camera") == "test");
  CHECK(s.stats().tiles.at({Theme::Usgs, Level::Tile}) == 64);
}

TEST_CASE("usgs replaces older imagery, spin2 keeps every acquisition") {
  TempDir dir("store");
  Store s(dir.path(), fast());
  const auto b98 = batch_for(cut_at(Theme::Usgs, kUsgsCell, Date(19980601), 1), "a");
  const auto b99 = batch_for(cut_at(Theme::Usgs, kUsgsCell, Date(19990601), 2), "b");
  s.put_tiles(b99);
  CHECK(s.put_tiles(b98) == 0);  // older never replaces newer
  CHECK(s.get_tile(kUsgsCell, Level::Tile, 0, 0)->blob == b99.tiles[0].blob);
  CHECK(s.stats().tiles.at({Theme::Usgs, Level::Tile}) == 64);

  const auto s1 = batch_for(cut_at(Theme::Spin2, kSpinCell, Date(19950101), 3), "k1");
  const auto s2 = batch_for(cut_at(Theme::Spin2, kSpinCell, Date(19970101), 4), "k2");
  s.put_tiles(s2);
  s.put_tiles(s1);
  CHECK(s.stats().tiles.at({Theme::Spin2, Level::Tile}) == 50);
  CHECK(s.get_tile(kSpinCell, Level::Tile, 0, 0)->key.acquired == Date(19970101));
  CHECK(s.get_tile(kSpinCell, Level::Tile, 0, 0, Date(19950101))->blob == s1.tiles[0].blob);
  CHECK(s.image_metas(kSpinCell).size() == 2);
}

TEST_CASE("invalid batches write nothing") {
  TempDir dir("store");
  Store s(dir.path(), fast());
  auto b = batch_for(cut_at(Theme::Spin2, kSpinCell, Date(19950101), 3), "k1");
  SUBCASE("plain spin2 full resolution") {
    b.tiles[0].encrypted = false;
    CHECK_THROWS_AS(s.put_tiles(b), InvariantError);
  }
  SUBCASE("missing image record") {
    b.images.clear();
    CHECK_THROWS_AS(s.put_tiles(b), InvariantError);
  }
  SUBCASE("tile outside the grid") {
    b.tiles[0].key.sub_row = 5;
    CHECK_THROWS_AS(s.put_tiles(b), InvariantError);
  }
  SUBCASE("empty blob") {
    b.tiles[7].blob.clear();
    CHECK_THROWS_AS(s.put_tiles(b), InvariantError);
  }
  CHECK(s.current_epoch() == 0);
  CHECK(s.all_image_metas().empty());
}

TEST_CASE("hiding a region") {
  TempDir dir("store");
  Store s(dir.path(), fast());
  const auto b = batch_for(cut_at(Theme::Usgs, kUsgsCell, Date(19980601), 1), "a");
  s.put_tiles(b);
  const std::vector<GridKey> cells{kUsgsCell};
  CHECK(s.hide_region(Theme::Usgs, cells, false) == 1);
  CHECK_FALSE(s.get_tile(kUsgsCell, Level::Tile, 0, 0));
  CHECK(s.get_range(Theme::Usgs, Level::Tile, cells).empty());
  CHECK_FALSE(s.has_visible_imagery(kUsgsCell));
  CHECK(s.hide_region(Theme::Usgs, cells, false) == 0);

  // Reloading the same imagery does not unhide it.
  s.put_tiles(b);
  CHECK_FALSE(s.get_tile(kUsgsCell, Level::Tile, 0, 0));

  CHECK(s.hide_region(Theme::Usgs, cells, true) == 1);
  CHECK(s.get_tile(kUsgsCell, Level::Tile, 0, 0)->blob == b.tiles[0].blob);
  CHECK(s.get_range(Theme::Usgs, Level::Tile, cells).size() == 64);
}

TEST_CASE("a torn wal frame is dropped on reopen") {
  TempDir dir("store");
  const auto first = batch_for(cut_at(Theme::Usgs, kUsgsCell, Date(19980601), 1), "a");
  const GridKey east = GridKey::from(UGridId::from_indices(10, 308, 4393));
  const auto second = batch_for(cut_at(Theme::Usgs, east, Date(19980601), 2), "b");
  {
    Store s(dir.path(), fast());
    s.put_tiles(first);
  }
  for (const char* site : {"store.wal.append", "store.wal.torn"}) {
    CrashAtSite crash(site);
    Store::Options o = fast();
    o.faults = &crash;
    {
      Store s(dir.path(), o);
      CHECK_THROWS_AS(s.put_tiles(second), SimulatedCrash);
    }
    Store s(dir.path(), fast());
    CHECK(s.current_epoch() == 1);
    CHECK_FALSE(s.get_tile(east, Level::Tile, 0, 0));
    CHECK(s.get_tile(kUsgsCell, Level::Tile, 0, 0));
  }
  // Once synced the frame is durable.
  CrashAtSite crash("store.wal.synced");
  Store::Options o = fast();
  o.faults = &crash;
  {
    Store s(dir.path(), o);
    CHECK_THROWS_AS(s.put_tiles(second), SimulatedCrash);
  }
  Store s(dir.path(), fast());
  CHECK(s.current_epoch() == 2);
  CHECK(s.get_tile(east, Level::Tile, 0, 0));
}

TEST_CASE("compaction clusters tiles and survives crashes") {
  TempDir dir("store");
  std::vector<LoadBatch> batches;
  for (std::uint32_t i = 0; i < 4; ++i) {
    const GridKey g = GridKey::from(UGridId::from_indices(10, 310 - i, 4390 + i));
    batches.push_back(batch_for(cut_at(Theme::Usgs, g, Date(19980601), i), "s" + std::to_string(i)));
  }
  std::string before;
  {
    Store::Options o = fast();
    o.segment_bytes = 200 * 1024;  // several segments
    Store s(dir.path(), o);
    for (const auto& b : batches) s.put_tiles(b);
    s.snapshot_full(dir / "before.snap");
    before = fixtures::slurp(dir / "before.snap");
  }
  for (const char* site : {"store.compact.segments", "store.compact.manifest"}) {
    CrashAtSite crash(site);
    Store::Options o = fast();
    o.faults = &crash;
    {
      Store s(dir.path(), o);
      CHECK_THROWS_AS(s.compact(), SimulatedCrash);
    }
    Store s(dir.path(), fast());
    s.snapshot_full(dir / "after.snap");
    CHECK(fixtures::slurp(dir / "after.snap") == before);
  }
  {
    Store::Options o = fast();
    o.segment_bytes = 200 * 1024;
    Store s(dir.path(), o);
    s.compact();
    CHECK(s.stats().wal_bytes == 0);
    CHECK(s.stats().segments > 1);
    const auto order = s.segment_tile_order();
    CHECK(order.size() == 4 * 67);
    CHECK(std::is_sorted(order.begin(), order.end()));
  }
  Store s(dir.path(), fast());
  s.snapshot_full(dir / "after.snap");
  CHECK(fixtures::slurp(dir / "after.snap") == before);
  CHECK(s.get_tile(batches[2].tiles[5].key.grid, Level::Tile, 0, 5)->blob == batches[2].tiles[5].blob);
}

TEST_CASE("snapshots and restore") {
  TempDir dir("store");
  const GridKey g2 = GridKey::from(UGridId::from_indices(10, 308, 4393));
  {
    Store s(dir / "a", fast());
    s.put_tiles(batch_for(cut_at(Theme::Usgs, kUsgsCell, Date(19980601), 1), "a"));
    const auto full = s.snapshot_full(dir / "full1.snap");
    CHECK(full.since_epoch == 0);
    CHECK(full.upto_epoch == 1);
    s.put_tiles(batch_for(cut_at(Theme::Usgs, g2, Date(19980601), 2), "b"));
    const std::vector<GridKey> cells{kUsgsCell};
    s.hide_region(Theme::Usgs, cells, false);
    const auto inc = s.snapshot_incremental(dir / "inc.snap", 1);
    CHECK(inc.since_epoch == 1);
    CHECK(inc.upto_epoch == s.current_epoch());
    s.snapshot_full(dir / "full2.snap");
  }
  {
    Store r(dir / "b", fast());
    const std::vector<fs::path> files{dir / "inc.snap", dir / "full1.snap"};  // any order
    r.restore(files);
    r.snapshot_full(dir / "restored.snap");
    CHECK(fixtures::slurp(dir / "restored.snap") == fixtures::slurp(dir / "full2.snap"));
    CHECK_FALSE(r.get_tile(kUsgsCell, Level::Tile, 0, 0));
    CHECK(r.get_tile(g2, Level::Tile, 0, 0));
  }
  // A damaged file is rejected before anything is applied.
  std::string bytes = fixtures::slurp(dir / "inc.snap");
  bytes[bytes.size() / 2] ^= 0x5a;
  fixtures::spit(dir / "bad.snap", bytes);
  Store c(dir / "c", fast());
  const std::vector<fs::path> files{dir / "full1.snap", dir / "bad.snap"};
  CHECK_THROWS_AS(c.restore(files), CorruptDataError);
  CHECK(c.current_epoch() == 0);
  CHECK(c.all_image_metas().empty());
  fixtures::spit(dir / "short.snap", fixtures::slurp(dir / "full1.snap").substr(0, 100));
  const std::vector<fs::path> short_file{dir / "short.snap"};
  CHECK_THROWS_AS(c.restore(short_file), CorruptDataError);
}

TEST_CASE("hit counters persist") {
  TempDir dir("store");
  {
    Store s(dir.path(), fast());
    for (int i = 0; i < 5; ++i) s.record_hit(HitKind::GridRequest, "usgs:1");
    for (int i = 0; i < 7; ++i) s.record_hit(HitKind::GridRequest, "usgs:2");
    s.record_hit(HitKind::GazetteerRequest, "place=seattle");
  }
  Store s(dir.path(), fast());
  CHECK(s.hit_count(HitKind::GridRequest, "usgs:1") == 5);
  CHECK(s.hit_count(HitKind::GazetteerRequest, "place=seattle") == 1);
  CHECK(s.hit_count(HitKind::GazetteerRequest, "usgs:1") == 0);
  const auto top = s.top_hits(HitKind::GridRequest, 1);
  REQUIRE(top.size() == 1);
  CHECK(top[0].key == "usgs:2");
  s.compact();
  Store again(dir.path(), fast());
  CHECK(again.hit_count(HitKind::GridRequest, "usgs:2") == 7);
}

TEST_CASE("picks need visible imagery") {
  TempDir dir("store");
  Store s(dir.path(), fast());
  PickRecord p{"Space Needle", kUsgsCell, "Seattle", 0};
  CHECK_THROWS_AS(s.add_pick(p), InvariantError);
  s.put_tiles(batch_for(cut_at(Theme::Usgs, kUsgsCell, Date(19980601), 1), "a"));
  s.add_pick(p);
  REQUIRE(s.picks().size() == 1);
  CHECK(s.picks()[0].title == "Space Needle");
}

TEST_CASE("readers run alongside the writer") {
  TempDir dir("store");
  Store s(dir.path(), fast());
  s.put_tiles(batch_for(cut_at(Theme::Usgs, kUsgsCell, Date(19980601), 1), "a"));
  std::atomic<bool> done{false};
  std::atomic<int> bad{0};
  std::vector<std::thread> readers;
  for (int i = 0; i < 4; ++i) {
    readers.emplace_back([&] {
      while (!done) {
        const auto t = s.get_tile(kUsgsCell, Level::Tile, 1, 1);
        if (!t || t->blob.empty()) ++bad;
      }
    });
  }
  for (std::uint32_t i = 0; i < 6; ++i) {
    const GridKey g = GridKey::from(UGridId::from_indices(10, 320 + i, 4393));
    s.put_tiles(batch_for(cut_at(Theme::Usgs, g, Date(19980601), 10 + i), "w" + std::to_string(i)));
  }
  done = true;
  for (auto& t : readers) t.join();
  CHECK(bad == 0);
}
