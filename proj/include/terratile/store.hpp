#pragma once

// Grid-clustered tile and metadata store.
//
// On disk:
//   {root}/MANIFEST          live segment list, generation, epoch
//   {root}/segments/*.seg    compacted records, tiles in key order
//   {root}/wal.log           framed batches appended since the last compaction
//   {root}/hits.log          request counters (absolute values, not fsync'd)
//
// The in-memory index is keyed by (theme, level, zone, Morton key, sub row,
// sub col, acquired); tile blobs stay on disk and are read with pread.
// Many readers may run concurrently with one writer. Every committed batch
// gets the next insert epoch; snapshots select records by epoch.

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>  // std::shared_lock
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "terratile/common.hpp"
#include "terratile/fault.hpp"
#include "terratile/spatial_index.hpp"

namespace terratile {

struct TileKey {
  GridKey grid;
  Level level = Level::Tile;
  std::uint8_t sub_row = 0;
  std::uint8_t sub_col = 0;
  Date acquired;

  auto order() const {
    return std::make_tuple(grid.theme, level, grid.zone, grid.morton, sub_row, sub_col,
                           acquired.value());
  }
  friend bool operator<(const TileKey& a, const TileKey& b) { return a.order() < b.order(); }
  friend bool operator==(const TileKey& a, const TileKey& b) { return a.order() == b.order(); }
};

struct TileRecord {
  TileKey key;
  std::vector<std::uint8_t> blob;
  bool encrypted = false;
  std::string key_id;
  std::uint64_t insert_epoch = 0;

  bool operator==(const TileRecord&) const = default;
};

struct ImageMetaRecord {
  GridKey grid;
  Date acquired;
  std::string source;
  bool visible = true;
  std::string key_id;
  std::string center_place_name;
  std::uint64_t insert_epoch = 0;

  bool operator==(const ImageMetaRecord&) const = default;
};

enum class ImageType : std::uint8_t { Jpeg = 0, Tiff = 1 };

struct OriginalMetadataRecord {
  std::string source_id;
  Theme img_source = Theme::Usgs;
  ImageType image_type = ImageType::Jpeg;
  std::string instrument;
  Date acquired_date;
  Date processed_date;
  double resolution = 0.0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::map<std::string, std::string> attributes;
  std::uint64_t insert_epoch = 0;

  bool operator==(const OriginalMetadataRecord&) const = default;
};

struct PickRecord {
  std::string title;
  GridKey grid;
  std::string caption;
  std::uint64_t insert_epoch = 0;

  bool operator==(const PickRecord&) const = default;
};

enum class HitKind : std::uint8_t { GridRequest = 0, GazetteerRequest = 1 };

struct HitCount {
  HitKind kind = HitKind::GridRequest;
  std::string key;
  std::uint64_t count = 0;
};

/// One loader commit: tiles plus the image and source metadata they need.
struct LoadBatch {
  std::vector<TileRecord> tiles;
  std::vector<ImageMetaRecord> images;
  std::vector<OriginalMetadataRecord> originals;
};

struct SnapshotInfo {
  std::uint64_t since_epoch = 0;
  std::uint64_t upto_epoch = 0;
  std::uint64_t record_count = 0;
};

struct StoreStats {
  std::map<std::pair<Theme, Level>, std::uint64_t> tiles;
  std::uint64_t tile_bytes = 0;
  std::uint64_t images = 0;
  std::uint64_t hidden_images = 0;
  std::uint64_t originals = 0;
  std::uint64_t picks = 0;
  std::uint64_t epoch = 0;
  std::uint64_t wal_bytes = 0;
  std::uint64_t segments = 0;
  std::uint64_t generation = 0;
};

/// Shared mutex that stops admitting new readers once a writer is waiting.
/// glibc's std::shared_mutex prefers readers, so a steady stream of tile
/// reads could hold off a load commit indefinitely. Not recursive.
class WriterPreferringMutex {
 public:
  void lock();
  void unlock();
  void lock_shared();
  void unlock_shared();

 private:
  std::mutex m_;
  std::condition_variable cv_;
  int readers_ = 0;
  int waiting_writers_ = 0;
  bool writer_ = false;
};

class Store {
 public:
  struct Options {
    std::uint64_t segment_bytes = 64ull << 20;
    bool sync = true;
    FaultInjector* faults = nullptr;
  };

  explicit Store(std::filesystem::path root);
  Store(std::filesystem::path root, Options options);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const std::filesystem::path& root() const { return root_; }

  /// Atomic, idempotent batch insert. USGS tiles replace older acquisitions
  /// of the same slot; SPIN2 keeps every acquisition. Re-inserting an
  /// existing image record keeps its current visibility. Returns the number
  /// of tile records inserted or replaced; a batch with no effect does not
  /// consume an epoch. Throws InvariantError (nothing written) on bad input.
  std::size_t put_tiles(const LoadBatch& batch);

  /// Latest visible acquisition unless one is named. Hidden behaves as absent.
  std::optional<TileRecord> get_tile(const GridKey& grid, Level level, int sub_row, int sub_col,
                                     std::optional<Date> acquired = std::nullopt) const;

  /// Visible tiles of the given cells at one level, ordered by
  /// (grid key, sub row, sub col, acquired).
  std::vector<TileRecord> get_range(Theme theme, Level level, std::span<const GridKey> cells) const;

  /// Sets the visibility of every acquisition at the given cells. Returns
  /// the number of image records whose flag changed.
  std::size_t hide_region(Theme theme, std::span<const GridKey> cells, bool visible);

  void record_hit(HitKind kind, std::string_view key);
  std::uint64_t hit_count(HitKind kind, std::string_view key) const;
  /// Highest counts first, ties by key.
  std::vector<HitCount> top_hits(HitKind kind, std::size_t n) const;

  std::optional<ImageMetaRecord> image_meta(const GridKey& grid, Date acquired) const;
  std::vector<ImageMetaRecord> image_metas(const GridKey& grid) const;
  std::vector<ImageMetaRecord> all_image_metas() const;
  bool has_visible_imagery(const GridKey& grid) const;
  std::optional<OriginalMetadataRecord> original_metadata(std::string_view source_id) const;

  /// Throws InvariantError unless the cell has visible imagery.
  void add_pick(PickRecord pick);
  std::vector<PickRecord> picks() const;

  SnapshotInfo snapshot_full(const std::filesystem::path& path) const;
  SnapshotInfo snapshot_incremental(const std::filesystem::path& path,
                                    std::uint64_t since_epoch) const;
  /// Verifies every file before applying any. Files are applied in epoch
  /// order; records keep their original epochs. Returns records applied.
  std::uint64_t restore(std::span<const std::filesystem::path> paths);

  /// Rewrites all live records into key-ordered segments and empties the WAL.
  void compact();

  /// Tile keys in on-disk segment order (for clustering checks).
  std::vector<TileKey> segment_tile_order() const;

  StoreStats stats() const;
  std::uint64_t current_epoch() const;

 private:
  struct BlobLocation {
    std::uint32_t file = 0;  // 0 = WAL, otherwise segment slot
    std::uint64_t offset = 0;
    std::uint32_t size = 0;
  };
  struct TileEntry {
    BlobLocation location;
    bool encrypted = false;
    std::string key_id;
    std::uint64_t insert_epoch = 0;
  };
  using ImageKey = std::pair<GridKey, std::int32_t>;
  using PickKey = std::pair<GridKey, std::string>;

  struct Record;
  struct Frame;

  void open_files();
  void load_segment(std::uint32_t slot, const std::filesystem::path& path);
  void validate_batch(const LoadBatch& batch) const;
  void replay_wal();
  void load_hits();

  std::vector<std::uint8_t> read_blob(const BlobLocation& loc) const;
  TileRecord materialize(const TileKey& key, const TileEntry& entry) const;
  bool visible_locked(const GridKey& grid, Date acquired) const;
  std::optional<std::pair<TileKey, const TileEntry*>> usgs_slot_locked(const TileKey& key) const;

  void commit_frame(std::uint64_t epoch_after, std::vector<Record>& records);
  void apply_locked(const Record& record, const BlobLocation* location);
  SnapshotInfo write_snapshot(const std::filesystem::path& path, std::uint64_t since) const;

  std::filesystem::path root_;
  Options options_;

  mutable std::mutex writer_mutex_;
  mutable WriterPreferringMutex index_mutex_;
  mutable std::mutex hits_mutex_;

  std::map<TileKey, TileEntry> tiles_;
  std::map<ImageKey, ImageMetaRecord> images_;
  std::map<std::string, OriginalMetadataRecord> originals_;
  std::map<PickKey, PickRecord> picks_;
  std::map<std::pair<HitKind, std::string>, std::uint64_t> hits_;

  std::uint64_t epoch_ = 0;
  std::uint64_t generation_ = 0;
  std::vector<std::string> segment_names_;
  std::map<std::uint32_t, int> segment_fds_;
  std::uint32_t next_slot_ = 1;
  int wal_fd_ = -1;
  std::uint64_t wal_size_ = 0;
  int hits_fd_ = -1;
};

}  // namespace terratile
