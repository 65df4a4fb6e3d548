#include "terratile/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

#include "record_codec.hpp"
#include "terratile/pyramid.hpp"

namespace terratile {

void WriterPreferringMutex::lock() {
  std::unique_lock lock(m_);
  ++waiting_writers_;
  cv_.wait(lock, [&] { return !writer_ && readers_ == 0; });
  --waiting_writers_;
  writer_ = true;
}

void WriterPreferringMutex::unlock() {
  {
    std::lock_guard lock(m_);
    writer_ = false;
  }
  cv_.notify_all();
}

void WriterPreferringMutex::lock_shared() {
  std::unique_lock lock(m_);
  cv_.wait(lock, [&] { return !writer_ && waiting_writers_ == 0; });
  ++readers_;
}

void WriterPreferringMutex::unlock_shared() {
  bool last = false;
  {
    std::lock_guard lock(m_);
    last = --readers_ == 0;
  }
  if (last) cv_.notify_all();
}

namespace fs = std::filesystem;
using detail::AnyRecord;
using detail::ByteReader;
using detail::ByteWriter;

struct Store::Record {
  AnyRecord value;
};

namespace {

constexpr std::uint32_t kWalMagic = 0x46575454;  // "TTWF"
constexpr std::size_t kWalHeaderBytes = 12;
constexpr std::string_view kSegmentMagic = "TTSEG001";
constexpr std::string_view kSnapshotMagic = "TTSNAP01";
constexpr std::string_view kSnapshotEndMagic = "TTSNEND1";
constexpr std::uint32_t kSnapshotEndMarker = 0xFFFFFFFFu;
constexpr std::int32_t kMinDate = std::numeric_limits<std::int32_t>::min();

[[noreturn]] void throw_errno(const std::string& what) {
  throw IoError(what + ": " + std::strerror(errno));
}

int open_fd(const fs::path& path, int flags) {
  const int fd = ::open(path.c_str(), flags | O_CLOEXEC, 0644);
  if (fd < 0) throw_errno("open " + path.string());
  return fd;
}

void write_all(int fd, const std::uint8_t* data, std::size_t size, std::uint64_t offset) {
  while (size > 0) {
    const ssize_t n = ::pwrite(fd, data, size, static_cast<off_t>(offset));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("write");
    }
    data += n;
    size -= static_cast<std::size_t>(n);
    offset += static_cast<std::uint64_t>(n);
  }
}

void read_all(int fd, std::uint8_t* data, std::size_t size, std::uint64_t offset) {
  while (size > 0) {
    const ssize_t n = ::pread(fd, data, size, static_cast<off_t>(offset));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("read");
    }
    if (n == 0) throw IoError("unexpected end of file");
    data += n;
    size -= static_cast<std::size_t>(n);
    offset += static_cast<std::uint64_t>(n);
  }
}

void sync_fd(int fd) {
  if (::fsync(fd) != 0) throw_errno("fsync");
}

void sync_dir(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes bytes to path via a temporary file and rename.
void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes, bool sync) {
  const fs::path tmp = path.string() + ".tmp";
  const int fd = open_fd(tmp, O_WRONLY | O_CREAT | O_TRUNC);
  try {
    write_all(fd, bytes.data(), bytes.size(), 0);
    if (sync) sync_fd(fd);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  fs::rename(tmp, path);
  if (sync) sync_dir(path.parent_path());
}

bool valid_grid(const GridKey& grid) {
  if (grid.morton >= kMortonCodeLimit) return false;
  if (grid.theme == Theme::Spin2) {
    if (grid.zone != 0) return false;
    const auto [lon, lat] = deinterleave(grid.morton);
    return lon < static_cast<std::uint32_t>(kZGridLonCells) &&
           lat < static_cast<std::uint32_t>(kZGridLatCells);
  }
  return grid.zone >= 1 && grid.zone <= 60;
}

TileKey slot_floor(const GridKey& grid, Level level, int row, int col) {
  return TileKey{grid, level, static_cast<std::uint8_t>(row), static_cast<std::uint8_t>(col),
                 Date(kMinDate)};
}

bool same_slot(const TileKey& a, const TileKey& b) {
  return a.grid == b.grid && a.level == b.level && a.sub_row == b.sub_row &&
         a.sub_col == b.sub_col;
}

template <typename R>
bool same_ignoring_epoch(R a, R b) {
  a.insert_epoch = b.insert_epoch = 0;
  return a == b;
}

struct ParsedSnapshot {
  std::uint64_t since = 0;
  std::uint64_t upto = 0;
  std::vector<AnyRecord> records;
};

ParsedSnapshot parse_snapshot(const fs::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError& e) {
    throw CorruptDataError(std::string("snapshot unreadable: ") + e.what());
  }
  const std::string name = path.filename().string();
  ByteReader in(bytes);
  ParsedSnapshot out;
  try {
    const auto magic = in.raw(kSnapshotMagic.size());
    if (!std::equal(magic.begin(), magic.end(), kSnapshotMagic.begin()))
      throw CorruptDataError("bad magic");
    std::vector<std::uint8_t> crcs;
    for (;;) {
      const std::uint32_t len = in.u32();
      if (len == kSnapshotEndMarker) break;
      const std::uint32_t crc = in.u32();
      const auto body = in.raw(len);
      if (crc32(body) != crc) throw CorruptDataError("record checksum mismatch");
      for (int i = 0; i < 4; ++i) crcs.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
      out.records.push_back(detail::decode_record(body).value);
    }
    const std::size_t trailer_at = in.position();
    const auto end_magic = in.raw(kSnapshotEndMagic.size());
    if (!std::equal(end_magic.begin(), end_magic.end(), kSnapshotEndMagic.begin()))
      throw CorruptDataError("bad trailer");
    out.since = in.u64();
    out.upto = in.u64();
    const std::uint64_t count = in.u64();
    const std::uint32_t stream_crc = in.u32();
    const std::size_t covered = in.position() - trailer_at;
    const std::uint32_t trailer_crc = in.u32();
    if (in.remaining() != 0) throw CorruptDataError("trailing bytes");
    if (crc32(std::span(bytes).subspan(trailer_at, covered)) != trailer_crc)
      throw CorruptDataError("trailer checksum mismatch");
    if (count != out.records.size()) throw CorruptDataError("record count mismatch");
    if (crc32(crcs) != stream_crc) throw CorruptDataError("record stream checksum mismatch");
    if (out.since > out.upto) throw CorruptDataError("bad epoch range");
    for (const auto& r : out.records) {
      const auto e = detail::record_epoch(r);
      if (e <= out.since || e > out.upto) throw CorruptDataError("record epoch outside range");
    }
  } catch (const CorruptDataError& e) {
    throw CorruptDataError("snapshot " + name + ": " + e.what());
  }
  return out;
}

}  // namespace

Store::Store(fs::path root) : Store(std::move(root), Options{}) {}

Store::Store(fs::path root, Options options) : root_(std::move(root)), options_(options) {
  fs::create_directories(root_ / "segments");
  try {
    open_files();
  } catch (...) {
    for (auto& [slot, fd] : segment_fds_) ::close(fd);
    if (wal_fd_ >= 0) ::close(wal_fd_);
    if (hits_fd_ >= 0) ::close(hits_fd_);
    throw;
  }
}

Store::~Store() {
  for (auto& [slot, fd] : segment_fds_) ::close(fd);
  if (wal_fd_ >= 0) ::close(wal_fd_);
  if (hits_fd_ >= 0) ::close(hits_fd_);
}

void Store::open_files() {
  const fs::path manifest = root_ / "MANIFEST";
  if (fs::exists(manifest)) {
    const auto bytes = read_file(manifest);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(bytes.begin(), bytes.end());
      generation_ = j.at("generation").get<std::uint64_t>();
      epoch_ = j.at("epoch").get<std::uint64_t>();
      segment_names_ = j.at("segments").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw CorruptDataError(std::string("MANIFEST: ") + e.what());
    }
  }
  for (const auto& name : segment_names_) load_segment(next_slot_++, root_ / "segments" / name);

  // Segments from a compaction that never reached its MANIFEST rename.
  std::set<std::string> live(segment_names_.begin(), segment_names_.end());
  for (const auto& entry : fs::directory_iterator(root_ / "segments")) {
    if (!live.count(entry.path().filename().string())) fs::remove(entry.path());
  }

  replay_wal();
  load_hits();
}

void Store::load_segment(std::uint32_t slot, const fs::path& path) {
  const int fd = open_fd(path, O_RDONLY);
  segment_fds_[slot] = fd;
  const auto bytes = read_file(path);
  ByteReader in(bytes);
  const auto magic = in.raw(kSegmentMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kSegmentMagic.begin()))
    throw CorruptDataError("segment " + path.filename().string() + ": bad magic");
  while (in.remaining() > 0) {
    const std::size_t frame_at = in.position();
    const std::uint32_t len = in.u32();
    const std::uint32_t crc = in.u32();
    const auto body = in.raw(len);
    if (crc32(body) != crc)
      throw CorruptDataError("segment " + path.filename().string() + ": checksum mismatch");
    auto decoded = detail::decode_record(body);
    BlobLocation loc;
    if (const auto* t = std::get_if<TileRecord>(&decoded.value)) {
      loc = {slot, frame_at + 8 + decoded.blob_offset, static_cast<std::uint32_t>(t->blob.size())};
    }
    apply_locked(Record{std::move(decoded.value)}, &loc);
  }
}

void Store::replay_wal() {
  const fs::path path = root_ / "wal.log";
  wal_fd_ = open_fd(path, O_RDWR | O_CREAT);
  const auto bytes = read_file(path);
  std::size_t at = 0;
  while (bytes.size() - at >= kWalHeaderBytes) {
    ByteReader header{std::span(bytes).subspan(at, kWalHeaderBytes)};
    const std::uint32_t magic = header.u32();
    const std::uint32_t len = header.u32();
    const std::uint32_t crc = header.u32();
    if (magic != kWalMagic || bytes.size() - at - kWalHeaderBytes < len) break;
    const auto payload = std::span(bytes).subspan(at + kWalHeaderBytes, len);
    if (crc32(payload) != crc) break;

    ByteReader in(payload);
    const std::uint64_t epoch_after = in.u64();
    const std::uint32_t count = in.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint32_t rlen = in.u32();
      const std::size_t record_at = in.position();
      auto decoded = detail::decode_record(in.raw(rlen));
      BlobLocation loc;
      if (const auto* t = std::get_if<TileRecord>(&decoded.value)) {
        loc = {0, at + kWalHeaderBytes + record_at + decoded.blob_offset,
               static_cast<std::uint32_t>(t->blob.size())};
      }
      apply_locked(Record{std::move(decoded.value)}, &loc);
    }
    epoch_ = std::max(epoch_, epoch_after);
    at += kWalHeaderBytes + len;
  }
  if (at < bytes.size()) {
    // Torn tail from an interrupted append.
    if (::ftruncate(wal_fd_, static_cast<off_t>(at)) != 0) throw_errno("truncate wal");
    sync_fd(wal_fd_);
  }
  wal_size_ = at;
}

void Store::load_hits() {
  const fs::path path = root_ / "hits.log";
  if (fs::exists(path)) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) continue;
      try {
        const auto kind = static_cast<HitKind>(j.at("kind").get<int>());
        auto& count = hits_[{kind, j.at("key").get<std::string>()}];
        count = std::max(count, j.at("count").get<std::uint64_t>());
      } catch (const nlohmann::json::exception&) {
      }
    }
  }
  hits_fd_ = open_fd(path, O_WRONLY | O_CREAT | O_APPEND);
}

std::vector<std::uint8_t> Store::read_blob(const BlobLocation& loc) const {
  const int fd = loc.file == 0 ? wal_fd_ : segment_fds_.at(loc.file);
  std::vector<std::uint8_t> blob(loc.size);
  read_all(fd, blob.data(), blob.size(), loc.offset);
  return blob;
}

TileRecord Store::materialize(const TileKey& key, const TileEntry& entry) const {
  return TileRecord{key, read_blob(entry.location), entry.encrypted, entry.key_id,
                    entry.insert_epoch};
}

bool Store::visible_locked(const GridKey& grid, Date acquired) const {
  const auto it = images_.find({grid, acquired.value()});
  return it == images_.end() || it->second.visible;
}

std::optional<std::pair<TileKey, const Store::TileEntry*>> Store::usgs_slot_locked(
    const TileKey& key) const {
  for (auto it = tiles_.lower_bound(slot_floor(key.grid, key.level, key.sub_row, key.sub_col));
       it != tiles_.end() && same_slot(it->first, key); ++it) {
    return std::make_pair(it->first, &it->second);
  }
  return std::nullopt;
}

void Store::apply_locked(const Record& record, const BlobLocation* location) {
  std::visit(
      [&](const auto& r) {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, TileRecord>) {
          if (r.key.grid.theme == Theme::Usgs) {
            auto it = tiles_.lower_bound(
                slot_floor(r.key.grid, r.key.level, r.key.sub_row, r.key.sub_col));
            while (it != tiles_.end() && same_slot(it->first, r.key)) {
              if (it->first.acquired != r.key.acquired) {
                it = tiles_.erase(it);
              } else {
                ++it;
              }
            }
          }
          tiles_[r.key] = TileEntry{*location, r.encrypted, r.key_id, r.insert_epoch};
        } else if constexpr (std::is_same_v<R, ImageMetaRecord>) {
          images_[{r.grid, r.acquired.value()}] = r;
        } else if constexpr (std::is_same_v<R, OriginalMetadataRecord>) {
          originals_[r.source_id] = r;
        } else {
          picks_[{r.grid, r.title}] = r;
        }
      },
      record.value);
}

void Store::commit_frame(std::uint64_t epoch_after, std::vector<Record>& records) {
  ByteWriter frame;
  frame.u32(kWalMagic);
  frame.u32(0);
  frame.u32(0);
  frame.u64(epoch_after);
  frame.u32(static_cast<std::uint32_t>(records.size()));
  std::vector<BlobLocation> locations(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::size_t len_at = frame.size();
    frame.u32(0);
    const std::size_t record_at = frame.size();
    const std::size_t blob_at = detail::encode_record(records[i].value, frame);
    frame.put_u32_at(len_at, static_cast<std::uint32_t>(frame.size() - record_at));
    if (const auto* t = std::get_if<TileRecord>(&records[i].value)) {
      locations[i] = {0, wal_size_ + record_at + blob_at, static_cast<std::uint32_t>(t->blob.size())};
    }
  }
  const auto payload_len = static_cast<std::uint32_t>(frame.size() - kWalHeaderBytes);
  frame.put_u32_at(4, payload_len);
  frame.put_u32_at(8, crc32(std::span(frame.bytes()).subspan(kWalHeaderBytes)));

  checkpoint(options_.faults, "store.wal.append");
  const auto& bytes = frame.bytes();
  const std::size_t half = bytes.size() / 2;
  write_all(wal_fd_, bytes.data(), half, wal_size_);
  checkpoint(options_.faults, "store.wal.torn");
  write_all(wal_fd_, bytes.data() + half, bytes.size() - half, wal_size_ + half);
  if (options_.sync) sync_fd(wal_fd_);
  checkpoint(options_.faults, "store.wal.synced");

  std::unique_lock lock(index_mutex_);
  for (std::size_t i = 0; i < records.size(); ++i) apply_locked(records[i], &locations[i]);
  epoch_ = std::max(epoch_, epoch_after);
  wal_size_ += bytes.size();
}

void Store::validate_batch(const LoadBatch& batch) const {
  std::set<ImageKey> batch_images;
  for (const auto& m : batch.images) {
    if (!valid_grid(m.grid)) throw InvariantError("image record has invalid grid id");
    if (m.acquired.empty()) throw InvariantError("image record without acquisition date");
    if (!batch_images.insert({m.grid, m.acquired.value()}).second)
      throw InvariantError("duplicate image record in batch");
  }
  std::set<std::string> batch_sources;
  for (const auto& o : batch.originals) {
    if (o.source_id.empty()) throw InvariantError("source record without id");
    if (!batch_sources.insert(o.source_id).second)
      throw InvariantError("duplicate source record in batch");
  }
  std::set<TileKey> keys;
  std::set<TileKey> usgs_slots;
  for (const auto& t : batch.tiles) {
    const auto& k = t.key;
    if (!valid_grid(k.grid)) throw InvariantError("tile has invalid grid id " + k.grid.to_string());
    if (k.acquired.empty()) throw InvariantError("tile without acquisition date");
    const int side = k.level == Level::Tile ? tile_grid(k.grid.theme) : 1;
    if (k.sub_row >= side || k.sub_col >= side)
      throw InvariantError("tile position outside the cell's tile grid");
    if (t.blob.empty()) throw InvariantError("tile without image data");
    const bool must_encrypt = k.grid.theme == Theme::Spin2 && k.level == Level::Tile;
    if (t.encrypted != must_encrypt)
      throw InvariantError(must_encrypt ? "full-resolution SPIN2 tile must be encrypted"
                                        : "only full-resolution SPIN2 tiles are encrypted");
    if (t.encrypted && t.key_id.empty()) throw InvariantError("encrypted tile without key id");
    if (!batch_images.count({k.grid, k.acquired.value()}) &&
        !images_.count({k.grid, k.acquired.value()}))
      throw InvariantError("tile " + k.grid.to_string() + " has no image record");
    if (!keys.insert(k).second) throw InvariantError("duplicate tile in batch");
    if (k.grid.theme == Theme::Usgs) {
      TileKey slot = k;
      slot.acquired = Date();
      if (!usgs_slots.insert(slot).second)
        throw InvariantError("batch holds two acquisitions of one USGS tile");
    }
  }
}

std::size_t Store::put_tiles(const LoadBatch& batch) {
  std::lock_guard writer(writer_mutex_);
  std::vector<Record> changes;
  std::size_t tile_changes = 0;
  {
    std::shared_lock lock(index_mutex_);
    validate_batch(batch);
    for (const auto& m : batch.images) {
      ImageMetaRecord next = m;
      const auto it = images_.find({m.grid, m.acquired.value()});
      if (it != images_.end()) {
        next.visible = it->second.visible;
        if (same_ignoring_epoch(next, it->second)) continue;
      }
      changes.push_back({std::move(next)});
    }
    for (const auto& o : batch.originals) {
      const auto it = originals_.find(o.source_id);
      if (it != originals_.end() && same_ignoring_epoch(o, it->second)) continue;
      changes.push_back({o});
    }
    for (const auto& t : batch.tiles) {
      const TileEntry* existing = nullptr;
      if (t.key.grid.theme == Theme::Usgs) {
        if (const auto slot = usgs_slot_locked(t.key)) {
          if (slot->first.acquired > t.key.acquired) continue;  // older imagery never replaces
          if (slot->first.acquired == t.key.acquired) existing = slot->second;
        }
      } else if (const auto it = tiles_.find(t.key); it != tiles_.end()) {
        existing = &it->second;
      }
      if (existing != nullptr && existing->encrypted == t.encrypted &&
          existing->key_id == t.key_id && existing->location.size == t.blob.size() &&
          read_blob(existing->location) == t.blob)
        continue;
      changes.push_back({t});
      ++tile_changes;
    }
  }
  if (changes.empty()) return 0;
  const std::uint64_t epoch = epoch_ + 1;
  for (auto& c : changes) detail::set_record_epoch(c.value, epoch);
  commit_frame(epoch, changes);
  return tile_changes;
}

std::optional<TileRecord> Store::get_tile(const GridKey& grid, Level level, int sub_row,
                                          int sub_col, std::optional<Date> acquired) const {
  if (sub_row < 0 || sub_col < 0 || sub_row > 255 || sub_col > 255) return std::nullopt;
  std::shared_lock lock(index_mutex_);
  if (acquired) {
    const TileKey key{grid, level, static_cast<std::uint8_t>(sub_row),
                      static_cast<std::uint8_t>(sub_col), *acquired};
    const auto it = tiles_.find(key);
    if (it == tiles_.end() || !visible_locked(grid, *acquired)) return std::nullopt;
    return materialize(it->first, it->second);
  }
  const TileKey floor = slot_floor(grid, level, sub_row, sub_col);
  std::optional<std::map<TileKey, TileEntry>::const_iterator> best;
  for (auto it = tiles_.lower_bound(floor); it != tiles_.end() && same_slot(it->first, floor); ++it) {
    if (visible_locked(grid, it->first.acquired)) best = it;
  }
  if (!best) return std::nullopt;
  return materialize((*best)->first, (*best)->second);
}

std::vector<TileRecord> Store::get_range(Theme theme, Level level,
                                         std::span<const GridKey> cells) const {
  std::vector<GridKey> sorted(cells.begin(), cells.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<TileRecord> out;
  std::shared_lock lock(index_mutex_);
  for (const auto& grid : sorted) {
    if (grid.theme != theme) continue;
    for (auto it = tiles_.lower_bound(slot_floor(grid, level, 0, 0));
         it != tiles_.end() && it->first.grid == grid && it->first.level == level; ++it) {
      if (visible_locked(grid, it->first.acquired)) out.push_back(materialize(it->first, it->second));
    }
  }
  return out;
}

std::size_t Store::hide_region(Theme theme, std::span<const GridKey> cells, bool visible) {
  std::lock_guard writer(writer_mutex_);
  std::vector<Record> changes;
  {
    std::shared_lock lock(index_mutex_);
    std::set<GridKey> unique(cells.begin(), cells.end());
    for (const auto& grid : unique) {
      if (grid.theme != theme) continue;
      for (auto it = images_.lower_bound({grid, kMinDate});
           it != images_.end() && it->first.first == grid; ++it) {
        if (it->second.visible == visible) continue;
        ImageMetaRecord next = it->second;
        next.visible = visible;
        changes.push_back({std::move(next)});
      }
    }
  }
  if (changes.empty()) return 0;
  const std::uint64_t epoch = epoch_ + 1;
  for (auto& c : changes) detail::set_record_epoch(c.value, epoch);
  commit_frame(epoch, changes);
  return changes.size();
}

void Store::record_hit(HitKind kind, std::string_view key) {
  std::lock_guard lock(hits_mutex_);
  const std::uint64_t count = ++hits_[{kind, std::string(key)}];
  const std::string line =
      nlohmann::json{{"kind", static_cast<int>(kind)}, {"key", key}, {"count", count}}.dump() + "\n";
  if (::write(hits_fd_, line.data(), line.size()) < 0) {
    // Counters are advisory; a failed append only loses this increment on restart.
  }
}

std::uint64_t Store::hit_count(HitKind kind, std::string_view key) const {
  std::lock_guard lock(hits_mutex_);
  const auto it = hits_.find({kind, std::string(key)});
  return it == hits_.end() ? 0 : it->second;
}

std::vector<HitCount> Store::top_hits(HitKind kind, std::size_t n) const {
  std::vector<HitCount> out;
  {
    std::lock_guard lock(hits_mutex_);
    for (const auto& [k, count] : hits_) {
      if (k.first == kind) out.push_back({kind, k.second, count});
    }
  }
  std::sort(out.begin(), out.end(), [](const HitCount& a, const HitCount& b) {
    return a.count != b.count ? a.count > b.count : a.key < b.key;
  });
  if (out.size() > n) out.resize(n);
  return out;
}

std::optional<ImageMetaRecord> Store::image_meta(const GridKey& grid, Date acquired) const {
  std::shared_lock lock(index_mutex_);
  const auto it = images_.find({grid, acquired.value()});
  if (it == images_.end()) return std::nullopt;
  return it->second;
}

std::vector<ImageMetaRecord> Store::image_metas(const GridKey& grid) const {
  std::shared_lock lock(index_mutex_);
  std::vector<ImageMetaRecord> out;
  for (auto it = images_.lower_bound({grid, kMinDate}); it != images_.end() && it->first.first == grid;
       ++it)
    out.push_back(it->second);
  return out;
}

std::vector<ImageMetaRecord> Store::all_image_metas() const {
  std::shared_lock lock(index_mutex_);
  std::vector<ImageMetaRecord> out;
  out.reserve(images_.size());
  for (const auto& [k, m] : images_) out.push_back(m);
  return out;
}

bool Store::has_visible_imagery(const GridKey& grid) const {
  std::shared_lock lock(index_mutex_);
  for (auto it = images_.lower_bound({grid, kMinDate}); it != images_.end() && it->first.first == grid;
       ++it) {
    if (it->second.visible) return true;
  }
  return false;
}

std::optional<OriginalMetadataRecord> Store::original_metadata(std::string_view source_id) const {
  std::shared_lock lock(index_mutex_);
  const auto it = originals_.find(std::string(source_id));
  if (it == originals_.end()) return std::nullopt;
  return it->second;
}

void Store::add_pick(PickRecord pick) {
  if (pick.title.empty()) throw InvariantError("pick without title");
  std::lock_guard writer(writer_mutex_);
  if (!has_visible_imagery(pick.grid))
    throw InvariantError("pick " + pick.title + " points at a cell without visible imagery");
  {
    std::shared_lock lock(index_mutex_);
    const auto it = picks_.find({pick.grid, pick.title});
    if (it != picks_.end() && same_ignoring_epoch(pick, it->second)) return;
  }
  const std::uint64_t epoch = epoch_ + 1;
  pick.insert_epoch = epoch;
  std::vector<Record> changes{{std::move(pick)}};
  commit_frame(epoch, changes);
}

std::vector<PickRecord> Store::picks() const {
  std::shared_lock lock(index_mutex_);
  std::vector<PickRecord> out;
  for (const auto& [k, p] : picks_) out.push_back(p);
  return out;
}

SnapshotInfo Store::write_snapshot(const fs::path& path, std::uint64_t since) const {
  std::lock_guard writer(writer_mutex_);
  std::shared_lock lock(index_mutex_);
  ByteWriter out;
  out.raw(kSnapshotMagic);
  std::vector<std::uint8_t> crcs;
  std::uint64_t count = 0;
  auto emit = [&](const AnyRecord& record) {
    const std::size_t frame_at = out.size();
    detail::append_checked_record(record, out);
    for (int i = 0; i < 4; ++i) crcs.push_back(out.bytes()[frame_at + 4 + i]);
    ++count;
  };
  for (const auto& [key, entry] : tiles_) {
    if (entry.insert_epoch > since) emit(materialize(key, entry));
  }
  for (const auto& [key, m] : images_) {
    if (m.insert_epoch > since) emit(m);
  }
  for (const auto& [key, o] : originals_) {
    if (o.insert_epoch > since) emit(o);
  }
  for (const auto& [key, p] : picks_) {
    if (p.insert_epoch > since) emit(p);
  }
  out.u32(kSnapshotEndMarker);
  const std::size_t trailer_at = out.size();
  out.raw(kSnapshotEndMagic);
  out.u64(since);
  out.u64(epoch_);
  out.u64(count);
  out.u32(crc32(crcs));
  out.u32(crc32(std::span(out.bytes()).subspan(trailer_at)));
  write_file_atomic(path, out.bytes(), options_.sync);
  return {since, epoch_, count};
}

SnapshotInfo Store::snapshot_full(const fs::path& path) const { return write_snapshot(path, 0); }

SnapshotInfo Store::snapshot_incremental(const fs::path& path, std::uint64_t since_epoch) const {
  return write_snapshot(path, since_epoch);
}

std::uint64_t Store::restore(std::span<const fs::path> paths) {
  std::vector<ParsedSnapshot> parsed;
  for (const auto& p : paths) parsed.push_back(parse_snapshot(p));
  std::stable_sort(parsed.begin(), parsed.end(), [](const auto& a, const auto& b) {
    return std::tie(a.since, a.upto) < std::tie(b.since, b.upto);
  });
  std::lock_guard writer(writer_mutex_);
  std::vector<Record> records;
  std::uint64_t upto = epoch_;
  for (auto& snap : parsed) {
    upto = std::max(upto, snap.upto);
    for (auto& r : snap.records) records.push_back({std::move(r)});
  }
  if (records.empty()) {
    if (upto > epoch_) {
      std::unique_lock lock(index_mutex_);
      epoch_ = upto;
    }
    return 0;
  }
  commit_frame(upto, records);
  return records.size();
}

void Store::compact() {
  std::lock_guard writer(writer_mutex_);
  const std::uint64_t generation = generation_ + 1;
  std::vector<std::string> names;
  std::map<std::uint32_t, int> fds;
  std::vector<std::pair<TileKey, BlobLocation>> moved;
  std::uint32_t slot = next_slot_;

  try {
    std::shared_lock lock(index_mutex_);
    ByteWriter seg;
    auto flush = [&] {
      char name[32];
      std::snprintf(name, sizeof name, "%06llu-%04zu.seg",
                    static_cast<unsigned long long>(generation), names.size());
      const int fd = open_fd(root_ / "segments" / name, O_RDWR | O_CREAT | O_TRUNC);
      fds[slot] = fd;
      names.emplace_back(name);
      write_all(fd, seg.bytes().data(), seg.size(), 0);
      if (options_.sync) sync_fd(fd);
      ++slot;
      seg = ByteWriter();
    };
    auto emit = [&](const AnyRecord& record) {
      if (seg.size() == 0) seg.raw(kSegmentMagic);
      const std::size_t frame_at = seg.size();
      const std::size_t blob_at = detail::append_checked_record(record, seg);
      if (const auto* t = std::get_if<TileRecord>(&record)) {
        moved.push_back({t->key, {slot, frame_at + blob_at, static_cast<std::uint32_t>(t->blob.size())}});
      }
      if (seg.size() >= options_.segment_bytes) flush();
    };
    for (const auto& [key, entry] : tiles_) emit(materialize(key, entry));
    for (const auto& [key, m] : images_) emit(m);
    for (const auto& [key, o] : originals_) emit(o);
    for (const auto& [key, p] : picks_) emit(p);
    if (seg.size() > 0) flush();
    checkpoint(options_.faults, "store.compact.segments");

    const nlohmann::json manifest{{"generation", generation}, {"epoch", epoch_}, {"segments", names}};
    const std::string text = manifest.dump(2) + "\n";
    write_file_atomic(root_ / "MANIFEST",
                      {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()},
                      options_.sync);
  } catch (...) {
    for (auto& [s, fd] : fds) ::close(fd);
    throw;
  }
  checkpoint(options_.faults, "store.compact.manifest");

  std::vector<std::string> old_names;
  {
    std::unique_lock lock(index_mutex_);
    for (const auto& [key, loc] : moved) tiles_.at(key).location = loc;
    for (auto& [s, fd] : segment_fds_) ::close(fd);
    segment_fds_ = std::move(fds);
    old_names = std::exchange(segment_names_, names);
    next_slot_ = slot;
    generation_ = generation;
    if (::ftruncate(wal_fd_, 0) != 0) throw_errno("truncate wal");
    if (options_.sync) sync_fd(wal_fd_);
    wal_size_ = 0;
  }
  for (const auto& name : old_names) {
    std::error_code ec;
    fs::remove(root_ / "segments" / name, ec);
  }

  std::lock_guard hits_lock(hits_mutex_);
  std::string text;
  for (const auto& [k, count] : hits_) {
    text += nlohmann::json{{"kind", static_cast<int>(k.first)}, {"key", k.second}, {"count", count}}
                .dump() +
            "\n";
  }
  ::close(hits_fd_);
  write_file_atomic(root_ / "hits.log",
                    {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}, false);
  hits_fd_ = open_fd(root_ / "hits.log", O_WRONLY | O_CREAT | O_APPEND);
}

std::vector<TileKey> Store::segment_tile_order() const {
  std::shared_lock lock(index_mutex_);
  std::vector<TileKey> out;
  for (const auto& name : segment_names_) {
    const auto bytes = read_file(root_ / "segments" / name);
    ByteReader in(bytes);
    in.raw(kSegmentMagic.size());
    while (in.remaining() > 0) {
      const std::uint32_t len = in.u32();
      in.u32();
      const auto decoded = detail::decode_record(in.raw(len));
      if (const auto* t = std::get_if<TileRecord>(&decoded.value)) out.push_back(t->key);
    }
  }
  return out;
}

StoreStats Store::stats() const {
  std::shared_lock lock(index_mutex_);
  StoreStats s;
  for (const auto& [key, entry] : tiles_) {
    ++s.tiles[{key.grid.theme, key.level}];
    s.tile_bytes += entry.location.size;
  }
  s.images = images_.size();
  for (const auto& [k, m] : images_) s.hidden_images += m.visible ? 0 : 1;
  s.originals = originals_.size();
  s.picks = picks_.size();
  s.epoch = epoch_;
  s.wal_bytes = wal_size_;
  s.segments = segment_names_.size();
  s.generation = generation_;
  return s;
}

std::uint64_t Store::current_epoch() const {
  std::shared_lock lock(index_mutex_);
  return epoch_;
}

}  // namespace terratile
