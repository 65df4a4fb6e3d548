#pragma once

// Binary encoding of store records. Shared by the WAL, segment files and
// snapshots. All integers are little-endian. A tile record ends with its
// blob so the blob can be located inside a file without decoding.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "terratile/store.hpp"

namespace terratile::detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v);
  void str(std::string_view s);
  void raw(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }
  void raw(std::string_view bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }
  void put_u32_at(std::size_t offset, std::uint32_t v);

  std::size_t size() const { return buf_.size(); }
  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; overruns throw CorruptDataError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64();
  std::string str();
  std::span<const std::uint8_t> raw(std::size_t n);

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

using AnyRecord = std::variant<TileRecord, ImageMetaRecord, OriginalMetadataRecord, PickRecord>;

struct DecodedRecord {
  AnyRecord value;
  std::size_t blob_offset = 0;  // tile records: blob start relative to record start
};

std::uint64_t record_epoch(const AnyRecord& record);
void set_record_epoch(AnyRecord& record, std::uint64_t epoch);

/// Appends the encoding of record; returns the blob offset relative to the
/// start of the encoding (0 for non-tile records).
std::size_t encode_record(const AnyRecord& record, ByteWriter& out);
DecodedRecord decode_record(std::span<const std::uint8_t> bytes);

/// [u32 len][u32 crc][record]; returns the blob offset relative to the
/// start of the frame.
std::size_t append_checked_record(const AnyRecord& record, ByteWriter& out);

}  // namespace terratile::detail
