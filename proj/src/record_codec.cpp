#include "record_codec.hpp"

#include <bit>
#include <cstring>

namespace terratile::detail {

namespace {

enum class Kind : std::uint8_t { Tile = 1, ImageMeta = 2, Original = 3, Pick = 4 };

void put_grid(ByteWriter& out, const GridKey& grid) {
  out.u8(static_cast<std::uint8_t>(grid.theme));
  out.u8(grid.zone);
  out.u32(grid.morton);
}

GridKey get_grid(ByteReader& in) {
  GridKey grid;
  const std::uint8_t theme = in.u8();
  if (theme > 1) throw CorruptDataError("bad theme in record");
  grid.theme = static_cast<Theme>(theme);
  grid.zone = in.u8();
  grid.morton = in.u32();
  return grid;
}

template <typename E>
E get_enum(ByteReader& in, std::uint8_t max) {
  const std::uint8_t v = in.u8();
  if (v > max) throw CorruptDataError("bad enum value in record");
  return static_cast<E>(v);
}

bool get_bool(ByteReader& in) { return in.u8() != 0; }

}  // namespace

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  raw(s);
}

void ByteWriter::put_u32_at(std::size_t offset, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_[offset + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

void ByteReader::need(std::size_t n) const {
  if (n > remaining()) throw CorruptDataError("record truncated");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{data_[pos_ + i]} << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
  pos_ += 8;
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
  const std::uint32_t n = u32();
  const auto bytes = raw(n);
  return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

std::span<const std::uint8_t> ByteReader::raw(std::size_t n) {
  need(n);
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::uint64_t record_epoch(const AnyRecord& record) {
  return std::visit([](const auto& r) { return r.insert_epoch; }, record);
}

void set_record_epoch(AnyRecord& record, std::uint64_t epoch) {
  std::visit([epoch](auto& r) { r.insert_epoch = epoch; }, record);
}

std::size_t encode_record(const AnyRecord& record, ByteWriter& out) {
  const std::size_t start = out.size();
  if (const auto* t = std::get_if<TileRecord>(&record)) {
    out.u8(static_cast<std::uint8_t>(Kind::Tile));
    put_grid(out, t->key.grid);
    out.u8(static_cast<std::uint8_t>(t->key.level));
    out.u8(t->key.sub_row);
    out.u8(t->key.sub_col);
    out.i32(t->key.acquired.value());
    out.u8(t->encrypted ? 1 : 0);
    out.str(t->key_id);
    out.u64(t->insert_epoch);
    out.u32(static_cast<std::uint32_t>(t->blob.size()));
    const std::size_t blob_at = out.size() - start;
    out.raw(t->blob);
    return blob_at;
  }
  if (const auto* m = std::get_if<ImageMetaRecord>(&record)) {
    out.u8(static_cast<std::uint8_t>(Kind::ImageMeta));
    put_grid(out, m->grid);
    out.i32(m->acquired.value());
    out.str(m->source);
    out.u8(m->visible ? 1 : 0);
    out.str(m->key_id);
    out.str(m->center_place_name);
    out.u64(m->insert_epoch);
    return 0;
  }
  if (const auto* o = std::get_if<OriginalMetadataRecord>(&record)) {
    out.u8(static_cast<std::uint8_t>(Kind::Original));
    out.str(o->source_id);
    out.u8(static_cast<std::uint8_t>(o->img_source));
    out.u8(static_cast<std::uint8_t>(o->image_type));
    out.str(o->instrument);
    out.i32(o->acquired_date.value());
    out.i32(o->processed_date.value());
    out.f64(o->resolution);
    out.u32(o->width);
    out.u32(o->height);
    out.u32(static_cast<std::uint32_t>(o->attributes.size()));
    for (const auto& [k, v] : o->attributes) {
      out.str(k);
      out.str(v);
    }
    out.u64(o->insert_epoch);
    return 0;
  }
  const auto& p = std::get<PickRecord>(record);
  out.u8(static_cast<std::uint8_t>(Kind::Pick));
  out.str(p.title);
  put_grid(out, p.grid);
  out.str(p.caption);
  out.u64(p.insert_epoch);
  return 0;
}

DecodedRecord decode_record(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  DecodedRecord out;
  switch (static_cast<Kind>(in.u8())) {
    case Kind::Tile: {
      TileRecord t;
      t.key.grid = get_grid(in);
      t.key.level = get_enum<Level>(in, kLevelCount - 1);
      t.key.sub_row = in.u8();
      t.key.sub_col = in.u8();
      t.key.acquired = Date(in.i32());
      t.encrypted = get_bool(in);
      t.key_id = in.str();
      t.insert_epoch = in.u64();
      const std::uint32_t n = in.u32();
      out.blob_offset = in.position();
      const auto blob = in.raw(n);
      t.blob.assign(blob.begin(), blob.end());
      out.value = std::move(t);
      break;
    }
    case Kind::ImageMeta: {
      ImageMetaRecord m;
      m.grid = get_grid(in);
      m.acquired = Date(in.i32());
      m.source = in.str();
      m.visible = get_bool(in);
      m.key_id = in.str();
      m.center_place_name = in.str();
      m.insert_epoch = in.u64();
      out.value = std::move(m);
      break;
    }
    case Kind::Original: {
      OriginalMetadataRecord o;
      o.source_id = in.str();
      o.img_source = get_enum<Theme>(in, 1);
      o.image_type = get_enum<ImageType>(in, 1);
      o.instrument = in.str();
      o.acquired_date = Date(in.i32());
      o.processed_date = Date(in.i32());
      o.resolution = in.f64();
      o.width = in.u32();
      o.height = in.u32();
      const std::uint32_t n = in.u32();
      for (std::uint32_t i = 0; i < n; ++i) {
        std::string k = in.str();
        o.attributes[std::move(k)] = in.str();
      }
      o.insert_epoch = in.u64();
      out.value = std::move(o);
      break;
    }
    case Kind::Pick: {
      PickRecord p;
      p.title = in.str();
      p.grid = get_grid(in);
      p.caption = in.str();
      p.insert_epoch = in.u64();
      out.value = std::move(p);
      break;
    }
    default:
      throw CorruptDataError("unknown record kind");
  }
  if (in.remaining() != 0) throw CorruptDataError("trailing bytes in record");
  return out;
}

std::size_t append_checked_record(const AnyRecord& record, ByteWriter& out) {
  const std::size_t frame = out.size();
  out.u32(0);
  out.u32(0);
  const std::size_t body = out.size();
  const std::size_t blob_at = encode_record(record, out);
  const auto len = static_cast<std::uint32_t>(out.size() - body);
  out.put_u32_at(frame, len);
  out.put_u32_at(frame + 4, crc32(std::span(out.bytes()).subspan(body, len)));
  return blob_at == 0 ? 0 : (body - frame) + blob_at;
}

}  // namespace terratile::detail
