#include "terratile/common.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>

namespace terratile {

std::string_view to_string(Theme theme) {
  return theme == Theme::Usgs ? "usgs" : "spin2";
}

Theme parse_theme(std::string_view text) {
  const std::string lower = ascii_lower(text);
  if (lower == "usgs") return Theme::Usgs;
  if (lower == "spin2") return Theme::Spin2;
  throw FormatError("unknown theme: " + std::string(text));
}

std::string_view to_string(Level level) {
  switch (level) {
    case Level::Tile: return "tile";
    case Level::Browse: return "browse";
    case Level::Thumb: return "thumb";
    case Level::Jump: return "jump";
  }
  return "tile";
}

Level parse_level(std::string_view text) {
  if (text == "tile") return Level::Tile;
  if (text == "browse") return Level::Browse;
  if (text == "thumb") return Level::Thumb;
  if (text == "jump") return Level::Jump;
  throw FormatError("unknown pyramid level: " + std::string(text));
}

Date Date::parse(std::string_view text) {
  std::string digits;
  for (char c : text) {
    if (c == '-') continue;
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      throw FormatError("bad date: " + std::string(text));
    }
    digits.push_back(c);
  }
  if (digits.size() != 8) throw FormatError("bad date: " + std::string(text));
  std::int32_t value = 0;
  std::from_chars(digits.data(), digits.data() + digits.size(), value);
  const int month = (value / 100) % 100;
  const int day = value % 100;
  if (month < 1 || month > 12 || day < 1 || day > 31) {
    throw FormatError("bad date: " + std::string(text));
  }
  return Date(value);
}

std::string Date::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", value_ / 10000, (value_ / 100) % 100,
                value_ % 100);
  return buf;
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large spans.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = ::crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t crc32(std::string_view bytes) {
  return crc32(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

std::string ascii_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

}  // namespace terratile
