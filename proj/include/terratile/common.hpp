#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace terratile {

// Error hierarchy. Every failure the library reports derives from Error so
// callers at process boundaries (CLI, HTTP) can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a grid or projection operation.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Latitude outside the UTM projection band.
class ProjectionError : public RangeError {
 public:
  using RangeError::RangeError;
};

/// Malformed input data: rasters, sidecars, JPEG streams, source files.
class FormatError : public Error {
 public:
  using Error::Error;
};

class KeyError : public Error {
 public:
  using Error::Error;
};

/// Tile grids that do not form a rectangle of uniform tiles.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class QueryError : public Error {
 public:
  using Error::Error;
};

/// A store batch violated a record invariant; nothing was written.
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// Checksum or framing failure while reading persisted data.
class CorruptDataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

enum class Theme : std::uint8_t { Usgs = 0, Spin2 = 1 };

std::string_view to_string(Theme theme);
Theme parse_theme(std::string_view text);

/// Pyramid levels, finest first. Browse is 8 m/px, thumb 16 m/px, jump 32 m/px.
enum class Level : std::uint8_t { Tile = 0, Browse = 1, Thumb = 2, Jump = 3 };

inline constexpr int kLevelCount = 4;

std::string_view to_string(Level level);
Level parse_level(std::string_view text);

/// Calendar date stored as yyyymmdd so that integer order is date order.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::int32_t yyyymmdd) : value_(yyyymmdd) {}

  /// Accepts "YYYY-MM-DD" or "YYYYMMDD".
  static Date parse(std::string_view text);

  constexpr std::int32_t value() const { return value_; }
  constexpr bool empty() const { return value_ == 0; }
  std::string to_string() const;

  friend constexpr auto operator<=>(Date, Date) = default;

 private:
  std::int32_t value_ = 0;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);
std::uint32_t crc32(std::string_view bytes);

std::string to_hex(std::span<const std::uint8_t> bytes);
std::string ascii_lower(std::string_view text);

}  // namespace terratile
