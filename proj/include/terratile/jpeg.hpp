#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "terratile/raster.hpp"

namespace terratile {

inline constexpr int kDefaultJpegQuality = 80;
inline constexpr int kFallbackJpegQuality = 70;
inline constexpr std::size_t kTileSoftBudgetBytes = 10 * 1024;
inline constexpr std::size_t kTileHardCapBytes = 16 * 1024;

/// Baseline JFIF, 8-bit grayscale. Throws FormatError on an empty image.
std::vector<std::uint8_t> encode_jpeg(const Gray8& image, int quality = kDefaultJpegQuality);

/// Encodes at the default quality and, if the result exceeds the hard cap,
/// re-encodes once at the fallback quality and keeps that result regardless.
std::vector<std::uint8_t> encode_tile_jpeg(const Gray8& image);

/// Decodes any 8-bit JPEG to grayscale. Throws FormatError on bad input.
Gray8 decode_jpeg(std::span<const std::uint8_t> blob);

bool looks_like_jpeg(std::span<const std::uint8_t> blob);

}  // namespace terratile
