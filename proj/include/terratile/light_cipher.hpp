#pragma once

// Light obfuscation for full-resolution SPIN2 tiles. This is a keystream XOR
// whose only purpose is that stored blobs are not directly viewable; it is
// not meant to resist a determined attacker.
//
// keystream block i = SHA-256(key || nonce || u64le(i)), blocks concatenated.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "terratile/common.hpp"
#include "terratile/spatial_index.hpp"

namespace terratile {

inline constexpr std::size_t kCipherKeyBytes = 16;
using CipherKey = std::array<std::uint8_t, kCipherKeyBytes>;

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data);

/// Throws KeyError unless key is exactly 16 bytes. Encrypt and decrypt are
/// the same transform.
std::vector<std::uint8_t> light_encrypt(std::span<const std::uint8_t> blob,
                                        std::span<const std::uint8_t> key,
                                        std::span<const std::uint8_t> nonce);
std::vector<std::uint8_t> light_decrypt(std::span<const std::uint8_t> blob,
                                        std::span<const std::uint8_t> key,
                                        std::span<const std::uint8_t> nonce);

/// Per-tile nonce: packed grid key, level, sub-position and acquisition date.
std::vector<std::uint8_t> tile_nonce(const GridKey& grid, Level level, int sub_row, int sub_col,
                                     Date acquired);

/// Deterministic per-cut key derived from a deployment secret.
CipherKey derive_cut_key(std::string_view secret, const GridKey& grid, Date acquired);

/// Key ids are the lowercase hex of the key; the store keeps them alongside
/// the tile and image metadata.
std::string key_to_id(const CipherKey& key);
CipherKey key_from_id(std::string_view id);

}  // namespace terratile
