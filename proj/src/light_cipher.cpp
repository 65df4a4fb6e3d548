#include "terratile/light_cipher.hpp"

#include <openssl/sha.h>

#include <algorithm>

namespace terratile {

namespace {

void put_u64le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data) {
  std::array<std::uint8_t, 32> digest{};
  SHA256(data.data(), data.size(), digest.data());
  return digest;
}

std::vector<std::uint8_t> light_encrypt(std::span<const std::uint8_t> blob,
                                        std::span<const std::uint8_t> key,
                                        std::span<const std::uint8_t> nonce) {
  if (key.size() != kCipherKeyBytes) throw KeyError("cipher key must be 16 bytes");
  std::vector<std::uint8_t> out(blob.begin(), blob.end());
  std::vector<std::uint8_t> block_input(key.begin(), key.end());
  block_input.insert(block_input.end(), nonce.begin(), nonce.end());
  const std::size_t counter_at = block_input.size();
  for (std::size_t offset = 0, counter = 0; offset < out.size(); offset += 32, ++counter) {
    block_input.resize(counter_at);
    put_u64le(block_input, counter);
    const auto stream = sha256(block_input);
    const std::size_t n = std::min<std::size_t>(32, out.size() - offset);
    for (std::size_t i = 0; i < n; ++i) out[offset + i] ^= stream[i];
  }
  return out;
}

std::vector<std::uint8_t> light_decrypt(std::span<const std::uint8_t> blob,
                                        std::span<const std::uint8_t> key,
                                        std::span<const std::uint8_t> nonce) {
  return light_encrypt(blob, key, nonce);
}

std::vector<std::uint8_t> tile_nonce(const GridKey& grid, Level level, int sub_row, int sub_col,
                                     Date acquired) {
  std::vector<std::uint8_t> nonce;
  nonce.push_back(static_cast<std::uint8_t>(grid.theme));
  put_u64le(nonce, grid.packed());
  nonce.push_back(static_cast<std::uint8_t>(level));
  nonce.push_back(static_cast<std::uint8_t>(sub_row));
  nonce.push_back(static_cast<std::uint8_t>(sub_col));
  put_u64le(nonce, static_cast<std::uint64_t>(acquired.value()));
  return nonce;
}

CipherKey derive_cut_key(std::string_view secret, const GridKey& grid, Date acquired) {
  std::vector<std::uint8_t> input(secret.begin(), secret.end());
  input.push_back(0);
  input.push_back(static_cast<std::uint8_t>(grid.theme));
  put_u64le(input, grid.packed());
  put_u64le(input, static_cast<std::uint64_t>(acquired.value()));
  const auto digest = sha256(input);
  CipherKey key{};
  std::copy_n(digest.begin(), key.size(), key.begin());
  return key;
}

std::string key_to_id(const CipherKey& key) { return to_hex(key); }

CipherKey key_from_id(std::string_view id) {
  if (id.size() != 2 * kCipherKeyBytes) throw KeyError("key id must be 32 hex digits");
  CipherKey key{};
  for (std::size_t i = 0; i < key.size(); ++i) {
    const int hi = hex_value(id[2 * i]);
    const int lo = hex_value(id[2 * i + 1]);
    if (hi < 0 || lo < 0) throw KeyError("key id is not hex");
    key[i] = static_cast<std::uint8_t>(hi * 16 + lo);
  }
  return key;
}

}  // namespace terratile
