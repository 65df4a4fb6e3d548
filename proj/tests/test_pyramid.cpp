#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "terratile/jpeg.hpp"
#include "terratile/light_cipher.hpp"
#include "terratile/png.hpp"
#include "terratile/pyramid.hpp"

using namespace terratile;
using fixtures::random_cut;

namespace {

// Direct area-overlap average in double precision, one output pixel at a time.
double oracle_area_mean(const Gray8& src, Eigen::Index rows, Eigen::Index cols, Eigen::Index r,
                        Eigen::Index c) {
  const double sy = static_cast<double>(src.rows()) / rows;
  const double sx = static_cast<double>(src.cols()) / cols;
  double sum = 0.0, area = 0.0;
  for (Eigen::Index y = 0; y < src.rows(); ++y) {
    const double oy = std::min<double>(y + 1, (r + 1) * sy) - std::max<double>(y, r * sy);
    if (oy <= 0) continue;
    for (Eigen::Index x = 0; x < src.cols(); ++x) {
      const double ox = std::min<double>(x + 1, (c + 1) * sx) - std::max<double>(x, c * sx);
      if (ox <= 0) continue;
      sum += oy * ox * src(y, x);
      area += oy * ox;
    }
  }
  return sum / area;
}

double psnr(const Gray8& a, const Gray8& b) {
  const double mse = (a.cast<double>() - b.cast<double>()).square().mean();
  return 10.0 * std::log10(255.0 * 255.0 / std::max(mse, 1e-12));
}

}  // namespace

TEST_CASE("area resampling matches the direct overlap average") {
  std::mt19937 rng(3);
  Gray8 src(37, 53);
  for (Eigen::Index i = 0; i < src.size(); ++i) src.data()[i] = static_cast<std::uint8_t>(rng());
  const Gray8 out = resample_area(src, 11, 17);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      CHECK(std::abs(out(r, c) - oracle_area_mean(src, 11, 17, r, c)) <= 0.5 + 1e-3);
    }
  }
  // Integer factors reduce to the box mean.
  Gray8 flat = Gray8::Constant(16, 16, 9);
  flat.block(0, 0, 8, 8).setConstant(201);
  const Gray8 half = box_downsample(flat, 8);
  CHECK(half(0, 0) == 201);
  CHECK(half(1, 1) == 9);
  CHECK_THROWS_AS(box_downsample(flat, 5), ShapeError);
}

TEST_CASE("slice and mosaic are inverse") {
  std::mt19937 rng(11);
  for (Theme theme : {Theme::Usgs, Theme::Spin2}) {
    const Cut cut = random_cut(theme, rng);
    const auto tiles = slice_cut(cut);
    const int g = tile_grid(theme);
    REQUIRE(tiles.size() == static_cast<std::size_t>(g * g));
    const Gray8 back = mosaic<std::uint8_t>(std::span<const Gray8>(tiles), g, g);
    CHECK((back == cut.pixels).all());
  }
  CHECK_THROWS_AS(slice_grid(Gray8(10, 10), 3, 3), ShapeError);
}

TEST_CASE("usgs cut product set") {
  std::mt19937 rng(5);
  Cut cut = random_cut(Theme::Usgs, rng);
  cut.pixels = fixtures::texture(1200, 1800, 9);
  const auto images = encode_cut(cut, "secret");
  REQUIRE(images.size() == 67);
  for (int i = 0; i < 64; ++i) {
    CHECK(images[i].level == Level::Tile);
    CHECK(images[i].sub_row == i / 8);
    CHECK(images[i].sub_col == i % 8);
    CHECK_FALSE(images[i].encrypted);
    CHECK(images[i].blob.size() <= kTileHardCapBytes);
  }
  const Gray8 t0 = decode_jpeg(images[0].blob);
  CHECK(t0.rows() == 150);
  CHECK(t0.cols() == 225);
  CHECK(images[64].level == Level::Browse);
  CHECK(images[65].level == Level::Thumb);
  CHECK(images[66].level == Level::Jump);
  CHECK(decode_jpeg(images[64].blob).cols() == 225);
  CHECK(decode_jpeg(images[64].blob).rows() == 150);

  const PyramidImages p = build_pyramid(cut);
  const double full = 1800.0 * 1200.0;
  CHECK(std::abs(p.browse.size() / full * 64 - 1) < 0.02);
  CHECK(std::abs(p.thumb.size() / full * 256 - 1) < 0.02);
  CHECK(std::abs(p.jump.size() / full * 1024 - 1) < 0.02);
}

TEST_CASE("spin2 cut product set is encrypted at full resolution") {
  std::mt19937 rng(6);
  Cut cut = random_cut(Theme::Spin2, rng);
  cut.pixels = fixtures::texture(static_cast<int>(cut.pixels.rows()), static_cast<int>(cut.pixels.cols()), 4);
  const auto images = encode_cut(cut, "secret");
  REQUIRE(images.size() == 28);
  const CipherKey key = derive_cut_key("secret", cut.grid, cut.acquired);
  for (int i = 0; i < 25; ++i) {
    const auto& t = images[i];
    CHECK(t.encrypted);
    CHECK(t.key_id == key_to_id(key));
    CHECK_FALSE(looks_like_jpeg(t.blob));
    const auto plain = light_decrypt(t.blob, key, tile_nonce(cut.grid, t.level, t.sub_row, t.sub_col, cut.acquired));
    CHECK(looks_like_jpeg(plain));
  }
  for (int i = 25; i < 28; ++i) CHECK_FALSE(images[i].encrypted);
}

TEST_CASE("sha256 and the keystream cipher") {
  const std::string abc = "abc";
  const auto digest = sha256(std::span(reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()));
  CHECK(to_hex(digest) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");

  std::vector<std::uint8_t> data(1000);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<std::uint8_t>(i * 7);
  CipherKey key{};
  key[0] = 1;
  const std::vector<std::uint8_t> nonce{1, 2, 3};
  const auto enc = light_encrypt(data, key, nonce);
  CHECK(enc != data);
  CHECK(light_decrypt(enc, key, nonce) == data);
  CipherKey other = key;
  other[1] = 9;
  CHECK(light_decrypt(enc, other, nonce) != data);
  CHECK(key_from_id(key_to_id(key)) == key);
  const std::vector<std::uint8_t> short_key(5);
  CHECK_THROWS_AS(light_encrypt(data, short_key, nonce), KeyError);
}

TEST_CASE("jpeg round trip and fallback quality") {
  const Gray8 smooth = fixtures::texture(150, 225, 2);
  const auto blob = encode_jpeg(smooth);
  CHECK(looks_like_jpeg(blob));
  CHECK(psnr(decode_jpeg(blob), smooth) > 30.0);

  std::mt19937 rng(1);
  Gray8 noise(150, 225);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = static_cast<std::uint8_t>(rng());
  const auto q80 = encode_jpeg(noise, 80);
  const auto q70 = encode_jpeg(noise, 70);
  REQUIRE(q80.size() > kTileHardCapBytes);
  CHECK(encode_tile_jpeg(noise) == q70);
  CHECK(encode_tile_jpeg(smooth) == encode_jpeg(smooth, 80));
  CHECK_THROWS_AS(decode_jpeg(std::vector<std::uint8_t>{1, 2, 3}), FormatError);
}

TEST_CASE("usgs cutting aligns sources to cells") {
  // A source exactly covering one cell is that cell's cut.
  const UtmBox cell = ugrid_to_extent(UGridId::from_indices(10, 307, 4393));
  auto src = fixtures::usgs_source("a", 10, cell.easting_min, cell.northing_max, 1800, 1200, Date(19980601), 1);
  const std::vector<SourceRaster> one{src};
  const auto cuts = cut_usgs(one, 10);
  REQUIRE(cuts.size() == 1);
  CHECK(cuts[0].grid == GridKey::from(UGridId::from_indices(10, 307, 4393)));
  CHECK((cuts[0].pixels == src.pixels).all());
  CHECK(cuts[0].acquired == Date(19980601));

  // Shifted by half a cell: four cuts, uncovered pixels white.
  auto shifted = src;
  shifted.info.easting += 900;
  shifted.info.northing -= 600;
  const std::vector<SourceRaster> sh{shifted};
  const auto four = cut_usgs(sh, 10);
  REQUIRE(four.size() == 4);
  for (const Cut& c : four) {
    CHECK((c.pixels == kWhite).count() == 1800 * 1200 - 900 * 600);
  }

  // Overlap: the newer acquisition wins, no-data never overwrites.
  auto newer = fixtures::usgs_source("b", 10, cell.easting_min, cell.northing_max, 1800, 1200, Date(19990101), 2);
  newer.pixels.block(0, 0, 10, 10).setConstant(kWhite);
  const std::vector<SourceRaster> both{src, newer};
  const auto merged = cut_usgs(both, 10);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].acquired == Date(19990101));
  CHECK(merged[0].pixels(0, 0) == src.pixels(0, 0));
  CHECK(merged[0].pixels(50, 50) == newer.pixels(50, 50));
}

TEST_CASE("spin2 cut dimensions") {
  const CutDims eq = spin2_cut_dims(0.0);
  CHECK(eq.width % 5 == 0);
  CHECK(eq.height % 5 == 0);
  // 1/96 degree of latitude at 1.56 m per pixel.
  CHECK(std::abs(eq.height - kMetersPerDegreeLat / 96 / 1.56) <= 5);
  CHECK(spin2_cut_dims(60.0).width < eq.width);
}

TEST_CASE("png encoding") {
  RgbImage img(2, 3);
  img.r.setConstant(10);
  img.g.setConstant(20);
  img.b.setConstant(30);
  const auto png = encode_png(img);
  REQUIRE(png.size() > 33);
  const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  CHECK(std::equal(sig, sig + 8, png.begin()));
  // IHDR width and height, big-endian.
  CHECK(png[19] == 3);
  CHECK(png[23] == 2);
}
