#pragma once

#include <cstdint>
#include <vector>

#include "terratile/raster.hpp"

namespace terratile {

/// Three equally sized 8-bit planes.
struct RgbImage {
  Gray8 r;
  Gray8 g;
  Gray8 b;

  RgbImage() = default;
  RgbImage(Eigen::Index rows, Eigen::Index cols) : r(rows, cols), g(rows, cols), b(rows, cols) {}
  Eigen::Index rows() const { return r.rows(); }
  Eigen::Index cols() const { return r.cols(); }
};

/// Truecolor 8-bit PNG, filter type 0 on every row.
std::vector<std::uint8_t> encode_png(const RgbImage& image);

}  // namespace terratile
