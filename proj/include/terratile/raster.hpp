#pragma once

// Dense image types and the pixel-level operations the pyramid is built
// from. Images are row-major Eigen arrays: rows() is height, cols() is width.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <type_traits>
#include <span>
#include <vector>

#include "terratile/common.hpp"

namespace terratile {

template <typename Scalar>
using Image = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Gray8 = Image<std::uint8_t>;

/// No-data value for sources and the fill for uncovered cut pixels.
inline constexpr std::uint8_t kWhite = 255;

/// Sparse (dst x src) matrix whose row i holds the area weights of the source
/// samples covered by destination sample i. Rows sum to one.
inline Eigen::SparseMatrix<float, Eigen::RowMajor> area_weights(Eigen::Index src_size,
                                                                Eigen::Index dst_size) {
  Eigen::SparseMatrix<float, Eigen::RowMajor> w(dst_size, src_size);
  std::vector<Eigen::Triplet<float>> entries;
  const double scale = static_cast<double>(src_size) / static_cast<double>(dst_size);
  entries.reserve(static_cast<std::size_t>(dst_size) * (static_cast<std::size_t>(scale) + 2));
  for (Eigen::Index i = 0; i < dst_size; ++i) {
    const double lo = i * scale;
    const double hi = (i + 1) * scale;
    for (auto j = static_cast<Eigen::Index>(std::floor(lo)); j < hi && j < src_size; ++j) {
      const double overlap = std::min<double>(hi, j + 1) - std::max<double>(lo, j);
      if (overlap > 1e-12) {
        entries.emplace_back(i, j, static_cast<float>(overlap / scale));
      }
    }
  }
  w.setFromTriplets(entries.begin(), entries.end());
  return w;
}

/// Area-weighted resampling to an arbitrary smaller size. For integer
/// factors this is the plain box-filter mean.
template <typename Derived>
Image<typename Derived::Scalar> resample_area(const Eigen::ArrayBase<Derived>& src,
                                              Eigen::Index rows, Eigen::Index cols) {
  using Scalar = typename Derived::Scalar;
  if (rows <= 0 || cols <= 0 || src.rows() == 0 || src.cols() == 0) {
    throw ShapeError("resample to or from an empty image");
  }
  const auto wr = area_weights(src.rows(), rows);
  const auto wc = area_weights(src.cols(), cols);
  const Eigen::MatrixXf source = src.template cast<float>().matrix();
  const Eigen::MatrixXf tmp = wr * source;
  const Eigen::MatrixXf out = (wc * tmp.transpose()).transpose();
  if constexpr (std::is_integral_v<Scalar>) {
    const float lo = static_cast<float>(std::numeric_limits<Scalar>::min());
    const float hi = static_cast<float>(std::numeric_limits<Scalar>::max());
    return (out.array() + 0.5f).floor().max(lo).min(hi).template cast<Scalar>();
  } else {
    return out.array().template cast<Scalar>();
  }
}

template <typename Derived>
Image<typename Derived::Scalar> box_downsample(const Eigen::ArrayBase<Derived>& src, int factor) {
  if (factor <= 0 || src.rows() % factor != 0 || src.cols() % factor != 0) {
    throw ShapeError("box downsample factor does not divide the image");
  }
  return resample_area(src, src.rows() / factor, src.cols() / factor);
}

/// Row-major partition into grid_rows x grid_cols equal tiles.
template <typename Scalar>
std::vector<Image<Scalar>> slice_grid(const Image<Scalar>& src, int grid_rows, int grid_cols) {
  if (grid_rows <= 0 || grid_cols <= 0 || src.rows() % grid_rows != 0 ||
      src.cols() % grid_cols != 0) {
    throw ShapeError("image dimensions are not divisible by the tile grid");
  }
  const Eigen::Index th = src.rows() / grid_rows;
  const Eigen::Index tw = src.cols() / grid_cols;
  std::vector<Image<Scalar>> tiles;
  tiles.reserve(static_cast<std::size_t>(grid_rows) * grid_cols);
  for (int r = 0; r < grid_rows; ++r) {
    for (int c = 0; c < grid_cols; ++c) {
      tiles.emplace_back(src.block(r * th, c * tw, th, tw));
    }
  }
  return tiles;
}

/// Inverse of slice_grid. Tiles are given row-major and must share one shape.
template <typename Scalar>
Image<Scalar> mosaic(std::span<const Image<Scalar>> tiles, int grid_rows, int grid_cols) {
  if (grid_rows <= 0 || grid_cols <= 0 ||
      tiles.size() != static_cast<std::size_t>(grid_rows) * grid_cols) {
    throw ShapeError("tile count does not match the mosaic grid");
  }
  const Eigen::Index th = tiles.front().rows();
  const Eigen::Index tw = tiles.front().cols();
  for (const auto& t : tiles) {
    if (t.rows() != th || t.cols() != tw) throw ShapeError("ragged tile grid");
  }
  Image<Scalar> out(th * grid_rows, tw * grid_cols);
  for (int r = 0; r < grid_rows; ++r) {
    for (int c = 0; c < grid_cols; ++c) {
      out.block(r * th, c * tw, th, tw) = tiles[static_cast<std::size_t>(r) * grid_cols + c];
    }
  }
  return out;
}

/// Convenience overload taking a nested grid; rows may not be ragged.
template <typename Scalar>
Image<Scalar> mosaic(const std::vector<std::vector<Image<Scalar>>>& grid) {
  if (grid.empty() || grid.front().empty()) throw ShapeError("empty tile grid");
  std::vector<Image<Scalar>> flat;
  for (const auto& row : grid) {
    if (row.size() != grid.front().size()) throw ShapeError("ragged tile grid");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return mosaic<Scalar>(std::span<const Image<Scalar>>(flat), static_cast<int>(grid.size()),
                        static_cast<int>(grid.front().size()));
}

}  // namespace terratile
