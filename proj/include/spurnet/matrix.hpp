#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spurnet/error.hpp"

namespace spurnet {

/// Row-major dense matrix of doubles. Plain data carrier for datasets,
/// embeddings and centroids; no graph attached.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != rows * cols) throw ShapeError("Matrix: data size does not match rows*cols");
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

  Matrix gather_rows(const std::vector<std::size_t>& idx) const {
    Matrix out(idx.size(), cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = row(idx[i]);
      for (std::size_t c = 0; c < cols; ++c) out(i, c) = src[c];
    }
    return out;
  }
};

}  // namespace spurnet
