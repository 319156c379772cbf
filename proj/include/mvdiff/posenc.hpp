#pragma once

#include <cmath>

#include "mvdiff/tensor.hpp"

namespace mvdiff {

// Standard transformer sinusoidal encoding, interleaved sin/cos with
// geometric frequencies (base 10000). Position 0 alternates (0, 1, 0, 1 ..).
inline Tensor sinusoidal_posenc(int64_t position, int64_t dim) {
  require(dim >= 2 && dim % 2 == 0, "posenc: dim must be even");
  Tensor enc({1, dim});
  for (int64_t i = 0; i < dim / 2; ++i) {
    const double freq =
        std::pow(10000.0, -2.0 * double(i) / double(dim));
    const double angle = double(position) * freq;
    enc.data[size_t(2 * i)] = std::sin(angle);
    enc.data[size_t(2 * i + 1)] = std::cos(angle);
  }
  return enc;
}

// 2D grid encoding for patch (row, col): first half encodes the row index,
// second half the column index.
inline Tensor sinusoidal_posenc_2d(int64_t row, int64_t col, int64_t dim) {
  require(dim % 4 == 0, "posenc2d: dim must be divisible by 4");
  Tensor enc({1, dim});
  const Tensor r = sinusoidal_posenc(row, dim / 2);
  const Tensor c = sinusoidal_posenc(col, dim / 2);
  std::copy(r.data.begin(), r.data.end(), enc.data.begin());
  std::copy(c.data.begin(), c.data.end(), enc.data.begin() + dim / 2);
  return enc;
}

}  // namespace mvdiff
