#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <string>
#include <vector>

#include "mvdiff/error.hpp"
#include "mvdiff/rng.hpp"

namespace mvdiff {

// Dense row-major double tensor. Most of the stack works on rank-2 views
// ({rows, cols}); spatial grids use {H, W, C}, which aliases {H*W, C}
// without copying because storage is row-major.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(size_t(numel_of(shape)), 0.0);
  }
  Tensor(std::vector<int64_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    require(int64_t(data.size()) == numel_of(shape), "tensor: size mismatch");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }

  int64_t numel() const { return int64_t(data.size()); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  int64_t rows() const {
    require(!shape.empty(), "tensor: rank 0");
    int64_t r = 1;
    for (size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
    return r;
  }
  int64_t cols() const {
    require(!shape.empty(), "tensor: rank 0");
    return shape.back();
  }

  double& at(int64_t r, int64_t c) { return data[size_t(r * cols() + c)]; }
  double at(int64_t r, int64_t c) const { return data[size_t(r * cols() + c)]; }

  Tensor reshaped(std::vector<int64_t> s) const {
    require(numel_of(s) == numel(), "reshape: numel mismatch");
    return Tensor(std::move(s), data);
  }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int64_t> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor randn(std::vector<int64_t> s, Rng& rng) {
    Tensor t(std::move(s));
    for (double& v : t.data) v = rng.normal();
    return t;
  }

  static Tensor uniform(std::vector<int64_t> s, double lo, double hi,
                        Rng& rng) {
    Tensor t(std::move(s));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
  }
};

using EigenRowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const EigenRowMat> as_matrix(const Tensor& t) {
  return {t.data.data(), t.rows(), t.cols()};
}
inline Eigen::Map<EigenRowMat> as_matrix(Tensor& t) {
  return {t.data.data(), t.rows(), t.cols()};
}

// C = A * B for rank-2 operands.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul: inner dims " + a.shape_str() + " x " +
                                    b.shape_str());
  Tensor c({a.rows(), b.cols()});
  as_matrix(c).noalias() = as_matrix(a) * as_matrix(b);
  return c;
}

inline Tensor transpose(const Tensor& a) {
  Tensor t({a.cols(), a.rows()});
  as_matrix(t) = as_matrix(a).transpose();
  return t;
}

namespace detail {

// Supported elementwise broadcast patterns: identical shape, row vector
// {1,c} against {r,c}, column vector {r,1} against {r,c}, and scalar {1,1}.
template <class F>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, F f,
                        const char* name) {
  if (a.same_shape(b)) {
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = f(a.data[i], b.data[i]);
    return out;
  }
  const int64_t r = a.rows(), c = a.cols();
  if (b.numel() == 1) {
    Tensor out = a;
    for (double& v : out.data) v = f(v, b.data[0]);
    return out;
  }
  if (b.rows() == 1 && b.cols() == c) {
    Tensor out = a;
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j)
        out.data[size_t(i * c + j)] = f(a.at(i, j), b.data[size_t(j)]);
    return out;
  }
  if (b.cols() == 1 && b.rows() == r) {
    Tensor out = a;
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j)
        out.data[size_t(i * c + j)] = f(a.at(i, j), b.data[size_t(i)]);
    return out;
  }
  throw Error(std::string(name) + ": incompatible shapes " + a.shape_str() +
              " vs " + b.shape_str());
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(a, b, [](double x, double y) { return x + y; },
                                  "add");
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(a, b, [](double x, double y) { return x - y; },
                                  "sub");
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(a, b, [](double x, double y) { return x * y; },
                                  "mul");
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& v : out.data) v *= s;
  return out;
}

inline Tensor add_scalar(const Tensor& a, double s) {
  Tensor out = a;
  for (double& v : out.data) v += s;
  return out;
}

inline double dot_all(const Tensor& a, const Tensor& b) {
  require(a.numel() == b.numel(), "dot_all: numel mismatch");
  double s = 0;
  for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline double sum_all(const Tensor& a) {
  double s = 0;
  for (double v : a.data) s += v;
  return s;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.numel() == b.numel(), "max_abs_diff: numel mismatch");
  double m = 0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  for (size_t i = 0; i < a.data.size(); ++i) {
    // bitwise comparison, not value comparison (distinguishes -0.0 / NaN)
    if (std::memcmp(&a.data[i], &b.data[i], sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace mvdiff
