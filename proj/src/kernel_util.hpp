#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "passkit/dtype.hpp"
#include "passkit/kernels.hpp"
#include "passkit/quantize.hpp"

namespace passkit::kernels::detail {

inline std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int64_t i = static_cast<int64_t>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

// Strides of `s` right-aligned to `rank`, zero on broadcast axes.
inline std::vector<int64_t> broadcast_strides(const Shape& s, std::size_t rank) {
  std::vector<int64_t> out(rank, 0);
  const auto st = strides_of(s);
  const std::size_t off = rank - s.size();
  for (std::size_t i = 0; i < s.size(); ++i) out[off + i] = s[i] == 1 ? 0 : st[i];
  return out;
}

inline double apply(BinaryOp op, double x, double y) {
  switch (op) {
    case BinaryOp::add: return x + y;
    case BinaryOp::sub: return x - y;
    case BinaryOp::mul: return x * y;
    case BinaryOp::div: return x / y;
  }
  return 0.0;
}

inline double relu1(double x) { return x < 0.0 ? 0.0 : x; }

inline double clamp1(double x, const std::optional<double>& lo, const std::optional<double>& hi) {
  if (lo && x < *lo) x = *lo;
  if (hi && x > *hi) x = *hi;
  return x;
}

inline double cast1(double x, DType to) {
  if (to == DType::int64 && std::isfinite(x)) return quantize_value(std::trunc(x), to);
  return quantize_value(x, to);
}

// out = (x - mean) * rsqrt(var + eps) * w + b on one row; statistics accumulate left to right.
inline void layer_norm_row(const double* x, const double* w, const double* b, int64_t cols, double eps, double* out) {
  double sum = 0.0;
  for (int64_t c = 0; c < cols; ++c) sum += x[c];
  const double mean = sum / static_cast<double>(cols);
  double sq = 0.0;
  for (int64_t c = 0; c < cols; ++c) sq += (x[c] - mean) * (x[c] - mean);
  const double inv = 1.0 / std::sqrt(sq / static_cast<double>(cols) + eps);
  for (int64_t c = 0; c < cols; ++c) out[c] = (x[c] - mean) * inv * w[c] + b[c];
}

inline int64_t wrap(int64_t i, int64_t n) {
  const int64_t r = i % n;
  return r < 0 ? r + n : r;
}

}  // namespace passkit::kernels::detail
