#include "passkit/quantize.hpp"

#include <cfloat>
#include <cmath>

namespace passkit {

namespace {

// Rounds to a binary format with `mantissa_bits` fraction bits and minimum normal
// exponent `min_exp`. Scaling by the (power-of-two) spacing is exact in binary64,
// so nearbyint performs the only rounding (ties-to-even in the default mode).
double round_binary(double x, int mantissa_bits, int min_exp, double max_value) {
  if (!std::isfinite(x) || x == 0.0) return x;
  int e = std::ilogb(x);
  if (e < min_exp) e = min_exp;
  const double spacing = std::ldexp(1.0, e - mantissa_bits);
  double q = std::nearbyint(x / spacing) * spacing;
  if (q > max_value) q = max_value;
  if (q < -max_value) q = -max_value;
  return q;
}

constexpr double kInt64Max = 9223372036854775807.0;

}  // namespace

double max_finite(DType d) {
  switch (d) {
    case DType::fp64: return DBL_MAX;
    case DType::fp32: return FLT_MAX;
    case DType::fp16: return 65504.0;
    case DType::bf16: return std::ldexp(2.0 - std::ldexp(1.0, -7), 127);
    case DType::int64: return kInt64Max;
    case DType::boolean: return 1.0;
  }
  return 0.0;
}

double quantize_value(double x, DType d) {
  switch (d) {
    case DType::fp64: return x;
    case DType::fp32: return round_binary(x, 23, -126, FLT_MAX);
    case DType::fp16: return round_binary(x, 10, -14, 65504.0);
    case DType::bf16: return round_binary(x, 7, -126, max_finite(DType::bf16));
    case DType::int64: {
      if (std::isnan(x)) return x;
      const double r = std::nearbyint(x);
      return r > kInt64Max ? kInt64Max : (r < -kInt64Max ? -kInt64Max : r);
    }
    case DType::boolean:
      if (std::isnan(x)) return x;
      return x != 0.0 ? 1.0 : 0.0;
  }
  return x;
}

std::vector<double> quantize_dtype(std::span<const double> v, DType d) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = quantize_value(v[i], d);
  return out;
}

}  // namespace passkit
