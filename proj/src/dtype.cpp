#include "passkit/dtype.hpp"

#include <sstream>

#include "passkit/category.hpp"

namespace passkit {

std::string_view dtype_name(DType d) {
  switch (d) {
    case DType::fp64: return "fp64";
    case DType::fp32: return "fp32";
    case DType::fp16: return "fp16";
    case DType::bf16: return "bf16";
    case DType::int64: return "int64";
    case DType::boolean: return "bool";
  }
  return "?";
}

std::optional<DType> dtype_from_name(std::string_view name) {
  for (DType d : kAllDTypes)
    if (dtype_name(d) == name) return d;
  return std::nullopt;
}

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::fp64:
    case DType::int64: return 8;
    case DType::fp32: return 4;
    case DType::fp16:
    case DType::bf16: return 2;
    case DType::boolean: return 1;
  }
  return 0;
}

namespace {
int promotion_rank(DType d) {
  switch (d) {
    case DType::boolean: return 0;
    case DType::int64: return 1;
    case DType::fp16:
    case DType::bf16: return 2;
    case DType::fp32: return 3;
    case DType::fp64: return 4;
  }
  return 0;
}
}  // namespace

DType promote(DType a, DType b) {
  if (a == b) return a;
  if ((a == DType::fp16 && b == DType::bf16) || (a == DType::bf16 && b == DType::fp16)) return DType::fp32;
  return promotion_rank(a) >= promotion_rank(b) ? a : b;
}

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

std::string TensorMeta::str() const { return std::string(dtype_name(dtype)) + shape_str(shape); }

std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::none: return "none";
    case ErrorCategory::accuracy: return "accuracy";
    case ErrorCategory::compilation: return "compilation";
    case ErrorCategory::runtime: return "runtime";
  }
  return "?";
}

std::optional<ErrorCategory> category_from_name(std::string_view s) {
  for (auto c : {ErrorCategory::none, ErrorCategory::accuracy, ErrorCategory::compilation, ErrorCategory::runtime})
    if (category_name(c) == s) return c;
  return std::nullopt;
}

}  // namespace passkit
