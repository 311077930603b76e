#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace passkit {

enum class DType { fp64, fp32, fp16, bf16, int64, boolean };

inline constexpr DType kAllDTypes[] = {DType::fp64, DType::fp32, DType::fp16,
                                       DType::bf16, DType::int64, DType::boolean};

std::string_view dtype_name(DType d);
std::optional<DType> dtype_from_name(std::string_view name);

// fp64/fp32/fp16/bf16 carry tolerances; int64 and bool compare exactly.
constexpr bool is_floating(DType d) {
  return d == DType::fp64 || d == DType::fp32 || d == DType::fp16 || d == DType::bf16;
}

std::size_t dtype_size(DType d);

// Result dtype of a binary arithmetic op.
DType promote(DType a, DType b);

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorMeta {
  Shape shape;
  DType dtype = DType::fp32;

  int64_t numel() const { return passkit::numel(shape); }
  std::size_t bytes() const { return static_cast<std::size_t>(numel()) * dtype_size(dtype); }
  std::string str() const;

  friend bool operator==(const TensorMeta&, const TensorMeta&) = default;
};

}  // namespace passkit
