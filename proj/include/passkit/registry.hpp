#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "passkit/graph.hpp"

namespace passkit {

enum class FusionClass { elementwise, reduction, data_movement, opaque };
std::string_view fusion_class_name(FusionClass c);

enum class AttrKind { integer, real, boolean, int_list, string, dtype };

struct AttrSpec {
  std::string name;
  AttrKind kind;
  bool required = true;
};

using ShapeRule = std::function<std::vector<TensorMeta>(const std::vector<TensorMeta>&, const Attrs&)>;
// Arithmetic work of one execution, given input and output metas.
using FlopRule = std::function<double(const std::vector<TensorMeta>&, const std::vector<TensorMeta>&, const Attrs&)>;

struct OpInfo {
  std::string name;
  int min_arity = 1;
  int max_arity = 1;  // -1: variadic
  FusionClass cls = FusionClass::elementwise;
  std::vector<AttrSpec> attrs;
  ShapeRule infer;
  FlopRule flops;
  // Delegate intrinsics are executable but are not primitives: they sit outside the default whitelist.
  bool delegate = false;
};

class PrimitiveRegistry {
 public:
  static const PrimitiveRegistry& instance();

  const OpInfo* find(std::string_view name) const;
  const OpInfo& get(std::string_view name) const;
  // Primitive names (delegate intrinsics excluded).
  std::set<std::string> primitive_names() const;

  // Throws SchemaError on arity or attribute schema violations.
  void check_node_schema(const OpInfo& info, std::size_t arity, const Attrs& attrs) const;

 private:
  PrimitiveRegistry();
  std::map<std::string, OpInfo, std::less<>> ops_;
};

// Attribute accessors; throw SchemaError on type mismatch.
int64_t attr_int(const Attrs& a, const std::string& key);
int64_t attr_int_or(const Attrs& a, const std::string& key, int64_t fallback);
double attr_real(const Attrs& a, const std::string& key);
std::optional<double> attr_real_opt(const Attrs& a, const std::string& key);
bool attr_bool_or(const Attrs& a, const std::string& key, bool fallback);
std::vector<int64_t> attr_ints(const Attrs& a, const std::string& key);
std::string attr_string(const Attrs& a, const std::string& key);
DType attr_dtype(const Attrs& a, const std::string& key);

// Normalizes a possibly negative axis against `rank`; throws ShapeError when out of range.
int64_t normalize_axis(int64_t axis, int64_t rank);
Shape broadcast_shapes(const Shape& a, const Shape& b);

// Slice attrs resolved over the full rank, Python-style clamping applied.
struct SliceSpec {
  std::vector<int64_t> start, step;
  Shape out;
};
SliceSpec resolve_slice(const Shape& s, const Attrs& a);

}  // namespace passkit
