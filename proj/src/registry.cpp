#include "passkit/registry.hpp"

#include <algorithm>
#include <numeric>

#include "passkit/error.hpp"

namespace passkit {

std::string_view fusion_class_name(FusionClass c) {
  switch (c) {
    case FusionClass::elementwise: return "elementwise";
    case FusionClass::reduction: return "reduction";
    case FusionClass::data_movement: return "data_movement";
    case FusionClass::opaque: return "opaque";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Attribute access

namespace {

const Json& require(const Attrs& a, const std::string& key) {
  auto it = a.find(key);
  if (it == a.end()) throw SchemaError("missing attribute '" + key + "'");
  return it->second;
}

}  // namespace

int64_t attr_int(const Attrs& a, const std::string& key) {
  const Json& v = require(a, key);
  if (!v.is_number_integer()) throw SchemaError("attribute '" + key + "' must be an integer");
  return v.get<int64_t>();
}

int64_t attr_int_or(const Attrs& a, const std::string& key, int64_t fallback) {
  return a.count(key) ? attr_int(a, key) : fallback;
}

double attr_real(const Attrs& a, const std::string& key) {
  const Json& v = require(a, key);
  if (!v.is_number()) throw SchemaError("attribute '" + key + "' must be a number");
  return v.get<double>();
}

std::optional<double> attr_real_opt(const Attrs& a, const std::string& key) {
  auto it = a.find(key);
  if (it == a.end() || it->second.is_null()) return std::nullopt;
  return attr_real(a, key);
}

bool attr_bool_or(const Attrs& a, const std::string& key, bool fallback) {
  auto it = a.find(key);
  if (it == a.end()) return fallback;
  if (!it->second.is_boolean()) throw SchemaError("attribute '" + key + "' must be a boolean");
  return it->second.get<bool>();
}

std::vector<int64_t> attr_ints(const Attrs& a, const std::string& key) {
  const Json& v = require(a, key);
  if (v.is_number_integer()) return {v.get<int64_t>()};
  if (!v.is_array()) throw SchemaError("attribute '" + key + "' must be an integer list");
  std::vector<int64_t> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) throw SchemaError("attribute '" + key + "' must be an integer list");
    out.push_back(e.get<int64_t>());
  }
  return out;
}

std::string attr_string(const Attrs& a, const std::string& key) {
  const Json& v = require(a, key);
  if (!v.is_string()) throw SchemaError("attribute '" + key + "' must be a string");
  return v.get<std::string>();
}

DType attr_dtype(const Attrs& a, const std::string& key) {
  auto d = dtype_from_name(attr_string(a, key));
  if (!d) throw SchemaError("attribute '" + key + "' is not a dtype");
  return *d;
}

int64_t normalize_axis(int64_t axis, int64_t rank) {
  if (axis < -rank || axis >= rank)
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return axis < 0 ? axis + rank : axis;
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[i] = da == 1 ? db : da;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape rules

namespace {

std::vector<TensorMeta> one(Shape s, DType d) { return {TensorMeta{std::move(s), d}}; }

std::vector<TensorMeta> infer_binary(const std::vector<TensorMeta>& in, const Attrs&, bool is_div) {
  DType d = promote(in[0].dtype, in[1].dtype);
  if (is_div && !is_floating(d)) d = DType::fp32;
  return one(broadcast_shapes(in[0].shape, in[1].shape), d);
}

std::vector<TensorMeta> infer_same(const std::vector<TensorMeta>& in, const Attrs&) { return {in[0]}; }

std::vector<TensorMeta> infer_sum(const std::vector<TensorMeta>& in, const Attrs& a) {
  const auto& s = in[0].shape;
  const int64_t rank = static_cast<int64_t>(s.size());
  std::vector<bool> reduced(s.size(), false);
  const auto dims = attr_ints(a, "dims");
  if (dims.empty()) throw ShapeError("sum needs at least one dim");
  for (int64_t d : dims) {
    const int64_t ax = normalize_axis(d, rank);
    if (reduced[ax]) throw ShapeError("sum: repeated dim " + std::to_string(d));
    reduced[ax] = true;
  }
  const bool keep = attr_bool_or(a, "keepdim", false);
  Shape out;
  for (int64_t i = 0; i < rank; ++i) {
    if (!reduced[i]) out.push_back(s[i]);
    else if (keep) out.push_back(1);
  }
  const DType d = is_floating(in[0].dtype) ? in[0].dtype : DType::int64;
  return one(out, d);
}

std::vector<TensorMeta> infer_layer_norm(const std::vector<TensorMeta>& in, const Attrs& a) {
  const auto norm = attr_ints(a, "normalized_shape");
  const auto& s = in[0].shape;
  if (norm.empty() || norm.size() > s.size()) throw ShapeError("layer_norm: bad normalized_shape");
  if (!std::equal(norm.begin(), norm.end(), s.end() - norm.size()))
    throw ShapeError("layer_norm: normalized_shape " + shape_str(norm) + " does not match input " + shape_str(s));
  if (in[1].shape != norm || in[2].shape != norm) throw ShapeError("layer_norm: weight/bias must have normalized_shape");
  if (!is_floating(in[0].dtype)) throw ShapeError("layer_norm needs a floating input");
  if (auto eps = attr_real_opt(a, "eps"); eps && !(*eps >= 0)) throw ShapeError("layer_norm: eps must be >= 0");
  return {in[0]};
}

std::vector<TensorMeta> infer_cat(const std::vector<TensorMeta>& in, const Attrs& a) {
  const auto& s0 = in[0].shape;
  if (s0.empty()) throw ShapeError("cat needs rank >= 1");
  const int64_t dim = normalize_axis(attr_int(a, "dim"), static_cast<int64_t>(s0.size()));
  Shape out = s0;
  out[dim] = 0;
  for (const auto& m : in) {
    if (m.dtype != in[0].dtype) throw ShapeError("cat: dtype mismatch");
    if (m.shape.size() != s0.size()) throw ShapeError("cat: rank mismatch");
    for (std::size_t i = 0; i < s0.size(); ++i)
      if (static_cast<int64_t>(i) != dim && m.shape[i] != s0[i]) throw ShapeError("cat: shape mismatch");
    out[dim] += m.shape[dim];
  }
  return one(out, in[0].dtype);
}

}  // namespace

SliceSpec resolve_slice(const Shape& s, const Attrs& a) {
  const int64_t rank = static_cast<int64_t>(s.size());
  const auto dims = attr_ints(a, "dims");
  const auto starts = attr_ints(a, "starts");
  const auto ends = attr_ints(a, "ends");
  std::vector<int64_t> steps = a.count("steps") ? attr_ints(a, "steps") : std::vector<int64_t>(dims.size(), 1);
  if (starts.size() != dims.size() || ends.size() != dims.size() || steps.size() != dims.size())
    throw ShapeError("slice: dims/starts/ends/steps length mismatch");
  SliceSpec r{std::vector<int64_t>(rank, 0), std::vector<int64_t>(rank, 1), s};
  std::vector<bool> seen(rank, false);
  for (std::size_t k = 0; k < dims.size(); ++k) {
    const int64_t ax = normalize_axis(dims[k], rank);
    if (seen[ax]) throw ShapeError("slice: repeated dim");
    seen[ax] = true;
    if (steps[k] < 1) throw ShapeError("slice: step must be >= 1");
    const int64_t n = s[ax];
    auto clampi = [n](int64_t v) {
      if (v < 0) v += n;
      return std::clamp<int64_t>(v, 0, n);
    };
    const int64_t b = clampi(starts[k]);
    const int64_t e = clampi(ends[k]);
    const int64_t len = e > b ? (e - b + steps[k] - 1) / steps[k] : 0;
    if (len < 1) throw ShapeError("slice: empty result on dim " + std::to_string(dims[k]));
    r.start[ax] = b;
    r.step[ax] = steps[k];
    r.out[ax] = len;
  }
  return r;
}

namespace {

std::vector<TensorMeta> infer_slice(const std::vector<TensorMeta>& in, const Attrs& a) {
  return one(resolve_slice(in[0].shape, a).out, in[0].dtype);
}

std::vector<TensorMeta> infer_roll(const std::vector<TensorMeta>& in, const Attrs& a) {
  const auto shifts = attr_ints(a, "shifts");
  const auto dims = attr_ints(a, "dims");
  if (shifts.size() != dims.size() || dims.empty()) throw ShapeError("roll: shifts/dims length mismatch");
  for (int64_t d : dims) normalize_axis(d, static_cast<int64_t>(in[0].shape.size()));
  return {in[0]};
}

std::vector<TensorMeta> infer_reshape(const std::vector<TensorMeta>& in, const Attrs& a) {
  Shape target = attr_ints(a, "shape");
  int infer_at = -1;
  int64_t known = 1;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == -1) {
      if (infer_at >= 0) throw ShapeError("reshape: more than one -1");
      infer_at = static_cast<int>(i);
    } else if (target[i] < 1) {
      throw ShapeError("reshape: dims must be >= 1 or -1");
    } else {
      known *= target[i];
    }
  }
  const int64_t n = in[0].numel();
  if (infer_at >= 0) {
    if (n % known != 0) throw ShapeError("reshape: cannot infer -1 for " + shape_str(in[0].shape));
    target[infer_at] = n / known;
  }
  if (numel(target) != n) throw ShapeError("reshape: " + shape_str(in[0].shape) + " -> " + shape_str(target));
  return one(target, in[0].dtype);
}

std::vector<TensorMeta> infer_transpose(const std::vector<TensorMeta>& in, const Attrs& a) {
  const auto perm = attr_ints(a, "perm");
  const auto& s = in[0].shape;
  if (perm.size() != s.size()) throw ShapeError("transpose: perm rank mismatch");
  std::vector<bool> seen(s.size(), false);
  Shape out(s.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const int64_t p = normalize_axis(perm[i], static_cast<int64_t>(s.size()));
    if (seen[p]) throw ShapeError("transpose: perm is not a permutation");
    seen[p] = true;
    out[i] = s[p];
  }
  return one(out, in[0].dtype);
}

std::vector<TensorMeta> infer_generator(const std::vector<TensorMeta>&, const Attrs& a) {
  Shape s = attr_ints(a, "shape");
  for (int64_t d : s)
    if (d < 1) throw ShapeError("shape dims must be >= 1");
  return one(s, attr_dtype(a, "dtype"));
}

std::vector<TensorMeta> infer_matmul(const std::vector<TensorMeta>& in, const Attrs&) {
  const auto& a = in[0].shape;
  const auto& b = in[1].shape;
  if (a.size() < 2 || b.size() < 2) throw ShapeError("matmul needs rank >= 2 operands");
  if (a[a.size() - 1] != b[b.size() - 2])
    throw ShapeError("matmul: contraction mismatch " + shape_str(a) + " @ " + shape_str(b));
  Shape out = broadcast_shapes(Shape(a.begin(), a.end() - 2), Shape(b.begin(), b.end() - 2));
  out.push_back(a[a.size() - 2]);
  out.push_back(b[b.size() - 1]);
  return one(out, promote(in[0].dtype, in[1].dtype));
}

Attrs forwarded_attrs(const Attrs& a) {
  Attrs f = a;
  f.erase("target");
  return f;
}

double flops_out(const std::vector<TensorMeta>&, const std::vector<TensorMeta>& out, const Attrs&) {
  return static_cast<double>(out[0].numel());
}
double flops_in(const std::vector<TensorMeta>& in, const std::vector<TensorMeta>&, const Attrs&) {
  return static_cast<double>(in[0].numel());
}
double flops_zero(const std::vector<TensorMeta>&, const std::vector<TensorMeta>&, const Attrs&) { return 0.0; }

}  // namespace

// ---------------------------------------------------------------------------
// Registry

PrimitiveRegistry::PrimitiveRegistry() {
  using K = AttrKind;
  using C = FusionClass;
  auto add = [this](OpInfo info) { ops_.emplace(info.name, std::move(info)); };

  for (const char* name : {"add", "sub", "mul", "div"}) {
    const bool is_div = std::string_view(name) == "div";
    add({name, 2, 2, C::elementwise, {},
         [is_div](const auto& in, const auto& a) { return infer_binary(in, a, is_div); }, flops_out});
  }
  add({"relu", 1, 1, C::elementwise, {}, infer_same, flops_out});
  add({"clamp", 1, 1, C::elementwise, {{"min", K::real, false}, {"max", K::real, false}}, infer_same, flops_out});
  add({"cast", 1, 1, C::elementwise, {{"dtype", K::dtype}},
       [](const auto& in, const auto& a) { return one(in[0].shape, attr_dtype(a, "dtype")); }, flops_zero});
  add({"sum", 1, 1, C::reduction, {{"dims", K::int_list}, {"keepdim", K::boolean, false}}, infer_sum, flops_in});
  add({"layer_norm", 3, 3, C::reduction, {{"normalized_shape", K::int_list}, {"eps", K::real, false}},
       infer_layer_norm,
       [](const auto& in, const auto&, const auto&) { return 8.0 * static_cast<double>(in[0].numel()); }});
  add({"cat", 1, -1, C::data_movement, {{"dim", K::integer}}, infer_cat, flops_zero});
  add({"slice", 1, 1, C::data_movement,
       {{"dims", K::int_list}, {"starts", K::int_list}, {"ends", K::int_list}, {"steps", K::int_list, false}},
       infer_slice, flops_zero});
  add({"roll", 1, 1, C::data_movement, {{"shifts", K::int_list}, {"dims", K::int_list}}, infer_roll, flops_zero});
  add({"reshape", 1, 1, C::data_movement, {{"shape", K::int_list}}, infer_reshape, flops_zero});
  add({"transpose", 1, 1, C::data_movement, {{"perm", K::int_list}}, infer_transpose, flops_zero});
  add({"contiguous", 1, 1, C::data_movement, {}, infer_same, flops_zero});
  add({"constant", 0, 0, C::data_movement, {{"value", K::real}, {"shape", K::int_list}, {"dtype", K::dtype}},
       infer_generator, flops_zero});
  add({"empty", 0, 0, C::data_movement, {{"shape", K::int_list}, {"dtype", K::dtype}}, infer_generator, flops_zero});
  add({"matmul", 2, 2, C::opaque, {}, infer_matmul,
       [](const auto& in, const auto& out, const auto&) {
         return 2.0 * static_cast<double>(out[0].numel()) * static_cast<double>(in[0].shape.back());
       }});

  OpInfo ext{"call_external", 0, -1, C::opaque, {{"target", K::string}}, nullptr, nullptr, true};
  ext.infer = [this](const auto& in, const auto& a) {
    const OpInfo& target = get(attr_string(a, "target"));
    if (target.delegate) throw ShapeError("call_external cannot target another delegate");
    return target.infer(in, forwarded_attrs(a));
  };
  ext.flops = [this](const auto& in, const auto& out, const auto& a) {
    return get(attr_string(a, "target")).flops(in, out, forwarded_attrs(a));
  };
  add(std::move(ext));
}

const PrimitiveRegistry& PrimitiveRegistry::instance() {
  static const PrimitiveRegistry reg;
  return reg;
}

const OpInfo* PrimitiveRegistry::find(std::string_view name) const {
  auto it = ops_.find(name);
  return it == ops_.end() ? nullptr : &it->second;
}

const OpInfo& PrimitiveRegistry::get(std::string_view name) const {
  const OpInfo* info = find(name);
  if (!info) throw SchemaError("unknown op_type '" + std::string(name) + "'");
  return *info;
}

std::set<std::string> PrimitiveRegistry::primitive_names() const {
  std::set<std::string> out;
  for (const auto& [name, info] : ops_)
    if (!info.delegate) out.insert(name);
  return out;
}

namespace {

bool attr_kind_ok(AttrKind k, const Json& v) {
  switch (k) {
    case AttrKind::integer: return v.is_number_integer();
    case AttrKind::real: return v.is_number() || v.is_null();
    case AttrKind::boolean: return v.is_boolean();
    case AttrKind::string: return v.is_string();
    case AttrKind::dtype: return v.is_string() && dtype_from_name(v.get<std::string>()).has_value();
    case AttrKind::int_list:
      if (v.is_number_integer()) return true;
      if (!v.is_array()) return false;
      return std::all_of(v.begin(), v.end(), [](const Json& e) { return e.is_number_integer(); });
  }
  return false;
}

}  // namespace

void PrimitiveRegistry::check_node_schema(const OpInfo& info, std::size_t arity, const Attrs& attrs) const {
  const auto n = static_cast<int>(arity);
  if (n < info.min_arity || (info.max_arity >= 0 && n > info.max_arity))
    throw SchemaError("op '" + info.name + "': arity " + std::to_string(n) + " not accepted");
  for (const auto& spec : info.attrs) {
    auto it = attrs.find(spec.name);
    if (it == attrs.end()) {
      if (spec.required) throw SchemaError("op '" + info.name + "': missing attribute '" + spec.name + "'");
      continue;
    }
    if (!attr_kind_ok(spec.kind, it->second))
      throw SchemaError("op '" + info.name + "': attribute '" + spec.name + "' has the wrong type");
  }
  if (info.delegate) {
    const OpInfo& target = get(attr_string(attrs, "target"));
    if (target.delegate) throw SchemaError("call_external cannot target another delegate");
    check_node_schema(target, arity, forwarded_attrs(attrs));
    return;
  }
  for (const auto& [key, value] : attrs) {
    const bool known = std::any_of(info.attrs.begin(), info.attrs.end(), [&](const AttrSpec& s) { return s.name == key; });
    if (!known) throw SchemaError("op '" + info.name + "': unknown attribute '" + key + "'");
  }
}

}  // namespace passkit
