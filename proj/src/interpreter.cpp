#include "passkit/interpreter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "passkit/error.hpp"
#include "passkit/quantize.hpp"
#include "passkit/registry.hpp"

#define PASSKIT_KERNEL(fn, ...)                                                   \
  (config_.backend == kernels::Backend::serial ? kernels::serial::fn(__VA_ARGS__) \
                                                : kernels::parallel::fn(__VA_ARGS__))

namespace passkit {

DispatchGuard DispatchGuard::default_policy() { return DispatchGuard(PrimitiveRegistry::instance().primitive_names()); }

void DispatchGuard::on_dispatch(const std::string& op, const std::string& kernel, ExecutionTrace& trace) const {
  const bool ok = whitelist_.count(op) > 0;
  trace.guard_events.push_back({op, kernel, ok});
  if (!ok) throw WhitelistViolation(op, kernel);
}

Interpreter::Interpreter(const KernelLibrary* library, NumericsConfig config, const DispatchGuard* guard)
    : library_(library), config_(config), guard_(guard) {}

std::vector<double> Interpreter::allocate(int64_t n) {
  std::vector<double> buf;
  for (auto it = pool_.rbegin(); it != pool_.rend(); ++it) {
    if (static_cast<int64_t>(it->size()) == n) {
      buf = std::move(*it);
      pool_.erase(std::next(it).base());
      break;
    }
  }
  if (static_cast<int64_t>(buf.size()) != n) buf.assign(n, 0.0);
  if (config_.poison_fill) std::fill(buf.begin(), buf.end(), std::numeric_limits<double>::quiet_NaN());
  return buf;
}

void Interpreter::release(std::vector<double>&& buf) {
  if (!buf.empty()) pool_.push_back(std::move(buf));
}

EvalResult Interpreter::evaluate(const Graph& g, const std::vector<TensorValue>& inputs) {
  EvalResult r;
  r.outputs = run_graph(g, inputs, 0, "", r.trace, nullptr);
  for (std::size_t i = 0; i < r.outputs.size(); ++i) {
    const auto& d = r.outputs[i].data;
    if (std::any_of(d.begin(), d.end(), [](double x) { return std::isnan(x); }))
      r.trace.poisoned_outputs.push_back(static_cast<int>(i));
  }
  return r;
}

std::map<ValueRef, TensorValue> Interpreter::evaluate_all(const Graph& g, const std::vector<TensorValue>& inputs) {
  std::map<ValueRef, TensorValue> keep;
  ExecutionTrace trace;
  run_graph(g, inputs, 0, "", trace, &keep);
  return keep;
}

std::vector<TensorValue> Interpreter::run_graph(const Graph& g, const std::vector<TensorValue>& inputs, int depth,
                                                const std::string& kernel, ExecutionTrace& trace,
                                                std::map<ValueRef, TensorValue>* keep) {
  if (inputs.size() != g.inputs.size())
    throw RuntimeFault("graph '" + g.name + "' expects " + std::to_string(g.inputs.size()) + " inputs, got " +
                       std::to_string(inputs.size()));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].meta != g.inputs[i])
      throw RuntimeFault("graph '" + g.name + "' input " + std::to_string(i) + " is " + inputs[i].meta.str() +
                         ", expected " + g.inputs[i].str());
    if (static_cast<int64_t>(inputs[i].data.size()) != inputs[i].meta.numel())
      throw RuntimeFault("graph '" + g.name + "' input " + std::to_string(i) + " has the wrong element count");
  }

  std::map<ValueRef, TensorValue> values;
  for (std::size_t i = 0; i < inputs.size(); ++i) values[ValueRef::of_input(static_cast<int>(i))] = inputs[i];
  if (keep) *keep = values;

  const auto order = topological_order(g);
  for (const auto& id : order) {
    const OperatorNode& n = g.node(id);
    std::vector<const TensorValue*> ins;
    for (const auto& r : n.inputs) {
      auto it = values.find(r);
      if (it == values.end()) throw RuntimeFault("node '" + n.id + "': missing value " + r.str());
      ins.push_back(&it->second);
    }
    std::vector<TensorValue> outs;
    if (is_fused_op(n.op)) {
      if (!library_ || !library_->contains(n.op)) throw RuntimeFault("undeclared fused kernel '" + n.op + "'");
      trace.entries.push_back({n.id, n.op, kernel, depth, true});
      std::vector<TensorMeta> metas;
      std::vector<TensorValue> args;
      for (const auto* v : ins) {
        metas.push_back(v->meta);
        args.push_back(*v);
      }
      Graph body;
      try {
        body = library_->instantiate(n.op, metas, n.attrs);
      } catch (const RuntimeFault&) {
        throw;
      } catch (const Error& e) {
        throw RuntimeFault("cannot instantiate '" + n.op + "': " + e.what());
      }
      outs = run_graph(body, args, depth + 1, n.op, trace, nullptr);
    } else {
      if (depth >= 1 && guard_) guard_->on_dispatch(n.op, kernel, trace);
      trace.entries.push_back({n.id, n.op, kernel, depth, false});
      outs = run_primitive(n, ins);
    }
    if (outs.size() != n.outputs.size())
      throw RuntimeFault("node '" + n.id + "' produced " + std::to_string(outs.size()) + " outputs, declared " +
                         std::to_string(n.outputs.size()));
    for (std::size_t k = 0; k < outs.size(); ++k) {
      if (outs[k].meta != n.outputs[k])
        throw RuntimeFault("node '" + n.id + "' output " + std::to_string(k) + " is " + outs[k].meta.str() +
                           ", statically inferred " + n.outputs[k].str());
      ValueRef ref = ValueRef::of_node(n.id, static_cast<int>(k));
      if (keep) (*keep)[ref] = outs[k];
      values[ref] = std::move(outs[k]);
    }
  }

  std::vector<TensorValue> result;
  std::set<ValueRef> moved;
  for (const auto& r : g.outputs) {
    auto it = values.find(r);
    if (it == values.end()) throw RuntimeFault("graph '" + g.name + "': output " + r.str() + " was not produced");
    if (r.is_input() || moved.count(r)) {
      result.push_back(it->second);
    } else {
      result.push_back(std::move(it->second));
      moved.insert(r);
    }
  }
  // Intermediates go back to the pool in canonical order.
  for (const auto& id : order) {
    const OperatorNode& n = g.node(id);
    for (std::size_t k = 0; k < n.outputs.size(); ++k) {
      ValueRef ref = ValueRef::of_node(n.id, static_cast<int>(k));
      if (!moved.count(ref)) release(std::move(values[ref].data));
    }
  }
  return result;
}

std::vector<TensorValue> Interpreter::run_primitive(const OperatorNode& node,
                                                    const std::vector<const TensorValue*>& ins) {
  const auto& reg = PrimitiveRegistry::instance();
  const OpInfo& info = reg.get(node.op);
  if (info.delegate) {
    OperatorNode inner = node;
    inner.op = attr_string(node.attrs, "target");
    inner.attrs.erase("target");
    return run_primitive(inner, ins);
  }
  std::vector<TensorMeta> in_metas;
  for (const auto* v : ins) in_metas.push_back(v->meta);
  std::vector<TensorMeta> metas;
  try {
    reg.check_node_schema(info, ins.size(), node.attrs);
    metas = info.infer(in_metas, node.attrs);
  } catch (const Error& e) {
    throw RuntimeFault("node '" + node.id + "' (" + node.op + "): " + e.what());
  }
  const TensorMeta& om = metas.at(0);
  TensorValue out{om, allocate(om.numel())};
  std::span<double> o(out.data);
  auto in = [&](std::size_t k) { return std::span<const double>(ins[k]->data); };
  const std::string& op = node.op;

  if (op == "add" || op == "sub" || op == "mul" || op == "div") {
    const auto bop = op == "add"   ? kernels::BinaryOp::add
                     : op == "sub" ? kernels::BinaryOp::sub
                     : op == "mul" ? kernels::BinaryOp::mul
                                   : kernels::BinaryOp::div;
    PASSKIT_KERNEL(binary, bop, in(0), ins[0]->meta.shape, in(1), ins[1]->meta.shape, o, om.shape);
  } else if (op == "relu") {
    PASSKIT_KERNEL(relu, in(0), o);
  } else if (op == "clamp") {
    PASSKIT_KERNEL(clamp, in(0), o, attr_real_opt(node.attrs, "min"), attr_real_opt(node.attrs, "max"));
  } else if (op == "cast") {
    PASSKIT_KERNEL(cast, in(0), o, om.dtype);
  } else if (op == "sum") {
    const auto& s = ins[0]->meta.shape;
    std::vector<bool> reduced(s.size(), false);
    for (int64_t d : attr_ints(node.attrs, "dims")) reduced[normalize_axis(d, static_cast<int64_t>(s.size()))] = true;
    PASSKIT_KERNEL(reduce_sum, in(0), s, reduced, o);
  } else if (op == "layer_norm") {
    const int64_t cols = numel(attr_ints(node.attrs, "normalized_shape"));
    const int64_t rows = ins[0]->meta.numel() / cols;
    const double eps = attr_real_opt(node.attrs, "eps").value_or(1e-5);
    PASSKIT_KERNEL(layer_norm, in(0), in(1), in(2), rows, cols, eps, o);
  } else if (op == "matmul") {
    PASSKIT_KERNEL(matmul, in(0), ins[0]->meta.shape, in(1), ins[1]->meta.shape, o, om.shape);
  } else if (op == "roll") {
    const auto& s = ins[0]->meta.shape;
    std::vector<int64_t> shift(s.size(), 0);
    const auto shifts = attr_ints(node.attrs, "shifts");
    const auto dims = attr_ints(node.attrs, "dims");
    for (std::size_t k = 0; k < dims.size(); ++k) shift[normalize_axis(dims[k], static_cast<int64_t>(s.size()))] += shifts[k];
    PASSKIT_KERNEL(roll, in(0), s, shift, o);
  } else if (op == "slice") {
    const auto spec = resolve_slice(ins[0]->meta.shape, node.attrs);
    PASSKIT_KERNEL(slice, in(0), ins[0]->meta.shape, spec.start, spec.step, o, om.shape);
  } else if (op == "transpose") {
    std::vector<int64_t> perm;
    for (int64_t p : attr_ints(node.attrs, "perm")) perm.push_back(normalize_axis(p, static_cast<int64_t>(om.shape.size())));
    PASSKIT_KERNEL(transpose, in(0), ins[0]->meta.shape, perm, o);
  } else if (op == "cat") {
    std::vector<std::span<const double>> parts;
    std::vector<Shape> shapes;
    for (std::size_t k = 0; k < ins.size(); ++k) {
      parts.push_back(in(k));
      shapes.push_back(ins[k]->meta.shape);
    }
    const int64_t dim = normalize_axis(attr_int(node.attrs, "dim"), static_cast<int64_t>(om.shape.size()));
    PASSKIT_KERNEL(cat, parts, shapes, dim, o, om.shape);
  } else if (op == "reshape" || op == "contiguous") {
    std::copy(ins[0]->data.begin(), ins[0]->data.end(), out.data.begin());
  } else if (op == "constant") {
    std::fill(out.data.begin(), out.data.end(), attr_real(node.attrs, "value"));
  } else if (op == "empty") {
    return {std::move(out)};  // deliberately left unwritten
  } else {
    throw RuntimeFault("no kernel for op '" + op + "'");
  }
  PASSKIT_KERNEL(quantize, o, om.dtype);
  return {std::move(out)};
}

// ---------------------------------------------------------------------------
// Inputs and comparison

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<TensorValue> generate_inputs(const Graph& g, uint64_t seed) {
  const uint64_t h = std::stoull(graph_hash(g).substr(0, 16), nullptr, 16);
  std::vector<TensorValue> out;
  for (std::size_t i = 0; i < g.inputs.size(); ++i) {
    const TensorMeta& m = g.inputs[i];
    const uint64_t key = splitmix64(splitmix64(splitmix64(h) ^ seed) ^ i);
    TensorValue v{m, std::vector<double>(m.numel())};
    for (int64_t j = 0; j < m.numel(); ++j) {
      const double u = static_cast<double>(splitmix64(key + static_cast<uint64_t>(j)) >> 11) * 0x1.0p-53;
      double x;
      switch (m.dtype) {
        case DType::int64: x = std::floor(u * 9.0) - 4.0; break;
        case DType::boolean: x = u < 0.5 ? 0.0 : 1.0; break;
        default: x = quantize_value(-1.0 + 2.0 * u, m.dtype); break;
      }
      v.data[j] = x;
    }
    out.push_back(std::move(v));
  }
  return out;
}

CompareResult compare_tensor(const TensorValue& a, const TensorValue& b, double atol, double rtol) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (a.meta != b.meta || a.data.size() != b.data.size()) return {false, inf};
  CompareResult r{true, 0.0};
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double x = a.data[i], y = b.data[i];
    if (std::isnan(x) || std::isnan(y)) {
      if (std::isnan(x) != std::isnan(y)) {
        r.pass = false;
        r.max_abs_diff = inf;
      }
      continue;
    }
    if (std::isinf(x) || std::isinf(y)) {
      if (x != y) {
        r.pass = false;
        r.max_abs_diff = inf;
      }
      continue;
    }
    const double d = std::fabs(x - y);
    r.max_abs_diff = std::max(r.max_abs_diff, d);
    if (!(d <= atol + rtol * std::fabs(y))) r.pass = false;
  }
  return r;
}

CompareResult compare_outputs(const std::vector<TensorValue>& a, const std::vector<TensorValue>& b, double atol,
                              double rtol) {
  if (a.size() != b.size()) return {false, std::numeric_limits<double>::infinity()};
  CompareResult r{true, 0.0};
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto c = compare_tensor(a[i], b[i], atol, rtol);
    r.pass = r.pass && c.pass;
    r.max_abs_diff = std::max(r.max_abs_diff, c.max_abs_diff);
  }
  return r;
}

}  // namespace passkit
