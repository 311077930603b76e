#include "passkit/kernel_library.hpp"

#include <functional>

#include "passkit/error.hpp"
#include "passkit/registry.hpp"

namespace passkit {

namespace {

bool has_symbols(const Json& v) {
  if (v.is_string()) return v.get<std::string>().starts_with("?");
  if (v.is_array())
    for (const auto& e : v)
      if (has_symbols(e)) return true;
  return false;
}

}  // namespace

KernelProgram kernel_program_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("inputs") || !j.contains("nodes") || !j.contains("outputs"))
    throw ParseError("kernel semantics needs inputs, nodes and outputs");
  KernelProgram p;
  if (!j.at("inputs").is_number_integer() || j.at("inputs").get<int>() < 0)
    throw ParseError("kernel semantics 'inputs' must be a non-negative integer");
  p.arity = j.at("inputs").get<int>();
  for (const auto& n : j.at("nodes")) {
    OperatorNode node = node_from_json(n);
    node.outputs.clear();
    p.nodes.push_back(std::move(node));
  }
  for (const auto& r : j.at("outputs")) p.outputs.push_back(output_ref_from_json(r));
  return p;
}

Json kernel_program_to_json(const KernelProgram& p) {
  Json nodes = Json::array();
  for (const auto& n : p.nodes) nodes.push_back(node_to_json(n, false));
  Json outs = Json::array();
  for (const auto& r : p.outputs) outs.push_back(output_ref_to_json(r));
  return Json{{"inputs", p.arity}, {"nodes", nodes}, {"outputs", outs}};
}

Json substitute_bindings(const Json& value, const Attrs& bindings) {
  if (value.is_string()) {
    const auto s = value.get<std::string>();
    if (s.size() > 1 && s[0] == '?') {
      auto it = bindings.find(s);
      if (it != bindings.end()) return it->second;
    }
    return value;
  }
  if (value.is_array()) {
    Json out = Json::array();
    for (const auto& e : value) out.push_back(substitute_bindings(e, bindings));
    return out;
  }
  return value;
}

void KernelLibrary::add(FusedKernelDecl decl) {
  const std::string where = "fused kernel '" + decl.name + "'";
  if (!is_fused_op(decl.name)) throw SchemaError(where + ": name must start with 'fused.'");
  if (contains(decl.name)) throw SchemaError(where + " is declared twice");
  const auto& p = decl.semantics;
  if (p.outputs.empty()) throw SchemaError(where + ": semantics has no outputs");

  // Output counts per node, used to check references; also checks known ops.
  std::map<std::string, int> outs;
  Graph shell;
  shell.name = decl.name;
  shell.inputs.resize(p.arity);
  for (const auto& n : p.nodes) {
    int count = 1;
    if (is_fused_op(n.op)) {
      const FusedKernelDecl* callee = find(n.op);
      if (!callee) throw SchemaError(where + ": calls undeclared kernel '" + n.op + "'");
      if (static_cast<int>(n.inputs.size()) != callee->semantics.arity)
        throw SchemaError(where + ": call to '" + n.op + "' has the wrong arity");
      count = static_cast<int>(callee->semantics.outputs.size());
    } else {
      const OpInfo* info = PrimitiveRegistry::instance().find(n.op);
      if (!info) throw SchemaError(where + ": unknown op_type '" + n.op + "'");
      bool symbolic = false;
      for (const auto& [k, v] : n.attrs) symbolic = symbolic || has_symbols(v);
      if (!symbolic) PrimitiveRegistry::instance().check_node_schema(*info, n.inputs.size(), n.attrs);
    }
    if (!outs.emplace(n.id, count).second) throw SchemaError(where + ": duplicate node id '" + n.id + "'");
    OperatorNode copy = n;
    copy.outputs.resize(count);
    shell.nodes.push_back(std::move(copy));
  }
  shell.outputs = p.outputs;
  try {
    check_structure(shell);
  } catch (const CycleError& e) {
    throw SchemaError(where + ": " + e.what());
  }
  decls_.emplace(decl.name, std::move(decl));
}

const FusedKernelDecl* KernelLibrary::find(std::string_view name) const {
  auto it = decls_.find(name);
  return it == decls_.end() ? nullptr : &it->second;
}

std::vector<std::string> KernelLibrary::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : decls_) out.push_back(k);
  return out;
}

Graph KernelLibrary::instantiate(std::string_view name, const std::vector<TensorMeta>& inputs,
                                 const Attrs& bindings) const {
  const FusedKernelDecl* decl = find(name);
  if (!decl) throw SchemaError("undeclared fused kernel '" + std::string(name) + "'");
  const auto& p = decl->semantics;
  if (static_cast<int>(inputs.size()) != p.arity)
    throw ShapeError("'" + decl->name + "' expects " + std::to_string(p.arity) + " inputs, got " +
                     std::to_string(inputs.size()));
  Graph g;
  g.name = decl->name;
  g.inputs = inputs;
  for (const auto& n : p.nodes) {
    OperatorNode c = n;
    for (auto& [k, v] : c.attrs) v = substitute_bindings(v, bindings);
    // Nested fused calls inherit the caller's bindings.
    if (is_fused_op(c.op))
      for (const auto& [k, v] : bindings) c.attrs.emplace(k, v);
    g.nodes.push_back(std::move(c));
  }
  g.outputs = p.outputs;
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) pos[g.nodes[i].id] = i;
  for (const auto& id : topological_order(g)) {
    OperatorNode& n = g.nodes[pos[id]];
    std::vector<TensorMeta> ins;
    for (const auto& r : n.inputs) ins.push_back(g.meta_of(r));
    n.outputs = infer_node(n, ins, this);
  }
  return g;
}

std::vector<TensorMeta> KernelLibrary::infer(std::string_view name, const std::vector<TensorMeta>& inputs,
                                             const Attrs& bindings) const {
  return instantiate(name, inputs, bindings).output_metas();
}

std::vector<TensorMeta> infer_node(const OperatorNode& node, const std::vector<TensorMeta>& inputs,
                                   const KernelLibrary* lib) {
  if (is_fused_op(node.op)) {
    if (!lib || !lib->contains(node.op)) throw SchemaError("undeclared fused kernel '" + node.op + "'");
    return lib->infer(node.op, inputs, node.attrs);
  }
  const auto& reg = PrimitiveRegistry::instance();
  const OpInfo& info = reg.get(node.op);
  reg.check_node_schema(info, inputs.size(), node.attrs);
  return info.infer(inputs, node.attrs);
}

std::vector<std::vector<TensorMeta>> infer_graph(const Graph& g, const KernelLibrary* lib) {
  std::vector<std::vector<TensorMeta>> out(g.nodes.size());
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) pos[g.nodes[i].id] = i;
  for (const auto& id : topological_order(g)) {
    const std::size_t i = pos[id];
    const OperatorNode& n = g.nodes[i];
    std::vector<TensorMeta> ins;
    for (const auto& r : n.inputs) {
      if (r.is_input()) {
        ins.push_back(g.meta_of(r));
        continue;
      }
      const auto& src = out[pos.at(r.node)];
      if (r.index < 0 || r.index >= static_cast<int>(src.size()))
        throw SchemaError("node '" + n.id + "': reference " + r.str() + " out of range");
      ins.push_back(src[r.index]);
    }
    out[i] = infer_node(n, ins, lib);
  }
  return out;
}

}  // namespace passkit
