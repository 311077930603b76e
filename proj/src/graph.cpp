#include "passkit/graph.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <queue>
#include <set>

#include "passkit/error.hpp"
#include "passkit/kernel_library.hpp"
#include "passkit/registry.hpp"
#include "passkit/sha256.hpp"

namespace passkit {

std::string ValueRef::str() const {
  if (is_input()) return "input#" + std::to_string(index);
  return node + ":" + std::to_string(index);
}

bool node_id_less(std::string_view a, std::string_view b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i]));
    const bool db = std::isdigit(static_cast<unsigned char>(b[j]));
    if (da && db) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
      while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
      // Compare digit runs numerically: strip leading zeros, then length, then digits.
      std::size_t is = i, js = j;
      while (is + 1 < ie && a[is] == '0') ++is;
      while (js + 1 < je && b[js] == '0') ++js;
      if (ie - is != je - js) return ie - is < je - js;
      const int c = a.substr(is, ie - is).compare(b.substr(js, je - js));
      if (c != 0) return c < 0;
      if (ie - i != je - j) return ie - i < je - j;  // fewer leading zeros first
      i = ie;
      j = je;
      continue;
    }
    if (a[i] != b[j]) return static_cast<unsigned char>(a[i]) < static_cast<unsigned char>(b[j]);
    ++i;
    ++j;
  }
  return a.size() - i < b.size() - j;
}

const OperatorNode* Graph::find(std::string_view id) const {
  for (const auto& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

const OperatorNode& Graph::node(std::string_view id) const {
  const OperatorNode* n = find(id);
  if (!n) throw SchemaError("graph '" + name + "': unknown node '" + std::string(id) + "'");
  return *n;
}

int Graph::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

const TensorMeta& Graph::meta_of(const ValueRef& v) const {
  if (v.is_input()) {
    if (v.index < 0 || v.index >= static_cast<int>(inputs.size()))
      throw SchemaError("graph '" + name + "': graph input " + std::to_string(v.index) + " out of range");
    return inputs[v.index];
  }
  const OperatorNode& n = node(v.node);
  if (v.index < 0 || v.index >= static_cast<int>(n.outputs.size()))
    throw SchemaError("graph '" + name + "': " + v.str() + " out of range");
  return n.outputs[v.index];
}

std::vector<TensorMeta> Graph::output_metas() const {
  std::vector<TensorMeta> out;
  for (const auto& v : outputs) out.push_back(meta_of(v));
  return out;
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace {

Json meta_to_json(const TensorMeta& m) { return Json{{"shape", m.shape}, {"dtype", dtype_name(m.dtype)}}; }

TensorMeta meta_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("dtype")) throw ParseError("tensor meta needs shape and dtype");
  TensorMeta m;
  for (const auto& d : j.at("shape")) {
    if (!d.is_number_integer()) throw ParseError("shape entries must be integers");
    m.shape.push_back(d.get<int64_t>());
  }
  auto dt = dtype_from_name(j.at("dtype").get<std::string>());
  if (!dt) throw SchemaError("unknown dtype '" + j.at("dtype").get<std::string>() + "'");
  m.dtype = *dt;
  return m;
}

std::string id_from_json(const Json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<int64_t>());
  throw ParseError("node id must be a string or integer");
}

}  // namespace

ValueRef input_ref_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_string()) throw ParseError("input reference must be [kind, ref, out_idx]");
  const std::string kind = j[0].get<std::string>();
  if (!j[2].is_number_integer()) throw ParseError("out_idx must be an integer");
  const int idx = j[2].get<int>();
  if (kind == "node") return ValueRef::of_node(id_from_json(j[1]), idx);
  if (kind == "graphinput") {
    if (!j[1].is_number_integer()) throw ParseError("graphinput ref must be an integer");
    if (idx != 0) throw ParseError("graphinput out_idx must be 0");
    return ValueRef::of_input(j[1].get<int>());
  }
  throw ParseError("unknown reference kind '" + kind + "'");
}

Json input_ref_to_json(const ValueRef& v) {
  if (v.is_input()) return Json::array({"graphinput", v.index, 0});
  return Json::array({"node", v.node, v.index});
}

ValueRef output_ref_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 2 || !j[1].is_number_integer()) throw ParseError("output reference must be [ref, out_idx]");
  if (j[0].is_number_integer()) {
    if (j[1].get<int>() != 0) throw ParseError("graph-input output reference needs out_idx 0");
    return ValueRef::of_input(j[0].get<int>());
  }
  return ValueRef::of_node(id_from_json(j[0]), j[1].get<int>());
}

Json output_ref_to_json(const ValueRef& v) {
  if (v.is_input()) return Json::array({v.index, 0});
  return Json::array({v.node, v.index});
}

OperatorNode node_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("node must be an object");
  for (const char* key : {"id", "op", "inputs"})
    if (!j.contains(key)) throw ParseError(std::string("node missing '") + key + "'");
  OperatorNode n;
  n.id = id_from_json(j.at("id"));
  if (!j.at("op").is_string()) throw ParseError("node op must be a string");
  n.op = j.at("op").get<std::string>();
  if (j.contains("attrs")) {
    if (!j.at("attrs").is_object()) throw ParseError("attrs must be an object");
    for (const auto& [k, v] : j.at("attrs").items()) n.attrs[k] = v;
  }
  if (!j.at("inputs").is_array()) throw ParseError("node inputs must be a list");
  for (const auto& r : j.at("inputs")) n.inputs.push_back(input_ref_from_json(r));
  if (j.contains("out")) {
    if (!j.at("out").is_array()) throw ParseError("node out must be a list");
    for (const auto& m : j.at("out")) n.outputs.push_back(meta_from_json(m));
  }
  return n;
}

Json node_to_json(const OperatorNode& n, bool with_outputs) {
  Json attrs = Json::object();
  for (const auto& [k, v] : n.attrs) attrs[k] = v;
  Json ins = Json::array();
  for (const auto& r : n.inputs) ins.push_back(input_ref_to_json(r));
  Json j{{"id", n.id}, {"op", n.op}, {"attrs", attrs}, {"inputs", ins}};
  if (with_outputs) {
    Json outs = Json::array();
    for (const auto& m : n.outputs) outs.push_back(meta_to_json(m));
    j["out"] = outs;
  }
  return j;
}

Json tensor_meta_to_json(const TensorMeta& m) { return meta_to_json(m); }
TensorMeta tensor_meta_from_json(const Json& j) { return meta_from_json(j); }

Graph graph_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("graph document must be an object");
  for (const char* key : {"name", "inputs", "nodes", "outputs"})
    if (!j.contains(key)) throw ParseError(std::string("graph missing '") + key + "'");
  Graph g;
  try {
    g.name = j.at("name").get<std::string>();
    for (const auto& m : j.at("inputs")) g.inputs.push_back(meta_from_json(m));
    for (const auto& n : j.at("nodes")) g.nodes.push_back(node_from_json(n));
    for (const auto& r : j.at("outputs")) g.outputs.push_back(output_ref_from_json(r));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("graph document: ") + e.what());
  }

  // Structure first with placeholder-free refs: metas may still be missing.
  const auto& reg = PrimitiveRegistry::instance();
  for (const auto& n : g.nodes) {
    if (is_fused_op(n.op)) {
      if (n.outputs.empty()) throw SchemaError("fused node '" + n.id + "' must declare its output metas");
      continue;
    }
    const OpInfo* info = reg.find(n.op);
    if (!info) throw SchemaError("node '" + n.id + "': unknown op_type '" + n.op + "'");
    reg.check_node_schema(*info, n.inputs.size(), n.attrs);
  }
  const auto order = topological_order(g);  // cycle + dangling refs
  std::map<std::string, int> pos;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) pos[g.nodes[i].id] = static_cast<int>(i);
  for (const auto& id : order) {
    OperatorNode& n = g.nodes[pos[id]];
    if (!n.outputs.empty()) continue;
    std::vector<TensorMeta> ins;
    for (const auto& r : n.inputs) ins.push_back(g.meta_of(r));
    try {
      n.outputs = infer_node(n, ins, nullptr);
    } catch (const ShapeError& e) {
      throw SchemaError("node '" + n.id + "': cannot infer output metas: " + e.what());
    }
  }
  check_structure(g);
  if (j.contains("hash")) {
    if (!j.at("hash").is_string() || j.at("hash").get<std::string>() != graph_hash(g))
      throw ParseError("graph '" + g.name + "': hash field does not match content");
  }
  return g;
}

Graph parse_graph(std::string_view document) {
  Json j;
  try {
    j = Json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed graph document: ") + e.what());
  }
  return graph_from_json(j);
}

Json graph_to_json(const Graph& g, bool with_hash) {
  Json ins = Json::array();
  for (const auto& m : g.inputs) ins.push_back(meta_to_json(m));
  Json nodes = Json::array();
  for (const auto& n : g.nodes) nodes.push_back(node_to_json(n, true));
  Json outs = Json::array();
  for (const auto& r : g.outputs) outs.push_back(output_ref_to_json(r));
  Json j{{"name", g.name}, {"inputs", ins}, {"nodes", nodes}, {"outputs", outs}};
  if (with_hash) j["hash"] = graph_hash(g);
  return j;
}

std::string serialize_graph(const Graph& g) { return graph_to_json(g).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Structure

namespace {

void check_ref(const Graph& g, const ValueRef& r, const std::map<std::string, const OperatorNode*>& by_id,
               const std::string& where) {
  if (r.is_input()) {
    if (r.index < 0 || r.index >= static_cast<int>(g.inputs.size()))
      throw SchemaError(where + ": graph input " + std::to_string(r.index) + " does not exist");
    return;
  }
  auto it = by_id.find(r.node);
  if (it == by_id.end()) throw SchemaError(where + ": dangling reference to node '" + r.node + "'");
  if (r.index < 0 || r.index >= static_cast<int>(it->second->outputs.size()))
    throw SchemaError(where + ": node '" + r.node + "' has no output " + std::to_string(r.index));
}

}  // namespace

void check_structure(const Graph& g) {
  if (g.outputs.empty()) throw SchemaError("graph '" + g.name + "' has no outputs");
  std::map<std::string, const OperatorNode*> by_id;
  for (const auto& n : g.nodes) {
    if (n.id.empty()) throw SchemaError("graph '" + g.name + "': empty node id");
    if (!by_id.emplace(n.id, &n).second) throw SchemaError("graph '" + g.name + "': duplicate node id '" + n.id + "'");
    if (n.outputs.empty()) throw SchemaError("node '" + n.id + "' has no outputs");
  }
  for (const auto& m : g.inputs)
    for (int64_t d : m.shape)
      if (d < 1) throw SchemaError("graph '" + g.name + "': input dims must be >= 1");
  for (const auto& n : g.nodes) {
    for (const auto& m : n.outputs)
      for (int64_t d : m.shape)
        if (d < 1) throw SchemaError("node '" + n.id + "': output dims must be >= 1");
    for (const auto& r : n.inputs) check_ref(g, r, by_id, "node '" + n.id + "'");
  }
  for (const auto& r : g.outputs) check_ref(g, r, by_id, "graph '" + g.name + "' outputs");
  topological_order(g);
}

std::vector<std::string> topological_order(const Graph& g) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    if (!index.emplace(g.nodes[i].id, i).second) throw SchemaError("duplicate node id '" + g.nodes[i].id + "'");

  std::vector<int> pending(g.nodes.size(), 0);
  std::vector<std::vector<std::size_t>> consumers(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    for (const auto& r : g.nodes[i].inputs) {
      if (r.is_input()) continue;
      auto it = index.find(r.node);
      if (it == index.end()) throw SchemaError("node '" + g.nodes[i].id + "': dangling reference to '" + r.node + "'");
      ++pending[i];
      consumers[it->second].push_back(i);
    }
  }
  auto cmp = [&](std::size_t a, std::size_t b) { return node_id_less(g.nodes[a].id, g.nodes[b].id); };
  std::set<std::size_t, decltype(cmp)> ready(cmp);
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    if (pending[i] == 0) ready.insert(i);

  std::vector<std::string> order;
  order.reserve(g.nodes.size());
  while (!ready.empty()) {
    const std::size_t i = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(g.nodes[i].id);
    for (std::size_t c : consumers[i])
      if (--pending[c] == 0) ready.insert(c);
  }
  if (order.size() != g.nodes.size()) {
    std::string stuck;
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
      if (pending[i] > 0) stuck += (stuck.empty() ? "" : ", ") + g.nodes[i].id;
    throw CycleError("graph '" + g.name + "' contains a cycle through: " + stuck);
  }
  return order;
}

std::vector<std::string> op_sequence(const Graph& g) {
  std::vector<std::string> ops;
  for (const auto& id : topological_order(g)) ops.push_back(g.node(id).op);
  return ops;
}

std::string graph_hash(const Graph& g) {
  const auto order = topological_order(g);
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  auto ref = [&](const ValueRef& r) {
    return r.is_input() ? Json::array({"in", r.index}) : Json::array({static_cast<int64_t>(pos.at(r.node)), r.index});
  };
  Json ins = Json::array();
  for (const auto& m : g.inputs) ins.push_back(meta_to_json(m));
  Json nodes = Json::array();
  for (const auto& id : order) {
    const auto& n = g.node(id);
    Json attrs = Json::object();
    for (const auto& [k, v] : n.attrs) attrs[k] = v;
    Json in = Json::array();
    for (const auto& r : n.inputs) in.push_back(ref(r));
    Json out = Json::array();
    for (const auto& m : n.outputs) out.push_back(meta_to_json(m));
    nodes.push_back(Json{{"op", n.op}, {"attrs", attrs}, {"in", in}, {"out", out}});
  }
  Json outs = Json::array();
  for (const auto& r : g.outputs) outs.push_back(ref(r));
  return sha256_hex(Json{{"inputs", ins}, {"nodes", nodes}, {"outputs", outs}}.dump());
}

// ---------------------------------------------------------------------------
// Extraction

namespace {

Graph extract_ordered(const Graph& g, const std::vector<std::string>& order, std::size_t begin, std::size_t end,
                      SubgraphRef* ref) {
  std::set<std::string> window(order.begin() + begin, order.begin() + end);
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;

  Graph sub;
  sub.name = g.name + "[" + std::to_string(begin) + ":" + std::to_string(end) + "]";
  std::map<ValueRef, int> boundary_in;
  std::vector<ValueRef> boundary_in_order;
  for (std::size_t i = begin; i < end; ++i) {
    OperatorNode n = g.node(order[i]);
    for (auto& r : n.inputs) {
      if (!r.is_input() && window.count(r.node)) continue;
      auto [it, fresh] = boundary_in.emplace(r, static_cast<int>(boundary_in_order.size()));
      if (fresh) {
        boundary_in_order.push_back(r);
        sub.inputs.push_back(g.meta_of(r));
      }
      r = ValueRef::of_input(it->second);
    }
    sub.nodes.push_back(std::move(n));
  }

  // Values escaping the window: consumed by outside nodes or by the parent's outputs.
  std::set<ValueRef> escaping;
  for (const auto& n : g.nodes) {
    if (window.count(n.id)) continue;
    for (const auto& r : n.inputs)
      if (!r.is_input() && window.count(r.node)) escaping.insert(r);
  }
  for (const auto& r : g.outputs)
    if (!r.is_input() && window.count(r.node)) escaping.insert(r);
  std::vector<ValueRef> outs(escaping.begin(), escaping.end());
  std::sort(outs.begin(), outs.end(), [&](const ValueRef& a, const ValueRef& b) {
    return std::pair(pos[a.node], a.index) < std::pair(pos[b.node], b.index);
  });
  if (outs.empty() && end > begin) {
    const auto& last = g.node(order[end - 1]);
    for (int k = 0; k < static_cast<int>(last.outputs.size()); ++k) outs.push_back(ValueRef::of_node(last.id, k));
  }
  sub.outputs = outs;
  if (ref) {
    ref->parent = g.name;
    ref->node_ids = window;
    ref->boundary_inputs = boundary_in_order;
    ref->boundary_outputs = outs;
  }
  check_structure(sub);
  return sub;
}

}  // namespace

Graph extract_subgraph(const Graph& g, std::size_t begin, std::size_t end, SubgraphRef* ref) {
  const auto order = topological_order(g);
  if (begin >= end || end > order.size())
    throw Error("extract_subgraph: window [" + std::to_string(begin) + ", " + std::to_string(end) +
                ") is empty or out of range for " + std::to_string(order.size()) + " nodes");
  return extract_ordered(g, order, begin, end, ref);
}

Graph extract_subgraph(const Graph& g, const std::set<std::string>& node_ids, bool require_contiguous,
                       SubgraphRef* ref) {
  const auto order = topological_order(g);
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < order.size(); ++i)
    if (node_ids.count(order[i])) positions.push_back(i);
  if (positions.size() != node_ids.size() || positions.empty())
    throw Error("extract_subgraph: node set is empty or names unknown nodes");
  const bool contiguous = positions.back() - positions.front() + 1 == positions.size();
  if (contiguous) return extract_ordered(g, order, positions.front(), positions.back() + 1, ref);
  if (require_contiguous) throw Error("extract_subgraph: node set is not contiguous in canonical order");

  // Non-contiguous: reorder so the selected nodes form the window, preserving relative order.
  std::vector<std::string> reordered;
  for (std::size_t p : positions) reordered.push_back(order[p]);
  for (std::size_t i = 0; i < order.size(); ++i)
    if (!node_ids.count(order[i])) reordered.push_back(order[i]);
  return extract_ordered(g, reordered, 0, positions.size(), ref);
}

}  // namespace passkit
