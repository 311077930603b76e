#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "passkit/dtype.hpp"

namespace passkit {

using Json = nlohmann::json;

// Attribute values are JSON scalars or int lists; kept sorted by key.
using Attrs = std::map<std::string, Json>;

inline constexpr std::string_view kFusedPrefix = "fused.";
inline bool is_fused_op(std::string_view op) { return op.substr(0, kFusedPrefix.size()) == kFusedPrefix; }

// Reference to a value: output `index` of node `node`, or graph input `index`.
struct ValueRef {
  enum class Kind { node, graph_input };
  Kind kind = Kind::node;
  std::string node;
  int index = 0;

  static ValueRef of_node(std::string id, int out = 0) { return {Kind::node, std::move(id), out}; }
  static ValueRef of_input(int i) { return {Kind::graph_input, {}, i}; }
  bool is_input() const { return kind == Kind::graph_input; }

  std::string str() const;
  friend bool operator==(const ValueRef&, const ValueRef&) = default;
  friend auto operator<=>(const ValueRef&, const ValueRef&) = default;
};

struct OperatorNode {
  std::string id;
  std::string op;
  Attrs attrs;
  std::vector<ValueRef> inputs;
  std::vector<TensorMeta> outputs;

  friend bool operator==(const OperatorNode&, const OperatorNode&) = default;
};

// Natural ordering of node ids: digit runs compare numerically ("n2" < "n10").
bool node_id_less(std::string_view a, std::string_view b);

class Graph {
 public:
  std::string name;
  std::vector<TensorMeta> inputs;
  std::vector<OperatorNode> nodes;
  std::vector<ValueRef> outputs;

  const OperatorNode* find(std::string_view id) const;
  const OperatorNode& node(std::string_view id) const;
  // Index into `nodes`, or -1.
  int index_of(std::string_view id) const;

  const TensorMeta& meta_of(const ValueRef& v) const;
  std::vector<TensorMeta> output_metas() const;

  friend bool operator==(const Graph&, const Graph&) = default;
};

// Parses the graph file format. Structural checks: unique ids, resolvable refs,
// acyclicity, known ops, attribute schema. Shapes missing from the document are
// inferred; declared shapes are kept as-is (checked by validate_graph).
Graph parse_graph(std::string_view document);
Graph graph_from_json(const Json& j);

// Canonical document: sorted keys, two-space indent, trailing LF, hash emitted.
std::string serialize_graph(const Graph& g);
Json graph_to_json(const Graph& g, bool with_hash = true);

// Pieces of the document format, shared with kernel and pass documents.
ValueRef input_ref_from_json(const Json& j);   // ["node", id, k] | ["graphinput", i, 0]
Json input_ref_to_json(const ValueRef& v);
ValueRef output_ref_from_json(const Json& j);  // [id, k] | [i, 0]
Json output_ref_to_json(const ValueRef& v);
OperatorNode node_from_json(const Json& j);
Json node_to_json(const OperatorNode& n, bool with_outputs);
Json tensor_meta_to_json(const TensorMeta& m);
TensorMeta tensor_meta_from_json(const Json& j);

// Throws CycleError / SchemaError; used by parse and by rewrites.
void check_structure(const Graph& g);

// Kahn order, ready nodes popped by ascending id.
std::vector<std::string> topological_order(const Graph& g);

// SHA-256 hex of the canonical structural form (ids and name excluded).
std::string graph_hash(const Graph& g);

// Operator-type sequence in canonical order.
std::vector<std::string> op_sequence(const Graph& g);

struct SubgraphRef {
  std::string parent;
  std::set<std::string> node_ids;
  std::vector<ValueRef> boundary_inputs;   // parent values feeding the window
  std::vector<ValueRef> boundary_outputs;  // parent values leaving the window
};

// Window [begin, end) over the canonical order.
Graph extract_subgraph(const Graph& g, std::size_t begin, std::size_t end, SubgraphRef* ref = nullptr);
// Explicit node set; with require_contiguous the set must be a canonical-order interval.
Graph extract_subgraph(const Graph& g, const std::set<std::string>& node_ids, bool require_contiguous,
                       SubgraphRef* ref = nullptr);

}  // namespace passkit
