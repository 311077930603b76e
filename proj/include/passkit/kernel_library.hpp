#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "passkit/graph.hpp"

namespace passkit {

// Sub-program over kernel arguments. Inputs reference arguments through
// ValueRef::of_input(k); node output metas are left empty and inferred per call.
struct KernelProgram {
  int arity = 0;
  std::vector<OperatorNode> nodes;
  std::vector<ValueRef> outputs;
};

KernelProgram kernel_program_from_json(const Json& j);
Json kernel_program_to_json(const KernelProgram& p);

struct FusedKernelDecl {
  std::string name;  // always carries the "fused." prefix
  KernelProgram semantics;
  // Kernels launched by one call; the default policy only admits 1.
  int declared_kernels = 1;
  bool exempt = false;
};

// Fused kernels visible to a graph. A declaration may only call primitives and
// kernels declared before it, so expansion always terminates.
class KernelLibrary {
 public:
  void add(FusedKernelDecl decl);
  const FusedKernelDecl* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }
  std::vector<std::string> names() const;

  // Concrete graph for one call: attrs holding "?sym" strings are replaced by `bindings`.
  Graph instantiate(std::string_view name, const std::vector<TensorMeta>& inputs, const Attrs& bindings) const;
  std::vector<TensorMeta> infer(std::string_view name, const std::vector<TensorMeta>& inputs,
                                const Attrs& bindings) const;

 private:
  std::map<std::string, FusedKernelDecl, std::less<>> decls_;
};

// Substitutes "?sym" strings (also inside lists) from `bindings`; unbound symbols are left as-is.
Json substitute_bindings(const Json& value, const Attrs& bindings);

// Output metas of `node` given its input metas; fused nodes need `lib`.
std::vector<TensorMeta> infer_node(const OperatorNode& node, const std::vector<TensorMeta>& inputs,
                                   const KernelLibrary* lib);

// Re-infers every node in canonical order. Throws ShapeError / SchemaError.
std::vector<std::vector<TensorMeta>> infer_graph(const Graph& g, const KernelLibrary* lib);

}  // namespace passkit
