#include "passkit/validate.hpp"

#include "passkit/error.hpp"
#include "passkit/interpreter.hpp"

namespace passkit {

bool ValidationReport::ok() const {
  for (const auto& c : checks)
    if (!c.ok) return false;
  return !checks.empty();
}

const CheckResult& ValidationReport::check(std::string_view name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  throw Error("no validation check named '" + std::string(name) + "'");
}

Json ValidationReport::to_json() const {
  Json cs = Json::array();
  for (const auto& c : checks) cs.push_back(Json{{"name", c.name}, {"ok", c.ok}, {"detail", c.detail}});
  return Json{{"graph", graph}, {"ok", ok()}, {"checks", cs}};
}

namespace {

template <class F>
CheckResult run_check(std::string name, F&& body) {
  try {
    std::string detail = body();
    return {std::move(name), detail.empty(), detail};
  } catch (const std::exception& e) {
    return {std::move(name), false, e.what()};
  }
}

}  // namespace

ValidationReport validate_graph(const Graph& g, const KernelLibrary* lib) {
  ValidationReport r;
  r.graph = g.name;

  r.checks.push_back(run_check("runnable", [&]() -> std::string {
    Interpreter interp(lib);
    interp.evaluate(g, generate_inputs(g, 0));
    return "";
  }));

  r.checks.push_back(run_check("serializable", [&]() -> std::string {
    const std::string text = serialize_graph(g);
    const Graph back = parse_graph(text);
    if (!(back == g)) return "round-trip changed the graph";
    if (serialize_graph(back) != text) return "round-trip changed the document";
    return "";
  }));

  r.checks.push_back(run_check("decomposable", [&]() -> std::string {
    const std::size_t n = g.nodes.size();
    if (n == 0) return "graph has no operator nodes";
    if (n == 1) return "";
    for (std::size_t p = 1; p < n; ++p) {
      try {
        extract_subgraph(g, 0, p);
        extract_subgraph(g, p, n);
        return "";
      } catch (const Error&) {
      }
    }
    return "no contiguous cut point in canonical order";
  }));

  r.checks.push_back(run_check("statically_analyzable", [&]() -> std::string {
    const auto inferred = infer_graph(g, lib);
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
      if (inferred[i] != g.nodes[i].outputs) return "declared metas of node '" + g.nodes[i].id + "' disagree with inference";
    return "";
  }));

  r.checks.push_back(run_check("custom_operator_accessible", [&]() -> std::string {
    std::string missing;
    for (const auto& n : g.nodes)
      if (is_fused_op(n.op) && (!lib || !lib->contains(n.op))) missing += (missing.empty() ? "" : ", ") + n.op;
    return missing.empty() ? "" : "undeclared fused kernels: " + missing;
  }));
  return r;
}

}  // namespace passkit
