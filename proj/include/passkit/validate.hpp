#pragma once

#include <string>
#include <vector>

#include "passkit/graph.hpp"
#include "passkit/kernel_library.hpp"

namespace passkit {

struct CheckResult {
  std::string name;
  bool ok = false;
  std::string detail;
};

struct ValidationReport {
  std::string graph;
  std::vector<CheckResult> checks;  // runnable, serializable, decomposable, statically_analyzable, custom_operator_accessible

  bool ok() const;
  const CheckResult& check(std::string_view name) const;
  Json to_json() const;
};

// Runs all five checks; never stops at the first failure.
ValidationReport validate_graph(const Graph& g, const KernelLibrary* lib = nullptr);

}  // namespace passkit
