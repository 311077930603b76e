#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "passkit/category.hpp"
#include "passkit/graph.hpp"
#include "passkit/interpreter.hpp"
#include "passkit/kernel_library.hpp"

namespace passkit {

// Input meta of a pattern capture; dims and dtype may be "?" or "?sym".
struct MetaPattern {
  std::vector<Json> dims;
  Json dtype;
};

struct PatternGraph {
  std::vector<MetaPattern> inputs;
  std::vector<OperatorNode> nodes;  // output metas unused
  std::vector<ValueRef> outputs;
};

struct Replacement {
  std::string kernel;             // fused kernel name
  std::vector<int> args;          // kernel argument k <- pattern input args[k]
  std::vector<int> output_wiring; // kernel output k -> pattern output output_wiring[k]
};

struct CompilerPass {
  std::string name;
  PatternGraph pattern;
  Replacement replacement;
  bool exempt = false;
};

struct IntegrityPolicy {
  std::set<std::string> blocklist{"call_external"};
  std::set<std::string> whitelist;  // empty means: the registry primitives
  bool reverse_order = true;

  std::set<std::string> effective_whitelist() const;
};

// Loads one pass or kernel-only document, registering its fused kernel in `lib`.
// Returns nullopt for kernel-only documents.
std::optional<CompilerPass> load_pass(const Json& document, KernelLibrary& lib);
std::optional<CompilerPass> load_pass(std::string_view document, KernelLibrary& lib);

// pass_dir/manifest.json: {"passes": ["file", ...]} in application order.
struct PassSet {
  KernelLibrary library;
  std::vector<CompilerPass> passes;
  std::vector<std::string> kernel_documents;  // names of kernel-only declarations, load order
};
PassSet load_pass_dir(const std::filesystem::path& dir);

struct IntegrityVerdict {
  bool ok = true;
  std::string message;
  std::string offending_op;
};

// Rejects blocklisted ops in the replacement semantics (skipped for exempt passes) and
// replacement semantics structurally identical to the pattern body (delegation).
IntegrityVerdict static_integrity_check(const CompilerPass& pass, const KernelLibrary& lib,
                                        const IntegrityPolicy& policy);
// Blocklist scan of a kernel-only declaration.
IntegrityVerdict static_integrity_check(const FusedKernelDecl& decl, const IntegrityPolicy& policy);

struct Match {
  std::map<std::string, std::string> nodes;  // pattern node id -> host node id
  std::vector<ValueRef> captured;            // per pattern input
  std::vector<ValueRef> outputs;             // per pattern output
  Attrs bindings;                            // "?sym" -> value
};

// Maximal non-overlapping matches, greedy by earliest anchor in canonical order.
std::vector<Match> match_pattern(const Graph& host, const PatternGraph& pattern);

struct RewriteLogEntry {
  std::string pass;
  std::string fused_node;
  std::vector<std::string> replaced;
};

struct RewriteResult {
  Graph graph;
  std::vector<RewriteLogEntry> log;
};

// Replaces every match by one fused-kernel node. Throws RewriteError when the
// result is cyclic, dangles, or changes the graph interface.
RewriteResult apply_pass(const Graph& host, const CompilerPass& pass, const KernelLibrary& lib);

struct ValidityResult {
  bool pass = false;
  double max_abs_diff = 0.0;
  std::optional<ErrorCategory> category;
  std::string message;
};

// Evaluates `rewritten` then `original` (reverse order, fresh poisoned interpreters)
// for every seed and compares at (atol, rtol).
ValidityResult verify_validity(const Graph& original, const Graph& rewritten, const KernelLibrary& lib,
                               const std::vector<uint64_t>& seeds, double atol, double rtol,
                               const IntegrityPolicy& policy = {}, NumericsConfig numerics = {});

// Tolerance pair for an output dtype at sweep point t.
using ToleranceFn = std::function<std::pair<double, double>(DType, int)>;

struct SweepResult {
  std::optional<ErrorCategory> category;  // runtime when execution failed
  std::map<int, bool> correct;            // per t
  double max_abs_diff = 0.0;
  std::string message;
  ExecutionTrace rewritten_trace;  // last seed
};

// Same evaluation protocol, compared once per t in `ts` with per-output-dtype tolerances.
SweepResult verify_sweep(const Graph& original, const Graph& rewritten, const KernelLibrary& lib,
                         const std::vector<uint64_t>& seeds, const std::vector<int>& ts, const ToleranceFn& tol,
                         const IntegrityPolicy& policy = {}, NumericsConfig numerics = {});

}  // namespace passkit
