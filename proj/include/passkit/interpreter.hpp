#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "passkit/graph.hpp"
#include "passkit/kernel_library.hpp"
#include "passkit/kernels.hpp"

namespace passkit {

struct TensorValue {
  TensorMeta meta;
  std::vector<double> data;  // row-major binary64

  friend bool operator==(const TensorValue&, const TensorValue&) = default;
};

struct NumericsConfig {
  // Fresh buffers are filled with NaN before any kernel writes them.
  bool poison_fill = true;
  kernels::Backend backend = kernels::Backend::parallel;
};

struct TraceEntry {
  std::string node;
  std::string op;
  std::string kernel;  // enclosing fused kernel, empty at top level
  int depth = 0;       // fused nesting depth
  bool fused_call = false;
};

struct GuardEvent {
  std::string op;
  std::string kernel;
  bool allowed = true;
};

struct ExecutionTrace {
  std::vector<TraceEntry> entries;
  std::vector<GuardEvent> guard_events;
  std::vector<int> poisoned_outputs;  // output positions holding NaN
};

// Runtime whitelist guard on the mandatory per-op dispatch path. Every primitive
// dispatched inside fused-kernel semantics is checked; a miss aborts evaluation.
class DispatchGuard {
 public:
  explicit DispatchGuard(std::set<std::string> whitelist) : whitelist_(std::move(whitelist)) {}
  // Registry primitives.
  static DispatchGuard default_policy();

  const std::set<std::string>& whitelist() const { return whitelist_; }
  // Records the event; throws WhitelistViolation when `op` is not whitelisted.
  void on_dispatch(const std::string& op, const std::string& kernel, ExecutionTrace& trace) const;

 private:
  std::set<std::string> whitelist_;
};

struct EvalResult {
  std::vector<TensorValue> outputs;
  ExecutionTrace trace;
};

// Deterministic reference executor. An instance owns a buffer pool that recycles
// released buffers across evaluations; use a fresh instance for a pristine state.
class Interpreter {
 public:
  explicit Interpreter(const KernelLibrary* library = nullptr, NumericsConfig config = {},
                       const DispatchGuard* guard = nullptr);

  EvalResult evaluate(const Graph& g, const std::vector<TensorValue>& inputs);
  // Every node output keyed by its ValueRef, plus graph inputs.
  std::map<ValueRef, TensorValue> evaluate_all(const Graph& g, const std::vector<TensorValue>& inputs);

  const NumericsConfig& config() const { return config_; }

 private:
  struct Frame;
  std::vector<double> allocate(int64_t n);
  void release(std::vector<double>&& buf);
  std::vector<TensorValue> run_graph(const Graph& g, const std::vector<TensorValue>& inputs, int depth,
                                     const std::string& kernel, ExecutionTrace& trace,
                                     std::map<ValueRef, TensorValue>* keep);
  std::vector<TensorValue> run_primitive(const OperatorNode& node, const std::vector<const TensorValue*>& ins);

  const KernelLibrary* library_;
  NumericsConfig config_;
  const DispatchGuard* guard_;
  // Released buffers, newest last; allocation takes the newest of matching size.
  std::vector<std::vector<double>> pool_;
};

// One tensor per graph input, deterministic in (graph hash, seed). Floats are
// uniform in [-1, 1], int64 uniform in [-4, 4], bool in {0, 1}; all quantized.
std::vector<TensorValue> generate_inputs(const Graph& g, uint64_t seed);

struct CompareResult {
  bool pass = false;
  double max_abs_diff = 0.0;
};

// Elementwise |a - b| <= atol + rtol * |b| with `b` as reference; finiteness
// patterns must agree. Shape/dtype mismatch fails with max_abs_diff = +inf.
CompareResult compare_outputs(const std::vector<TensorValue>& a, const std::vector<TensorValue>& b, double atol,
                              double rtol);
CompareResult compare_tensor(const TensorValue& a, const TensorValue& b, double atol, double rtol);

}  // namespace passkit
