#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "passkit/graph.hpp"
#include "passkit/interpreter.hpp"
#include "passkit/kernel_library.hpp"

namespace passkit {

struct CostParams {
  double launch_overhead = 5e-6;  // seconds per kernel
  double mem_bandwidth = 6.0e11;  // bytes / second
  double compute_rate = 1.0e13;   // flop / second

  // Throws Error unless every field is strictly positive.
  void check() const;
  friend bool operator==(const CostParams&, const CostParams&) = default;
};

CostParams cost_params_from_json(const Json& j);
Json cost_params_to_json(const CostParams& p);

struct KernelGroup {
  std::vector<std::string> node_ids;  // contiguous in canonical order
  double bytes_in = 0.0;
  double bytes_out = 0.0;
  double flops = 0.0;
};

enum class LatencyMode { eager, fused, measured };
std::string_view latency_mode_name(LatencyMode m);

struct LatencyReport {
  LatencyMode mode = LatencyMode::eager;
  int kernel_count = 0;
  double latency = 0.0;
  std::vector<double> per_kernel;
  bool valid = true;  // false for unstable wall-clock samples

  Json to_json() const;
};

// Greedy grouping over the canonical order: a node joins the previous group iff it
// consumes an output produced in that group, it is not opaque, and the group keeps
// at most one reduction. Opaque nodes (and fused kernels) are singleton groups.
std::vector<KernelGroup> fuse_groups(const Graph& g, const KernelLibrary* lib = nullptr);
// One group per node.
std::vector<KernelGroup> eager_groups(const Graph& g, const KernelLibrary* lib = nullptr);

double kernel_cost(const KernelGroup& k, const CostParams& p);

LatencyReport graph_latency(const Graph& g, LatencyMode mode, const CostParams& p,
                            const KernelLibrary* lib = nullptr);

// (P, K(P)) for P = 1..|V|: fused kernel count of the first P canonical nodes.
std::vector<std::pair<int, int>> prefix_kernel_curve(const Graph& g);

double speedup(const LatencyReport& baseline, const LatencyReport& optimized);

// Wall-clock protocol: warmup runs, timed trials, median; re-run once when
// IQR/median exceeds the threshold, then mark the sample invalid.
struct MeasureProtocol {
  int warmup = 20;
  int trials = 100;
  double max_iqr_ratio = 0.20;
  int max_reruns = 1;
};

struct WallclockStats {
  double median = 0.0;
  double iqr = 0.0;
  int attempts = 0;
  bool valid = false;
};

// `run_once` performs one execution and returns its duration in seconds.
WallclockStats measure(const std::function<double()>& run_once, const MeasureProtocol& protocol = {});
// Times interpreter evaluation of `g` on `inputs` with a steady clock.
LatencyReport measure_wallclock(const Graph& g, const std::vector<TensorValue>& inputs, const KernelLibrary* lib,
                                const MeasureProtocol& protocol = {});

// Linear-interpolated quantile of an unsorted sample, q in [0, 1].
double quantile(std::vector<double> v, double q);

}  // namespace passkit
