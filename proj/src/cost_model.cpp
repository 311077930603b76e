#include "passkit/cost_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "passkit/error.hpp"
#include "passkit/registry.hpp"

namespace passkit {

void CostParams::check() const {
  if (!(launch_overhead > 0) || !(mem_bandwidth > 0) || !(compute_rate > 0))
    throw Error("cost parameters must be strictly positive");
}

CostParams cost_params_from_json(const Json& j) {
  CostParams p;
  if (!j.is_object()) throw ParseError("cost parameters must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number()) throw ParseError("cost parameter '" + k + "' must be a number");
    if (k == "launch_overhead") p.launch_overhead = v.get<double>();
    else if (k == "mem_bandwidth") p.mem_bandwidth = v.get<double>();
    else if (k == "compute_rate") p.compute_rate = v.get<double>();
    else throw ParseError("unknown cost parameter '" + k + "'");
  }
  p.check();
  return p;
}

Json cost_params_to_json(const CostParams& p) {
  return Json{{"launch_overhead", p.launch_overhead}, {"mem_bandwidth", p.mem_bandwidth},
              {"compute_rate", p.compute_rate}};
}

std::string_view latency_mode_name(LatencyMode m) {
  switch (m) {
    case LatencyMode::eager: return "eager";
    case LatencyMode::fused: return "fused";
    case LatencyMode::measured: return "measured";
  }
  return "?";
}

Json LatencyReport::to_json() const {
  return Json{{"mode", latency_mode_name(mode)}, {"kernel_count", kernel_count}, {"latency", latency},
              {"per_kernel", per_kernel}, {"valid", valid}};
}

namespace {

double node_flops(const OperatorNode& n, const Graph& g, const KernelLibrary* lib) {
  std::vector<TensorMeta> ins;
  for (const auto& r : n.inputs) ins.push_back(g.meta_of(r));
  if (is_fused_op(n.op)) {
    if (!lib || !lib->contains(n.op)) return 0.0;
    const Graph body = lib->instantiate(n.op, ins, n.attrs);
    double f = 0.0;
    for (const auto& m : body.nodes) f += node_flops(m, body, lib);
    return f;
  }
  const OpInfo& info = PrimitiveRegistry::instance().get(n.op);
  return info.flops ? info.flops(ins, n.outputs, n.attrs) : 0.0;
}

// Fills traffic and flops for groups given as node-id lists.
std::vector<KernelGroup> account(const Graph& g, std::vector<std::vector<std::string>> parts,
                                 const KernelLibrary* lib) {
  std::map<std::string, std::size_t> group_of;
  for (std::size_t k = 0; k < parts.size(); ++k)
    for (const auto& id : parts[k]) group_of[id] = k;
  std::set<ValueRef> graph_outputs(g.outputs.begin(), g.outputs.end());
  std::vector<std::set<ValueRef>> escaping(parts.size());
  for (const auto& n : g.nodes)
    for (const auto& r : n.inputs)
      if (!r.is_input() && group_of.at(r.node) != group_of.at(n.id)) escaping[group_of.at(r.node)].insert(r);

  std::vector<KernelGroup> out;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    KernelGroup grp;
    grp.node_ids = parts[k];
    std::set<ValueRef> reads;
    for (const auto& id : parts[k]) {
      const OperatorNode& n = g.node(id);
      for (const auto& r : n.inputs)
        if (r.is_input() || group_of.at(r.node) != k) reads.insert(r);
      for (std::size_t o = 0; o < n.outputs.size(); ++o) {
        ValueRef v = ValueRef::of_node(id, static_cast<int>(o));
        if (graph_outputs.count(v) || escaping[k].count(v)) grp.bytes_out += static_cast<double>(n.outputs[o].bytes());
      }
      grp.flops += node_flops(n, g, lib);
    }
    for (const auto& r : reads) grp.bytes_in += static_cast<double>(g.meta_of(r).bytes());
    out.push_back(std::move(grp));
  }
  return out;
}

std::vector<std::vector<std::string>> greedy_parts(const Graph& g, std::size_t limit) {
  const auto& reg = PrimitiveRegistry::instance();
  const auto order = topological_order(g);
  std::vector<std::vector<std::string>> parts;
  std::set<std::string> current;
  bool current_closed = true;
  int reductions = 0;
  for (std::size_t i = 0; i < std::min(limit, order.size()); ++i) {
    const OperatorNode& n = g.node(order[i]);
    const bool fused = is_fused_op(n.op);
    const FusionClass cls = fused ? FusionClass::opaque : reg.get(n.op).cls;
    bool joins = !current_closed && cls != FusionClass::opaque;
    if (joins) {
      joins = std::any_of(n.inputs.begin(), n.inputs.end(),
                          [&](const ValueRef& r) { return !r.is_input() && current.count(r.node); });
    }
    if (joins && cls == FusionClass::reduction && reductions >= 1) joins = false;
    if (!joins) {
      parts.emplace_back();
      current.clear();
      reductions = 0;
    }
    parts.back().push_back(n.id);
    current.insert(n.id);
    if (cls == FusionClass::reduction) ++reductions;
    current_closed = cls == FusionClass::opaque;
  }
  return parts;
}

}  // namespace

std::vector<KernelGroup> fuse_groups(const Graph& g, const KernelLibrary* lib) {
  return account(g, greedy_parts(g, g.nodes.size()), lib);
}

std::vector<KernelGroup> eager_groups(const Graph& g, const KernelLibrary* lib) {
  std::vector<std::vector<std::string>> parts;
  for (const auto& id : topological_order(g)) parts.push_back({id});
  return account(g, parts, lib);
}

double kernel_cost(const KernelGroup& k, const CostParams& p) {
  return p.launch_overhead + std::max((k.bytes_in + k.bytes_out) / p.mem_bandwidth, k.flops / p.compute_rate);
}

LatencyReport graph_latency(const Graph& g, LatencyMode mode, const CostParams& p, const KernelLibrary* lib) {
  p.check();
  if (mode == LatencyMode::measured) throw Error("graph_latency: measured mode needs measure_wallclock");
  const auto groups = mode == LatencyMode::eager ? eager_groups(g, lib) : fuse_groups(g, lib);
  LatencyReport r;
  r.mode = mode;
  r.kernel_count = static_cast<int>(groups.size());
  for (const auto& k : groups) {
    r.per_kernel.push_back(kernel_cost(k, p));
    r.latency += r.per_kernel.back();
  }
  return r;
}

std::vector<std::pair<int, int>> prefix_kernel_curve(const Graph& g) {
  std::vector<std::pair<int, int>> curve;
  for (std::size_t p = 1; p <= g.nodes.size(); ++p)
    curve.emplace_back(static_cast<int>(p), static_cast<int>(greedy_parts(g, p).size()));
  return curve;
}

double speedup(const LatencyReport& baseline, const LatencyReport& optimized) {
  if (!(baseline.latency > 0) || !(optimized.latency > 0)) throw Error("speedup needs positive latencies");
  return baseline.latency / optimized.latency;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw Error("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

WallclockStats measure(const std::function<double()>& run_once, const MeasureProtocol& protocol) {
  WallclockStats s;
  for (int attempt = 0; attempt <= protocol.max_reruns; ++attempt) {
    for (int i = 0; i < protocol.warmup; ++i) run_once();
    std::vector<double> t;
    t.reserve(protocol.trials);
    for (int i = 0; i < protocol.trials; ++i) t.push_back(run_once());
    s.attempts = attempt + 1;
    s.median = quantile(t, 0.5);
    s.iqr = quantile(t, 0.75) - quantile(t, 0.25);
    s.valid = s.median > 0 ? s.iqr / s.median <= protocol.max_iqr_ratio : s.iqr == 0;
    if (s.valid) break;
  }
  return s;
}

LatencyReport measure_wallclock(const Graph& g, const std::vector<TensorValue>& inputs, const KernelLibrary* lib,
                                const MeasureProtocol& protocol) {
  Interpreter interp(lib);
  const auto stats = measure(
      [&] {
        const auto t0 = std::chrono::steady_clock::now();
        interp.evaluate(g, inputs);
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      },
      protocol);
  LatencyReport r;
  r.mode = LatencyMode::measured;
  r.kernel_count = static_cast<int>(g.nodes.size());
  r.latency = stats.median;
  r.per_kernel = {stats.median};
  r.valid = stats.valid;
  return r;
}

}  // namespace passkit
