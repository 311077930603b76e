#include "passkit/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "passkit/error.hpp"
#include "passkit/pass.hpp"
#include "passkit/registry.hpp"

namespace passkit {

namespace fs = std::filesystem;

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParseError("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, std::string_view text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << text;
}

Json RunConfig::to_json() const {
  return Json{{"cost", cost_params_to_json(cost)},
              {"metric", metric_params_to_json(metric)},
              {"seed", seed},
              {"workers", workers},
              {"wallclock", wallclock}};
}

RunConfig load_run_config(const fs::path& path, RunConfig base) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed config '" + path.string() + "': " + e.what());
  }
  if (!j.is_object()) throw ParseError("config must be an object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "cost") {
        Json merged = cost_params_to_json(base.cost);
        merged.update(v);
        base.cost = cost_params_from_json(merged);
      } else if (k == "metric") {
        Json merged = metric_params_to_json(base.metric);
        merged.update(v);
        base.metric = metric_params_from_json(merged);
      } else if (k == "seed") {
        base.seed = v.get<uint64_t>();
      } else if (k == "workers") {
        base.workers = v.get<int>();
      } else if (k == "wallclock") {
        base.wallclock = v.get<bool>();
      } else {
        throw ParseError("unknown config key '" + k + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }
  if (base.workers < 1) throw ParseError("workers must be >= 1");
  return base;
}

std::vector<Graph> load_graph_files(const std::vector<fs::path>& paths) {
  std::vector<Graph> out;
  for (const auto& p : paths) {
    try {
      out.push_back(parse_graph(read_text(p)));
    } catch (const Error& e) {
      throw ParseError(p.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<Graph> load_graph_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ParseError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> paths;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  return load_graph_files(paths);
}

std::optional<MineStrategy> mine_strategy_from_name(std::string_view s) {
  if (s == "classical") return MineStrategy::classical;
  if (s == "fusible") return MineStrategy::fusible;
  if (s == "single") return MineStrategy::single;
  return std::nullopt;
}

std::vector<MinedSample> mine_corpus(const std::vector<Graph>& corpus, const MineOptions& options) {
  if (corpus.empty()) throw Error("empty corpus");
  std::vector<MinedSample> raw;
  switch (options.strategy) {
    case MineStrategy::classical: {
      std::vector<OpSequence> seqs;
      for (const auto& g : corpus) seqs.push_back(op_sequence(g));
      const auto folded = recursive_fold(seqs, options.fold);
      raw = motifs_to_subgraphs(folded.table, corpus, options.bounds);
      break;
    }
    case MineStrategy::fusible:
      for (const auto& g : corpus)
        for (auto& s : mine_fusible(g))
          if (s.graph.nodes.size() >= options.bounds.min_ops && s.graph.nodes.size() <= options.bounds.max_ops)
            raw.push_back(std::move(s));
      break;
    case MineStrategy::single:
      for (const auto& g : corpus)
        for (auto& s : extract_single_ops(g)) raw.push_back(std::move(s));
      break;
  }

  std::vector<MinedSample> out;
  std::set<std::string> seen;
  for (auto& s : raw) {
    if (!options.generalize) {
      if (seen.insert(graph_hash(s.graph)).second) out.push_back(std::move(s));
      continue;
    }
    std::vector<std::string> dropped;
    for (auto& v : generalize_instances(s.graph, &dropped)) {
      if (!seen.insert(graph_hash(v)).second) continue;
      Json prov = s.provenance;
      prov["variant"] = v.name;
      out.push_back({std::move(v), std::move(prov)});
    }
  }
  return out;
}

namespace {

std::string padded(std::size_t i, int width) {
  std::string s = std::to_string(i);
  return std::string(s.size() < static_cast<std::size_t>(width) ? width - s.size() : 0, '0') + s;
}

void require_empty(const fs::path& out) {
  if (fs::exists(out) && !fs::is_empty(out))
    throw Error("output directory '" + out.string() + "' is not empty");
  fs::create_directories(out);
}

}  // namespace

void write_samples(const std::vector<MinedSample>& samples, const fs::path& out) {
  require_empty(out);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const fs::path d = out / padded(i, 5);
    write_text(d / "graph.json", serialize_graph(samples[i].graph));
    write_text(d / "provenance.json", samples[i].provenance.dump(2) + "\n");
  }
}

std::vector<Graph> read_samples(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ParseError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "graph.json")) paths.push_back(e.path() / "graph.json");
  std::sort(paths.begin(), paths.end());
  return load_graph_files(paths);
}

EvalSplit bench_samples(const std::vector<Graph>& samples, const BenchOptions& options, const fs::path& out) {
  if (samples.empty()) throw Error("no samples to package");
  require_empty(out);
  const auto tasks = build_tasks(samples, options.stride);
  EvalSplit split = select_evaluation_set(tasks, options.n, options.seed);
  Json eval_ids = Json::array(), train_ids = Json::array();
  for (const auto& t : split.eval) {
    package_task(t, options.runtime, out / "eval" / t.id);
    eval_ids.push_back(t.id);
  }
  for (const auto& t : split.train) {
    package_task(t, options.runtime, out / "train" / t.id);
    train_ids.push_back(t.id);
  }
  write_text(out / "split.json",
             Json{{"eval", eval_ids}, {"train", train_ids}, {"warnings", split.warnings}}.dump(2) + "\n");
  return split;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

EvalRecord base_record(const LoadedTask& lt, std::size_t i) {
  EvalRecord r;
  r.task = lt.task.id;
  r.id = lt.task.id + "/" + padded(i, 3);
  const Graph& g = lt.task.subgraphs[i];
  const auto outs = g.output_metas();
  r.dtype = outs.empty() ? DType::fp32 : outs.front().dtype;
  for (const auto& m : g.inputs)
    if (is_floating(m.dtype)) {
      r.dtype = m.dtype;
      break;
    }
  r.kernels_before = static_cast<int>(g.nodes.size());
  return r;
}

std::vector<EvalRecord> all_failed(const LoadedTask& lt, ErrorCategory c, const std::string& message) {
  std::vector<EvalRecord> out;
  for (std::size_t i = 0; i < lt.task.subgraphs.size(); ++i) {
    EvalRecord r = base_record(lt, i);
    r.category = c;
    r.message = message;
    for (int t = lt.runtime.t_min; t <= lt.runtime.t_max; ++t) r.correct[t] = false;
    out.push_back(std::move(r));
  }
  return out;
}

EvalRecord eval_member(const LoadedTask& lt, std::size_t i, const PassSet& passes, const IntegrityPolicy& policy,
                       const RunConfig& config) {
  EvalRecord r = base_record(lt, i);
  const Graph& original = lt.task.subgraphs[i];
  auto fail = [&](ErrorCategory c, std::string msg) {
    r.category = c;
    r.message = std::move(msg);
    r.speedup.reset();
    for (int t = lt.runtime.t_min; t <= lt.runtime.t_max; ++t) r.correct[t] = false;
    return r;
  };
  try {
    Graph rewritten = original;
    std::size_t applied = 0;
    for (const auto& p : passes.passes) {
      try {
        auto res = apply_pass(rewritten, p, passes.library);
        applied += res.log.size();
        rewritten = std::move(res.graph);
      } catch (const Error& e) {
        return fail(ErrorCategory::compilation, std::string("CompilationError: ") + e.what());
      }
    }
    if (applied == 0) return fail(ErrorCategory::compilation, "CompilationError: no pass matched the subgraph");

    std::vector<int> ts;
    for (int t = lt.runtime.t_min; t <= lt.runtime.t_max; ++t) ts.push_back(t);
    const auto sweep = verify_sweep(original, rewritten, passes.library, lt.runtime.seeds, ts, tolerance_at, policy);
    r.max_abs_diff = sweep.max_abs_diff;
    if (sweep.category) return fail(*sweep.category, "RuntimeError: " + sweep.message);

    const auto base = graph_latency(original, LatencyMode::eager, lt.runtime.cost, &passes.library);
    const auto opt = graph_latency(rewritten, LatencyMode::eager, lt.runtime.cost, &passes.library);
    r.kernels_before = base.kernel_count;
    r.kernels_after = opt.kernel_count;
    r.speedup = speedup(base, opt);
    if (config.wallclock) {
      const auto inputs = generate_inputs(original, lt.runtime.seeds.front());
      const auto wb = measure_wallclock(original, inputs, &passes.library);
      const auto wo = measure_wallclock(rewritten, inputs, &passes.library);
      if (wb.valid && wo.valid && wb.latency > 0 && wo.latency > 0) r.speedup = wb.latency / wo.latency;
      else r.excluded = true;
    }
    r.correct = sweep.correct;
    const bool all_ok = std::all_of(r.correct.begin(), r.correct.end(), [](const auto& e) { return e.second; });
    r.category = all_ok ? ErrorCategory::none : ErrorCategory::accuracy;
    if (!all_ok) r.message = "AccuracyError: " + sweep.message;
  } catch (const std::exception& e) {
    return fail(ErrorCategory::runtime, std::string("RuntimeError: ") + e.what());
  }
  return r;
}

}  // namespace

std::vector<EvalRecord> eval_task(const fs::path& task_dir, const RunConfig& config,
                                  const std::optional<fs::path>& pass_dir) {
  const LoadedTask lt = load_task(task_dir);
  const fs::path pdir = pass_dir ? *pass_dir : task_dir / "pass_dir";
  if (!fs::exists(pdir / "manifest.json"))
    return all_failed(lt, ErrorCategory::compilation, "CompilationError: no pass manifest in '" + pdir.string() + "'");
  PassSet passes;
  try {
    passes = load_pass_dir(pdir);
  } catch (const Error& e) {
    return all_failed(lt, ErrorCategory::compilation, std::string("CompilationError: ") + e.what());
  }
  if (passes.passes.empty()) return all_failed(lt, ErrorCategory::compilation, "CompilationError: manifest lists no passes");

  IntegrityPolicy policy;
  policy.whitelist = PrimitiveRegistry::instance().primitive_names();
  for (const auto& op : lt.runtime.whitelist_exclude) policy.whitelist.erase(op);
  for (const auto& name : passes.kernel_documents) {
    const auto v = static_integrity_check(*passes.library.find(name), policy);
    if (!v.ok) return all_failed(lt, ErrorCategory::compilation, v.message);
  }
  for (const auto& p : passes.passes) {
    const auto v = static_integrity_check(p, passes.library, policy);
    if (!v.ok) return all_failed(lt, ErrorCategory::compilation, v.message);
  }

  const auto n = static_cast<int64_t>(lt.task.subgraphs.size());
  std::vector<EvalRecord> out(lt.task.subgraphs.size());
#pragma omp parallel for num_threads(std::max(1, config.workers)) schedule(dynamic)
  for (int64_t i = 0; i < n; ++i) out[i] = eval_member(lt, static_cast<std::size_t>(i), passes, policy, config);
  std::sort(out.begin(), out.end(), [](const EvalRecord& a, const EvalRecord& b) { return a.id < b.id; });
  return out;
}

Json records_to_json(const std::vector<EvalRecord>& records) {
  Json arr = Json::array();
  for (const auto& r : records) arr.push_back(r.to_json());
  return Json{{"records", arr}};
}

std::vector<EvalRecord> records_from_json(const Json& j) {
  const Json& arr = j.is_object() && j.contains("records") ? j.at("records") : j;
  if (!arr.is_array()) throw ParseError("records document must be a list or {\"records\": [...]}");
  std::vector<EvalRecord> out;
  for (const auto& r : arr) out.push_back(EvalRecord::from_json(r));
  return out;
}

}  // namespace passkit
