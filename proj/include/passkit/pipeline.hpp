#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "passkit/bench.hpp"
#include "passkit/cost_model.hpp"
#include "passkit/mining.hpp"
#include "passkit/scoring.hpp"

namespace passkit {

struct RunConfig {
  CostParams cost;
  MetricParams metric;
  uint64_t seed = 0;
  int workers = 1;
  bool wallclock = false;

  Json to_json() const;
};

// Overrides from a JSON config file: {"cost": {...}, "metric": {...}, "seed": n, "workers": n}.
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

std::vector<Graph> load_graph_files(const std::vector<std::filesystem::path>& paths);
// Every *.json graph under `dir`, sorted by path.
std::vector<Graph> load_graph_dir(const std::filesystem::path& dir);

enum class MineStrategy { classical, fusible, single };
std::optional<MineStrategy> mine_strategy_from_name(std::string_view s);

struct MineOptions {
  MineStrategy strategy = MineStrategy::fusible;
  bool generalize = true;
  FoldOptions fold;
  NodeBounds bounds;
};

std::vector<MinedSample> mine_corpus(const std::vector<Graph>& corpus, const MineOptions& options);
// out/NNNNN/graph.json + provenance.json per sample.
void write_samples(const std::vector<MinedSample>& samples, const std::filesystem::path& out);
std::vector<Graph> read_samples(const std::filesystem::path& dir);

struct BenchOptions {
  std::size_t n = 200;
  int stride = 3;
  uint64_t seed = 0;
  TaskRuntime runtime;
};

// Packages out/eval/<id>/ and out/train/<id>/, plus out/split.json.
EvalSplit bench_samples(const std::vector<Graph>& samples, const BenchOptions& options,
                        const std::filesystem::path& out);

// Per subgraph: static integrity check, apply passes, reverse-order verification over the
// t <= 0 sweep and all seeds, cost-model speedup. Failures become categorized records.
std::vector<EvalRecord> eval_task(const std::filesystem::path& task_dir, const RunConfig& config,
                                  const std::optional<std::filesystem::path>& pass_dir = std::nullopt);

Json records_to_json(const std::vector<EvalRecord>& records);
std::vector<EvalRecord> records_from_json(const Json& j);

std::string read_text(const std::filesystem::path& p);
void write_text(const std::filesystem::path& p, std::string_view text);

}  // namespace passkit
