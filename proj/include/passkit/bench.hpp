#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "passkit/cost_model.hpp"
#include "passkit/graph.hpp"
#include "passkit/mining.hpp"

namespace passkit {

// floor(log2(d) / 4), d >= 1.
int quantize_dim(int64_t d);

struct BucketKey {
  OpSequence op_sequence;
  std::vector<std::vector<int>> shape_key;  // per input, per dim
  std::vector<DType> dtype_key;

  friend auto operator<=>(const BucketKey&, const BucketKey&) = default;
  friend bool operator==(const BucketKey&, const BucketKey&) = default;
};

BucketKey bucket_key(const Graph& g);

// Exact partition; members ordered by graph hash.
using Buckets = std::map<BucketKey, std::vector<Graph>>;
Buckets bucket_subgraphs(const std::vector<Graph>& samples);

// Indices {0, stride, 2*stride, ...} of a bucket of `size`, chunked into triples
// then singletons for the remainder.
std::vector<std::vector<std::size_t>> stratified_sample(std::size_t size, int stride);

struct TaskInstance {
  std::string id;
  std::vector<Graph> subgraphs;
  Json provenance;
  std::vector<DType> dtypes;

  OpSequence op_sequence() const;
  friend bool operator==(const TaskInstance&, const TaskInstance&) = default;
};

// One task per stratified group of each bucket.
std::vector<TaskInstance> stratified_tasks(const Buckets& buckets, int stride);
// Per (op sequence, dtype key): one representative per shape bucket.
std::vector<TaskInstance> aggregate_cross_shape(const Buckets& buckets);
// Per (op sequence, shape bucket): one representative per dtype.
std::vector<TaskInstance> aggregate_dtypes(const Buckets& buckets);

// All three generators, dedup by member-hash set.
std::vector<TaskInstance> build_tasks(const std::vector<Graph>& samples, int stride);

std::size_t edit_distance(const OpSequence& a, const OpSequence& b);

struct EvalSplit {
  std::vector<TaskInstance> eval;
  std::vector<TaskInstance> train;
  std::vector<std::string> warnings;
};

// Farthest-first over op-sequence edit distance from a seeded start; per selected
// sequence the largest task is kept. Train excludes any task sharing a member hash.
EvalSplit select_evaluation_set(const std::vector<TaskInstance>& tasks, std::size_t n, uint64_t seed);

struct TaskRuntime {
  std::vector<uint64_t> seeds{0, 1, 2};
  int t_min = -10;
  int t_max = 0;
  CostParams cost;
  std::vector<std::string> whitelist_exclude;  // primitives removed from the runtime whitelist

  Json to_json() const;
  static TaskRuntime from_json(const Json& j);
  friend bool operator==(const TaskRuntime&, const TaskRuntime&) = default;
};

// task.json, graphs/NNN.json, inputs/NNN.json, pass_dir/, provenance.json.
void package_task(const TaskInstance& t, const TaskRuntime& runtime, const std::filesystem::path& dir);

struct LoadedTask {
  TaskInstance task;
  TaskRuntime runtime;
};
// Throws ParseError on missing or corrupt files.
LoadedTask load_task(const std::filesystem::path& dir);

}  // namespace passkit
