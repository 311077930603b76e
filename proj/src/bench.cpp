#include "passkit/bench.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <set>
#include <sstream>

#include "passkit/error.hpp"
#include "passkit/sha256.hpp"

namespace passkit {

int quantize_dim(int64_t d) {
  if (d < 1) throw Error("quantize_dim: dims must be >= 1");
  const int floor_log2 = 63 - std::countl_zero(static_cast<uint64_t>(d));
  return floor_log2 / 4;
}

BucketKey bucket_key(const Graph& g) {
  BucketKey k;
  k.op_sequence = op_sequence(g);
  for (const auto& m : g.inputs) {
    std::vector<int> dims;
    for (int64_t d : m.shape) dims.push_back(quantize_dim(d));
    k.shape_key.push_back(std::move(dims));
    k.dtype_key.push_back(m.dtype);
  }
  return k;
}

Buckets bucket_subgraphs(const std::vector<Graph>& samples) {
  Buckets b;
  for (const auto& g : samples) b[bucket_key(g)].push_back(g);
  for (auto& [k, members] : b)
    std::stable_sort(members.begin(), members.end(),
                     [](const Graph& x, const Graph& y) { return graph_hash(x) < graph_hash(y); });
  return b;
}

std::vector<std::vector<std::size_t>> stratified_sample(std::size_t size, int stride) {
  if (stride < 1) throw Error("stratified_sample: stride must be >= 1");
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < size; i += static_cast<std::size_t>(stride)) picked.push_back(i);
  std::vector<std::vector<std::size_t>> groups;
  std::size_t i = 0;
  for (; i + 3 <= picked.size(); i += 3) groups.push_back({picked[i], picked[i + 1], picked[i + 2]});
  for (; i < picked.size(); ++i) groups.push_back({picked[i]});
  return groups;
}

OpSequence TaskInstance::op_sequence() const {
  if (subgraphs.empty()) return {};
  return passkit::op_sequence(subgraphs.front());
}

namespace {

TaskInstance make_task(const std::string& strategy, std::vector<Graph> members, Json provenance) {
  TaskInstance t;
  std::string key = strategy;
  std::set<DType> dtypes;
  Json hashes = Json::array();
  for (const auto& g : members) {
    const std::string h = graph_hash(g);
    key += ":" + h;
    hashes.push_back(h);
    for (const auto& m : g.inputs) dtypes.insert(m.dtype);
  }
  t.id = "task_" + sha256_hex(key).substr(0, 12);
  t.subgraphs = std::move(members);
  t.dtypes.assign(dtypes.begin(), dtypes.end());
  provenance["strategy"] = strategy;
  provenance["member_hashes"] = hashes;
  t.provenance = std::move(provenance);
  return t;
}

Json shape_key_json(const BucketKey& k) { return Json(k.shape_key); }

Json dtype_key_json(const BucketKey& k) {
  Json j = Json::array();
  for (DType d : k.dtype_key) j.push_back(dtype_name(d));
  return j;
}

}  // namespace

std::vector<TaskInstance> stratified_tasks(const Buckets& buckets, int stride) {
  std::vector<TaskInstance> out;
  for (const auto& [key, members] : buckets) {
    for (const auto& grp : stratified_sample(members.size(), stride)) {
      std::vector<Graph> picked;
      for (std::size_t i : grp) picked.push_back(members[i]);
      out.push_back(make_task("stratified", std::move(picked),
                              Json{{"shape_key", shape_key_json(key)}, {"dtype_key", dtype_key_json(key)}}));
    }
  }
  return out;
}

std::vector<TaskInstance> aggregate_cross_shape(const Buckets& buckets) {
  std::map<std::pair<OpSequence, std::vector<DType>>, std::vector<Graph>> groups;
  for (const auto& [key, members] : buckets) groups[{key.op_sequence, key.dtype_key}].push_back(members.front());
  std::vector<TaskInstance> out;
  for (auto& [k, members] : groups) {
    Json dk = Json::array();
    for (DType d : k.second) dk.push_back(dtype_name(d));
    out.push_back(make_task("cross_shape", std::move(members), Json{{"dtype_key", dk}}));
  }
  return out;
}

std::vector<TaskInstance> aggregate_dtypes(const Buckets& buckets) {
  std::map<std::pair<OpSequence, std::vector<std::vector<int>>>, std::vector<Graph>> groups;
  for (const auto& [key, members] : buckets) groups[{key.op_sequence, key.shape_key}].push_back(members.front());
  std::vector<TaskInstance> out;
  for (auto& [k, members] : groups)
    out.push_back(make_task("dtype", std::move(members), Json{{"shape_key", Json(k.second)}}));
  return out;
}

std::vector<TaskInstance> build_tasks(const std::vector<Graph>& samples, int stride) {
  const Buckets b = bucket_subgraphs(samples);
  std::vector<TaskInstance> out;
  std::set<std::set<std::string>> seen;
  for (auto&& list : {stratified_tasks(b, stride), aggregate_cross_shape(b), aggregate_dtypes(b)}) {
    for (const auto& t : list) {
      std::set<std::string> hashes;
      for (const auto& g : t.subgraphs) hashes.insert(graph_hash(g));
      if (seen.insert(hashes).second) out.push_back(t);
    }
  }
  return out;
}

std::size_t edit_distance(const OpSequence& a, const OpSequence& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

EvalSplit select_evaluation_set(const std::vector<TaskInstance>& tasks, std::size_t n, uint64_t seed) {
  EvalSplit split;
  // Largest task per sequence; ties by id.
  std::map<OpSequence, std::size_t> best;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto seq = tasks[i].op_sequence();
    auto it = best.find(seq);
    if (it == best.end()) {
      best.emplace(seq, i);
      continue;
    }
    const auto& cur = tasks[it->second];
    if (tasks[i].subgraphs.size() > cur.subgraphs.size() ||
        (tasks[i].subgraphs.size() == cur.subgraphs.size() && tasks[i].id < cur.id))
      it->second = i;
  }
  std::vector<OpSequence> seqs;
  std::vector<std::size_t> reps;
  for (const auto& [s, i] : best) {
    seqs.push_back(s);
    reps.push_back(i);
  }
  if (seqs.size() < n)
    split.warnings.push_back("only " + std::to_string(seqs.size()) + " distinct operator sequences, fewer than " +
                             std::to_string(n) + "; selecting all");

  std::vector<std::size_t> chosen;
  const std::size_t want = std::min(n, seqs.size());
  if (want > 0) {
    std::vector<std::size_t> min_dist(seqs.size(), static_cast<std::size_t>(-1));
    std::vector<bool> used(seqs.size(), false);
    std::size_t next = static_cast<std::size_t>(seed % seqs.size());
    while (chosen.size() < want) {
      chosen.push_back(next);
      used[next] = true;
      std::size_t far = seqs.size();
      for (std::size_t j = 0; j < seqs.size(); ++j) {
        if (used[j]) continue;
        min_dist[j] = std::min(min_dist[j], edit_distance(seqs[next], seqs[j]));
        if (far == seqs.size() || min_dist[j] > min_dist[far]) far = j;
      }
      if (far == seqs.size()) break;
      next = far;
    }
  }
  std::set<std::string> eval_hashes;
  std::set<std::size_t> eval_idx;
  for (std::size_t c : chosen) {
    const auto& t = tasks[reps[c]];
    split.eval.push_back(t);
    eval_idx.insert(reps[c]);
    for (const auto& g : t.subgraphs) eval_hashes.insert(graph_hash(g));
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (eval_idx.count(i)) continue;
    const bool overlaps = std::any_of(tasks[i].subgraphs.begin(), tasks[i].subgraphs.end(),
                                      [&](const Graph& g) { return eval_hashes.count(graph_hash(g)) > 0; });
    if (!overlaps) split.train.push_back(tasks[i]);
  }
  return split;
}

// ---------------------------------------------------------------------------
// Packaging

Json TaskRuntime::to_json() const {
  return Json{{"seeds", seeds},
              {"t_min", t_min},
              {"t_max", t_max},
              {"cost", cost_params_to_json(cost)},
              {"whitelist_exclude", whitelist_exclude}};
}

TaskRuntime TaskRuntime::from_json(const Json& j) {
  TaskRuntime r;
  try {
    r.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    r.t_min = j.at("t_min").get<int>();
    r.t_max = j.at("t_max").get<int>();
    r.cost = cost_params_from_json(j.at("cost"));
    r.whitelist_exclude = j.value("whitelist_exclude", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("task runtime metadata: ") + e.what());
  }
  if (r.seeds.empty() || r.t_min > r.t_max) throw ParseError("task runtime metadata is inconsistent");
  return r;
}

namespace {

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << text;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParseError("missing task file '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json(const std::filesystem::path& p) {
  try {
    return Json::parse(read_file(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("corrupt task file '" + p.string() + "': " + e.what());
  }
}

std::string member_name(std::size_t i) {
  std::string s = std::to_string(i);
  return std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s + ".json";
}

}  // namespace

void package_task(const TaskInstance& t, const TaskRuntime& runtime, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "graphs");
  fs::create_directories(dir / "inputs");
  fs::create_directories(dir / "pass_dir");
  Json members = Json::array();
  for (std::size_t i = 0; i < t.subgraphs.size(); ++i) {
    const Graph& g = t.subgraphs[i];
    const std::string name = member_name(i);
    write_file(dir / "graphs" / name, serialize_graph(g));
    Json ins = Json::array();
    for (const auto& m : g.inputs) ins.push_back(tensor_meta_to_json(m));
    const std::string h = graph_hash(g);
    write_file(dir / "inputs" / name, Json{{"graph_hash", h}, {"inputs", ins}}.dump(2) + "\n");
    members.push_back(Json{{"graph", "graphs/" + name}, {"inputs", "inputs/" + name}, {"hash", h}});
  }
  Json dtypes = Json::array();
  for (DType d : t.dtypes) dtypes.push_back(dtype_name(d));
  write_file(dir / "provenance.json", t.provenance.dump(2) + "\n");
  const Json manifest{{"id", t.id},
                      {"op_sequence", t.op_sequence()},
                      {"dtypes", dtypes},
                      {"members", members},
                      {"runtime", runtime.to_json()},
                      {"pass_dir", "pass_dir"},
                      {"provenance", "provenance.json"}};
  write_file(dir / "task.json", manifest.dump(2) + "\n");
}

LoadedTask load_task(const std::filesystem::path& dir) {
  const Json m = read_json(dir / "task.json");
  LoadedTask out;
  try {
    out.task.id = m.at("id").get<std::string>();
    out.runtime = TaskRuntime::from_json(m.at("runtime"));
    for (const auto& d : m.at("dtypes")) {
      auto dt = dtype_from_name(d.get<std::string>());
      if (!dt) throw ParseError("task '" + out.task.id + "': unknown dtype");
      out.task.dtypes.push_back(*dt);
    }
    for (const auto& mem : m.at("members")) {
      Graph g = parse_graph(read_file(dir / mem.at("graph").get<std::string>()));
      const std::string h = graph_hash(g);
      if (h != mem.at("hash").get<std::string>())
        throw ParseError("task '" + out.task.id + "': member hash mismatch for " + mem.at("graph").get<std::string>());
      const Json ins = read_json(dir / mem.at("inputs").get<std::string>());
      if (ins.at("graph_hash").get<std::string>() != h)
        throw ParseError("task '" + out.task.id + "': input metadata belongs to another graph");
      std::vector<TensorMeta> metas;
      for (const auto& j : ins.at("inputs")) metas.push_back(tensor_meta_from_json(j));
      if (metas != g.inputs) throw ParseError("task '" + out.task.id + "': input metadata disagrees with graph");
      out.task.subgraphs.push_back(std::move(g));
    }
    out.task.provenance = read_json(dir / m.at("provenance").get<std::string>());
    if (!std::filesystem::is_directory(dir / m.at("pass_dir").get<std::string>()))
      throw ParseError("task '" + out.task.id + "': pass_dir is missing");
    if (out.task.subgraphs.empty()) throw ParseError("task '" + out.task.id + "' has no members");
    const auto seq = out.task.op_sequence();
    for (const auto& g : out.task.subgraphs)
      if (op_sequence(g) != seq) throw ParseError("task '" + out.task.id + "': members disagree on op sequence");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("task manifest in '" + dir.string() + "': " + e.what());
  }
  return out;
}

}  // namespace passkit
