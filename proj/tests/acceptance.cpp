#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "oracles.hpp"
#include "passkit/bench.hpp"
#include "passkit/cost_model.hpp"
#include "passkit/error.hpp"
#include "passkit/mining.hpp"
#include "passkit/pass.hpp"
#include "passkit/pipeline.hpp"
#include "passkit/scoring.hpp"
#include "record_oracles.hpp"
#include "support.hpp"

using namespace passkit;
using namespace passkit::testing;
namespace fs = std::filesystem;

namespace {

constexpr double kIdentityRelTol = 1e-12;
constexpr double kRtolPin = 0.01;
constexpr double kIdentityBudgetSeconds = 5.0;
constexpr double kGoldenBudgetSeconds = 10.0;
constexpr int kIdentitySets = 1000;
constexpr int kFoldSequences = 100;
constexpr int kPrefixGraphs = 200;

struct Outcome {
  bool ok = true;
  std::ostringstream why;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) why << what;
    ok = ok && cond;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PASSKIT_CLI) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Graph recast(const Graph& g, DType d) {
  Json j = graph_to_json(g, false);
  for (auto& m : j["inputs"])
    if (is_floating(*dtype_from_name(m["dtype"].get<std::string>()))) m["dtype"] = std::string(dtype_name(d));
  for (auto& n : j["nodes"]) n.erase("out");
  return graph_from_json(j);
}

void metric_identity(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  MetricParams m;
  double worst_es = 0, worst_gamma = 0;
  for (int trial = 0; trial < kIdentitySets; ++trial) {
    const auto recs = random_records(rng, 1 + rng() % 64);
    for (int t : m.t_range()) {
      std::vector<double> all, err;
      for (const auto& r : recs) {
        all.push_back(oracle_rectified(r, t, m.b, m.p));
        if (!r.correct_at(t)) err.push_back(all.back());
      }
      worst_es = std::max(worst_es, rel_err(es_score(recs, t, m), product_root(all)));
      const auto g = gamma_factor(recs, t, m);
      if (!err.empty()) worst_gamma = std::max(worst_gamma, rel_err(g.value, product_root(err)));
      o.expect(g.defined == !err.empty(), "gamma definedness disagrees with the error count");
    }
  }
  const double dt = seconds_since(t0);
  o.expect(worst_es < kIdentityRelTol, "ES relative error too large");
  o.expect(worst_gamma < kIdentityRelTol, "gamma relative error too large");
  o.expect(dt < kIdentityBudgetSeconds, "over time budget");
  o.why << " (max ES err " << worst_es << ", max gamma err " << worst_gamma << ", " << dt << " s)";
}

void schedule_pins(Outcome& o) {
  o.expect(std::fabs(tolerance_at(DType::fp32, -5).first - 1e-5) <= 1e-5 * 1e-12, "atol_fp32(-5)");
  for (DType d : {DType::fp64, DType::fp32, DType::fp16, DType::bf16})
    o.expect(tolerance_at(d, 0).first == 1.0 && tolerance_at(d, 0).second == 1.0, "tolerances at t=0");
  o.expect(std::fabs(tolerance_at(DType::fp32, -5).second - 1.3e-6) <= 1.3e-6 * kRtolPin, "rtol_fp32(-5)");
  MetricParams m;
  for (int t = -5; t <= -3; ++t) o.expect(weight_at(t, m) == 1.0, "W on the plateau");
  o.expect(weight_at(0, m) == 0.512, "W_0");
  o.expect(weight_at(m.t_min, m) == 0.001 && weight_at(m.t_max(), m) == 0.001, "W extremes");
}

void eager_row(Outcome& o) {
  std::vector<EvalRecord> recs;
  for (int i = 0; i < 30; ++i) {
    EvalRecord r;
    r.id = "eager/" + std::to_string(i);
    r.task = "task" + std::to_string(i / 3);
    r.speedup = 1.0;
    for (int t = -10; t <= 0; ++t) r.correct[t] = true;
    recs.push_back(r);
  }
  const auto rep = summary_metrics(recs, {});
  o.expect(rep.fast_p.at(1.0) == 1.0, "fast_1");
  o.expect(rep.samp_cr == 1.0 && rep.sub_cr == 1.0, "correct rates");
  o.expect(rep.gmean_speedup && *rep.gmean_speedup == 1.0, "G-Mean");
  o.expect(rep.as == 1.0, "AS");
}

void golden_fixtures(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  struct Golden {
    const char* graph;
    const char* pass;
  };
  for (const Golden gd : {Golden{"graphs/roll_slice_ln.json", "passes/roll_slice_ln"},
                          Golden{"graphs/masked_pool.json", "passes/masked_pool"}}) {
    const PassSet set = load_pass_dir(fixture(gd.pass));
    o.expect(set.passes.size() == 1, std::string(gd.pass) + ": expected one pass");
    if (set.passes.size() != 1) return;
    const CompilerPass& pass = set.passes[0];
    for (DType d : kGeneralizeDTypes) {
      const Graph g = recast(load_fixture(gd.graph), d);
      const std::string tag = std::string(gd.graph) + " " + std::string(dtype_name(d)) + ": ";
      o.expect(match_pattern(g, pass.pattern).size() == 1, tag + "match count");
      const auto res = apply_pass(g, pass, set.library);
      const auto [atol, rtol] = tolerance_at(d, -5);
      o.expect(verify_validity(g, res.graph, set.library, {0, 1, 2}, atol, rtol).pass, tag + "validity at t=-5");
      const auto before = graph_latency(g, LatencyMode::eager, {}, &set.library);
      const auto after = graph_latency(res.graph, LatencyMode::eager, {}, &set.library);
      o.expect(after.kernel_count == 1, tag + "fused kernel count");
      o.expect(before.kernel_count > after.kernel_count, tag + "kernel count direction");
      o.expect(after.latency < before.latency, tag + "modeled latency");
      if (d == DType::fp32) o.why << " [" << gd.graph << " " << before.kernel_count << " -> " << after.kernel_count << "]";
    }
  }
  const double dt = seconds_since(t0);
  o.expect(dt < kGoldenBudgetSeconds, "over time budget");
  o.why << " (" << dt << " s)";
}

void folding(Outcome& o) {
  const auto r = recursive_fold(OpSequence{"C", "B", "R", "C", "B", "R"});
  const auto& s = r.table.symbols;
  o.expect(s.size() == 2, "table size");
  if (s.size() != 2) return;
  o.expect(s[0].symbol == "α" && s[0].body == OpSequence{"C", "B"}, "alpha");
  o.expect(s[1].symbol == "β" && s[1].body == OpSequence{"α", "R"}, "beta");
  o.expect(s[0].level == 1 && s[1].level == 2, "levels");
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < kFoldSequences; ++trial) {
    const auto corpus = random_corpus(rng, 2 + trial % 3);
    const auto folded = recursive_fold(corpus);
    const auto oracle = naive_fold(corpus, 8, 2, folded.table);
    o.expect(oracle.size() == folded.table.symbols.size(), "symbol count vs substring oracle");
    if (oracle.size() != folded.table.symbols.size()) return;
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      o.expect(folded.table.symbols[i].body == oracle[i].body, "motif body vs substring oracle");
      o.expect(folded.table.symbols[i].count == oracle[i].count, "motif count vs substring oracle");
    }
  }
}

void prefix_analysis(Outcome& o) {
  std::mt19937_64 rng(77);
  int plateaus = 0;
  for (int trial = 0; trial < kPrefixGraphs; ++trial) {
    const Graph g = random_graph(rng, {.min_nodes = 1, .max_nodes = 15});
    const auto curve = prefix_kernel_curve(g);
    for (std::size_t i = 0; i < curve.size(); ++i) {
      const int prev = i == 0 ? 0 : curve[i - 1].second;
      o.expect(curve[i].second - prev == 0 || curve[i].second - prev == 1, "K(P) step outside {0, 1}");
      if (i == 0) o.expect(curve[i].second == 1, "K(1) != 1");
    }
    for (const auto& p : detect_plateaus(curve)) {
      const auto [b, e] = plateau_window(g, p);
      const Graph s = extract_subgraph(g, b, e);
      const int fused = graph_latency(s, LatencyMode::fused, {}).kernel_count;
      const int eager = graph_latency(s, LatencyMode::eager, {}).kernel_count;
      o.expect(static_cast<std::size_t>(fused) == oracle_group_count(s), "fused count vs regrouping oracle");
      o.expect(fused < eager, "plateau does not fuse");
      ++plateaus;
    }
  }
  o.expect(plateaus > 0, "no plateaus exercised");
  o.why << " (" << plateaus << " plateaus)";
}

void integrity(Outcome& o) {
  const auto root = scratch_dir("acceptance_integrity");
  TaskInstance t;
  t.id = "add_relu";
  const auto variants = generalize_instances(load_fixture("graphs/add_relu.json"));
  t.subgraphs.assign(variants.begin(), variants.begin() + std::min<std::size_t>(3, variants.size()));
  t.dtypes = {DType::fp32};
  t.provenance = Json::object();
  package_task(t, TaskRuntime{}, root / "task");
  struct Case {
    const char* pass;
    ErrorCategory expect;
    const char* needle;
  };
  for (const Case c : {Case{"passes/blocked_delegate", ErrorCategory::compilation, "blocked call"},
                       Case{"passes/whitelist_violator", ErrorCategory::runtime, ""},
                       Case{"passes/uninit_scratch", ErrorCategory::accuracy, ""}}) {
    const auto recs = eval_task(root / "task", RunConfig{}, fixture(c.pass));
    for (const auto& r : recs) {
      o.expect(r.category == c.expect, std::string(c.pass) + ": category " + std::string(category_name(r.category)));
      o.expect(r.message.find(c.needle) != std::string::npos, std::string(c.pass) + ": message " + r.message);
    }
  }
  const PassSet blocked = load_pass_dir(fixture("passes/blocked_delegate"));
  const auto v = static_integrity_check(blocked.passes.at(0), blocked.library, IntegrityPolicy{});
  o.expect(!v.ok && v.message.find("blocked call") != std::string::npos, "static rejection");
  fs::remove_all(root);
}

void determinism(Outcome& o) {
  const auto root = scratch_dir("acceptance_e2e");
  const std::string fx = PASSKIT_FIXTURE_DIR;
  std::string reports[2];
  for (int round = 0; round < 2; ++round) {
    const fs::path w = root / "work";
    fs::remove_all(w);
    const bool mined = run_cli("--seed 11 mine " + fx + "/corpus --strategy fusible --out " + (w / "s").string()) == 0;
    const bool benched = mined && run_cli("--seed 11 bench " + (w / "s").string() + " --n 8 --out " + (w / "b").string()) == 0;
    o.expect(benched, "mine or bench failed");
    if (!benched) return;
    std::vector<fs::path> tasks;
    for (const auto& e : fs::directory_iterator(w / "b" / "eval")) tasks.push_back(e.path());
    std::sort(tasks.begin(), tasks.end());
    std::string recs;
    for (const auto& t : tasks) {
      const fs::path out = w / (t.filename().string() + ".records.json");
      o.expect(run_cli("--seed 11 --workers 2 eval " + t.string() + " --out " + out.string()) == 0, "eval failed");
      recs += " " + out.string();
    }
    o.expect(run_cli("--report-format machine score" + recs + " --out " + (w / "report.json").string()) == 0,
             "score failed");
    reports[round] = read_text(w / "report.json");
  }
  o.expect(!reports[0].empty() && reports[0] == reports[1], "reports differ");
  o.why << " (" << reports[0].size() << " bytes)";
  fs::remove_all(root);
}

void bucketing(Outcome& o) {
  o.expect(quantize_dim(128) == 1 && quantize_dim(4096) == 3, "quantization values");
  for (std::size_t size = 0; size <= 50; ++size)
    for (int stride = 1; stride <= 8; ++stride) {
      std::vector<std::size_t> want;
      for (std::size_t i = 0; i < size; i += stride) want.push_back(i);
      std::vector<std::vector<std::size_t>> expect_groups;
      const std::size_t triples = want.size() / 3;
      for (std::size_t k = 0; k < triples; ++k) expect_groups.push_back({want[3 * k], want[3 * k + 1], want[3 * k + 2]});
      for (std::size_t i = 3 * triples; i < want.size(); ++i) expect_groups.push_back({want[i]});
      o.expect(stratified_sample(size, stride) == expect_groups, "stratified grouping");
    }
  std::vector<Graph> samples;
  for (const char* f : {"graphs/masked_pool.json", "graphs/add_relu.json", "corpus/cast_chain.json",
                        "corpus/reduce_mix.json", "corpus/gated.json"})
    for (auto& g : generalize_instances(load_fixture(f))) samples.push_back(std::move(g));
  const auto tasks = build_tasks(samples, 3);
  for (uint64_t seed : {0, 1, 2, 3}) {
    const auto split = select_evaluation_set(tasks, 3, seed);
    std::set<std::string> eval;
    for (const auto& t : split.eval)
      for (const auto& g : t.subgraphs) eval.insert(graph_hash(g));
    for (const auto& t : split.train)
      for (const auto& g : t.subgraphs) o.expect(!eval.count(graph_hash(g)), "train shares a hash with eval");
    o.expect(!split.eval.empty(), "empty evaluation set");
  }
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<void(Outcome&)>> criteria[] = {
      {"metric identity suite", metric_identity},
      {"schedule pinning", schedule_pins},
      {"eager baseline identity", eager_row},
      {"golden fused-pass fixtures", golden_fixtures},
      {"folding reproduction", folding},
      {"prefix analysis consistency", prefix_analysis},
      {"integrity defenses", integrity},
      {"pipeline determinism", determinism},
      {"bucketing and grouping", bucketing},
  };
  int failures = 0;
  int n = 0;
  for (const auto& [name, fn] : criteria) {
    ++n;
    Outcome o;
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.expect(false, std::string("exception: ") + e.what());
    }
    std::printf("%s criterion %d: %s%s%s\n", o.ok ? "PASS" : "FAIL", n, name, o.ok ? "" : ": ", o.why.str().c_str());
    std::fflush(stdout);
    failures += !o.ok;
  }
  return failures == 0 ? 0 : 1;
}
