#include <doctest.h>

#include <functional>
#include <random>
#include <set>

#include "passkit/cost_model.hpp"
#include "passkit/error.hpp"
#include "passkit/pass.hpp"
#include "passkit/registry.hpp"
#include "passkit/scoring.hpp"
#include "support.hpp"

using namespace passkit;
using passkit::testing::fixture;
using passkit::testing::load_fixture;

namespace {

Json read_json(const std::string& rel) { return Json::parse(read_text(fixture(rel))); }

// Float graph inputs recast to `d`; outputs re-inferred.
Graph recast(const Graph& g, DType d) {
  Json j = graph_to_json(g, false);
  for (auto& m : j["inputs"])
    if (is_floating(*dtype_from_name(m["dtype"].get<std::string>()))) m["dtype"] = std::string(dtype_name(d));
  for (auto& n : j["nodes"]) n.erase("out");
  return graph_from_json(j);
}

// Counts embeddings of the pattern into `host` by trying every injective node map.
int brute_force_embeddings(const PatternGraph& p, const Graph& host) {
  int count = 0;
  std::map<std::string, std::string> map;
  std::set<std::string> used;
  std::function<void(std::size_t)> place = [&](std::size_t i) {
    if (i == p.nodes.size()) {
      std::map<int, ValueRef> captured;
      for (const auto& pn : p.nodes) {
        const OperatorNode& hn = host.node(map.at(pn.id));
        for (std::size_t k = 0; k < pn.inputs.size(); ++k) {
          const ValueRef& pr = pn.inputs[k];
          const ValueRef& hr = hn.inputs[k];
          if (pr.is_input()) {
            auto [it, fresh] = captured.emplace(pr.index, hr);
            if (!fresh && it->second != hr) return;
            if (!hr.is_input() && used.count(hr.node)) return;
          } else if (hr.is_input() || hr.node != map.at(pr.node) || hr.index != pr.index) {
            return;
          }
        }
      }
      ++count;
      return;
    }
    const OperatorNode& pn = p.nodes[i];
    for (const auto& hn : host.nodes) {
      if (used.count(hn.id) || hn.op != pn.op || hn.attrs != pn.attrs || hn.inputs.size() != pn.inputs.size())
        continue;
      used.insert(hn.id);
      map[pn.id] = hn.id;
      place(i + 1);
      used.erase(hn.id);
      map.erase(pn.id);
    }
  };
  place(0);
  return count;
}

struct Golden {
  const char* graph;
  const char* pass_dir;
  std::size_t outputs;
};
constexpr Golden kGolden[] = {{"graphs/masked_pool.json", "passes/masked_pool", 1},
                              {"graphs/roll_slice_ln.json", "passes/roll_slice_ln", 2}};

IntegrityPolicy default_policy() { return {}; }

}  // namespace

TEST_CASE("golden passes load, match once and collapse to one fused node") {
  for (const auto& gd : kGolden) {
    CAPTURE(gd.graph);
    const PassSet set = load_pass_dir(fixture(gd.pass_dir));
    REQUIRE(set.passes.size() == 1);
    const CompilerPass& pass = set.passes[0];
    CHECK(pass.pattern.outputs.size() == gd.outputs);
    CHECK(static_integrity_check(pass, set.library, default_policy()).ok);
    for (DType d : kGeneralizeDTypes) {
      const Graph g = recast(load_fixture(gd.graph), d);
      const auto matches = match_pattern(g, pass.pattern);
      CHECK(matches.size() == 1);
      CHECK(brute_force_embeddings(pass.pattern, g) == 1);
      const auto res = apply_pass(g, pass, set.library);
      REQUIRE(res.graph.nodes.size() == 1);
      CHECK(res.graph.nodes[0].outputs.size() == gd.outputs);
      CHECK(res.log.size() == 1);
      CHECK(res.log[0].replaced.size() == g.nodes.size());
      CHECK(res.graph.inputs == g.inputs);
      CHECK(res.graph.output_metas() == g.output_metas());
      const auto [atol, rtol] = tolerance_at(g.output_metas()[0].dtype, -5);
      const auto v = verify_validity(g, res.graph, set.library, {0, 1, 2}, atol, rtol);
      CHECK(v.pass);
      CHECK(v.max_abs_diff == 0.0);
      const auto before = graph_latency(g, LatencyMode::eager, {}, &set.library);
      const auto after = graph_latency(res.graph, LatencyMode::eager, {}, &set.library);
      CHECK(after.kernel_count == 1);
      CHECK(before.kernel_count == static_cast<int>(g.nodes.size()));
      CHECK(after.latency < before.latency);
      CHECK(speedup(before, after) > 1.0);
      // fixpoint: the fused node cannot re-match
      const auto twice = apply_pass(res.graph, pass, set.library);
      CHECK(twice.log.empty());
      CHECK(twice.graph == res.graph);
    }
  }
}

TEST_CASE("pattern equal to the host matches everything once") {
  const Graph host = load_fixture("graphs/add_relu.json");
  const PassSet set = load_pass_dir(fixture("passes/add_relu"));
  const auto m = match_pattern(host, set.passes[0].pattern);
  REQUIRE(m.size() == 1);
  CHECK(m[0].nodes.size() == host.nodes.size());
  CHECK(m[0].bindings.at("?B") == 4);
  CHECK(m[0].bindings.at("?D") == 8);
  CHECK(m[0].bindings.at("?d") == "fp32");
}

TEST_CASE("escaping intermediate blocks the match") {
  Json j = read_json("graphs/add_relu.json");
  j["nodes"].push_back(Json{{"id", "z"}, {"op", "mul"}, {"inputs", {{"node", "a", 0}, {"node", "r", 0}}}});
  j["outputs"] = Json::array({Json::array({"z", 0})});
  const Graph host = graph_from_json(j);
  const PassSet set = load_pass_dir(fixture("passes/add_relu"));
  CHECK(match_pattern(host, set.passes[0].pattern).empty());
}

TEST_CASE("wildcards must unify") {
  const PassSet set = load_pass_dir(fixture("passes/add_relu"));
  Json j = read_json("graphs/add_relu.json");
  j["inputs"][1]["shape"] = {1, 8};  // broadcast operand: ?B binds 4 then sees 1
  CHECK(match_pattern(graph_from_json(j), set.passes[0].pattern).empty());
}

TEST_CASE("non-matching graph is returned unchanged") {
  const Graph host = load_fixture("graphs/single_relu.json");
  const PassSet set = load_pass_dir(fixture("passes/masked_pool"));
  const auto res = apply_pass(host, set.passes[0], set.library);
  CHECK(res.log.empty());
  CHECK(graph_hash(res.graph) == graph_hash(host));
}

TEST_CASE("load errors") {
  KernelLibrary lib;
  Json omit = read_json("passes/roll_slice_ln/fuse_roll_slice_add_layer_norm.json");
  omit["replacement"]["semantics"]["outputs"] = Json::array({Json::array({"res", 0})});
  CHECK_THROWS_AS(load_pass(omit, lib), SchemaError);

  KernelLibrary lib2;
  Json unused = read_json("passes/add_relu/fuse_add_relu.json");
  unused["pattern"]["inputs"].push_back(Json{{"shape", {"?B"}}, {"dtype", "?d"}});
  CHECK_THROWS_AS(load_pass(unused, lib2), SchemaError);

  KernelLibrary lib3;
  Json arity = read_json("passes/add_relu/fuse_add_relu.json");
  arity["replacement"]["args"] = {0};
  CHECK_THROWS_AS(load_pass(arity, lib3), SchemaError);

  KernelLibrary lib4;
  Json launches = read_json("passes/add_relu/fuse_add_relu.json");
  launches["replacement"]["kernels"] = 2;
  CHECK_THROWS_AS(load_pass(launches, lib4), SchemaError);

  KernelLibrary lib5;
  CHECK_THROWS_AS(load_pass(std::string_view("{not json"), lib5), ParseError);
  CHECK_THROWS_AS(load_pass_dir(fixture("passes/empty")), ParseError);
}

TEST_CASE("static integrity check") {
  IntegrityPolicy policy;
  {
    const PassSet set = load_pass_dir(fixture("passes/blocked_delegate"));
    const auto v = static_integrity_check(set.passes[0], set.library, policy);
    CHECK_FALSE(v.ok);
    CHECK(v.message.find("blocked call") != std::string::npos);
    CHECK(v.offending_op == "call_external");
  }
  {
    KernelLibrary lib;
    Json copy = read_json("passes/add_relu/fuse_add_relu.json");
    copy["replacement"]["semantics"]["nodes"] = copy["pattern"]["nodes"];
    copy["replacement"]["semantics"]["outputs"] = copy["pattern"]["outputs"];
    const auto pass = load_pass(copy, lib);
    const auto v = static_integrity_check(*pass, lib, policy);
    CHECK_FALSE(v.ok);
    CHECK(v.message.find("blocked call") != std::string::npos);
  }
  {
    // commuted operands still compute the pattern body verbatim up to a swap: allowed
    const PassSet set = load_pass_dir(fixture("passes/add_relu"));
    CHECK(static_integrity_check(set.passes[0], set.library, policy).ok);
  }
  {
    // the exempt helper hides call_external from the static scan
    const PassSet set = load_pass_dir(fixture("passes/whitelist_violator"));
    CHECK(set.kernel_documents == std::vector<std::string>{"fused.vendor_add"});
    CHECK(static_integrity_check(set.passes[0], set.library, policy).ok);
  }
}

TEST_CASE("runtime defenses") {
  const Graph host = load_fixture("graphs/add_relu.json");
  {
    const PassSet set = load_pass_dir(fixture("passes/whitelist_violator"));
    const auto res = apply_pass(host, set.passes[0], set.library);
    const auto v = verify_validity(host, res.graph, set.library, {0, 1, 2}, 1e-5, 1e-5);
    REQUIRE(v.category);
    CHECK(*v.category == ErrorCategory::runtime);
    CHECK(v.message.find("call_external") != std::string::npos);
  }
  {
    const PassSet set = load_pass_dir(fixture("passes/uninit_scratch"));
    IntegrityPolicy policy;
    CHECK(static_integrity_check(set.passes[0], set.library, policy).ok);
    const auto res = apply_pass(host, set.passes[0], set.library);
    const auto sweep = verify_sweep(host, res.graph, set.library, {0, 1, 2}, {-5, 0}, tolerance_at, policy);
    CHECK_FALSE(sweep.category);
    CHECK_FALSE(sweep.correct.at(0));
    CHECK(sweep.rewritten_trace.poisoned_outputs == std::vector<int>{0});
  }
  {
    // guarded semantics that stay inside the whitelist record one event per primitive
    const PassSet set = load_pass_dir(fixture("passes/add_relu"));
    const auto res = apply_pass(host, set.passes[0], set.library);
    const auto sweep = verify_sweep(host, res.graph, set.library, {0}, {0}, tolerance_at, {});
    CHECK(sweep.correct.at(0));
    CHECK(sweep.rewritten_trace.guard_events.size() == 2);
  }
}

TEST_CASE("stale-buffer kernel: vulnerable order passes, defended order fails") {
  KernelLibrary lib;
  Json doc = read_json("passes/add_relu/fuse_add_relu.json");
  doc["name"] = "stale_add_relu";
  doc["replacement"]["kernel"] = "fused.stale_add_relu";
  doc["replacement"]["semantics"] = Json::parse(R"({"inputs":2,"nodes":[
      {"id":"buf","op":"empty","inputs":[],"attrs":{"shape":["?B","?D"],"dtype":"?d"}},
      {"id":"y","op":"relu","inputs":[["node","buf",0]]}],"outputs":[["y",0]]})");
  const auto pass = load_pass(doc, lib);
  const Graph host = load_fixture("graphs/add_relu.json");
  const auto res = apply_pass(host, *pass, lib);

  IntegrityPolicy vulnerable;
  vulnerable.reverse_order = false;
  const auto stale = verify_validity(host, res.graph, lib, {0, 1, 2}, 0, 0, vulnerable, {.poison_fill = false});
  CHECK(stale.pass);

  const auto defended = verify_validity(host, res.graph, lib, {0, 1, 2}, 0, 0);
  CHECK_FALSE(defended.pass);
  REQUIRE(defended.category);
  CHECK(*defended.category == ErrorCategory::accuracy);
}

TEST_CASE("sweep correctness is monotone in t") {
  // a lossy bf16 round trip inside the semantics
  KernelLibrary lib;
  Json doc = read_json("passes/add_relu/fuse_add_relu.json");
  doc["name"] = "lossy_add_relu";
  doc["replacement"]["kernel"] = "fused.lossy_add_relu";
  doc["replacement"]["semantics"] = Json::parse(R"({"inputs":2,"nodes":[
      {"id":"s","op":"add","inputs":[["graphinput",0,0],["graphinput",1,0]]},
      {"id":"lo","op":"cast","inputs":[["node","s",0]],"attrs":{"dtype":"bf16"}},
      {"id":"hi","op":"cast","inputs":[["node","lo",0]],"attrs":{"dtype":"fp32"}},
      {"id":"y","op":"relu","inputs":[["node","hi",0]]}],"outputs":[["y",0]]})");
  const auto pass = load_pass(doc, lib);
  const Graph host = load_fixture("graphs/add_relu.json");
  const auto res = apply_pass(host, *pass, lib);
  std::vector<int> ts;
  for (int t = -10; t <= 0; ++t) ts.push_back(t);
  const auto sweep = verify_sweep(host, res.graph, lib, {0, 1, 2}, ts, tolerance_at);
  CHECK_FALSE(sweep.correct.at(-10));
  CHECK(sweep.correct.at(0));
  bool seen_pass = false;
  for (int t : ts) {
    if (seen_pass) CHECK(sweep.correct.at(t));
    seen_pass = seen_pass || sweep.correct.at(t);
  }
}

TEST_CASE("random hosts: interface preserved, matches disjoint, storage order irrelevant") {
  const PassSet set = load_pass_dir(fixture("passes/add_relu"));
  const CompilerPass& pass = set.passes[0];
  std::mt19937_64 rng(23);
  int rewrites = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const Graph g = passkit::testing::random_graph(rng, {.min_nodes = 2, .max_nodes = 14});
    const auto res = apply_pass(g, pass, set.library);
    CHECK(res.graph.inputs == g.inputs);
    CHECK(res.graph.output_metas() == g.output_metas());
    std::set<std::string> seen;
    for (const auto& e : res.log)
      for (const auto& id : e.replaced) CHECK(seen.insert(id).second);
    rewrites += static_cast<int>(res.log.size());

    Graph shuffled = g;
    std::shuffle(shuffled.nodes.begin(), shuffled.nodes.end(), rng);
    const auto again = apply_pass(shuffled, pass, set.library);
    std::set<std::vector<std::string>> a, b;
    for (const auto& e : res.log) a.insert(e.replaced);
    for (const auto& e : again.log) b.insert(e.replaced);
    CHECK(a == b);
    CHECK(apply_pass(res.graph, pass, set.library).log.empty());
    if (!res.log.empty()) {
      const auto v = verify_validity(g, res.graph, set.library, {0}, 0, 0);
      CHECK(v.pass);
    }
  }
  CHECK(rewrites > 0);
}
