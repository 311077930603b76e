#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "passkit/graph.hpp"
#include "passkit/pipeline.hpp"

namespace passkit::testing {

inline std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(PASSKIT_FIXTURE_DIR) / rel; }

inline Graph load_fixture(const std::string& rel) { return parse_graph(read_text(fixture(rel))); }

inline std::filesystem::path scratch_dir(const std::string& tag) {
  auto d = std::filesystem::temp_directory_path() / ("passkit_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

struct RandomGraphOptions {
  int min_nodes = 1;
  int max_nodes = 12;
  int64_t dim = 8;
  bool shuffle_storage = true;
};

// Random DAG over one [dim, dim] fp32 shape: elementwise, reductions with keepdim,
// matmul and layer_norm, so every fusion class shows up.
inline Graph random_graph(std::mt19937_64& rng, const RandomGraphOptions& o = {}) {
  const int64_t d = o.dim;
  Graph g;
  g.name = "random";
  g.inputs = {TensorMeta{{d, d}, DType::fp32}, TensorMeta{{d, d}, DType::fp32}, TensorMeta{{d}, DType::fp32}};
  const int n = std::uniform_int_distribution<int>(o.min_nodes, o.max_nodes)(rng);
  std::vector<ValueRef> square{ValueRef::of_input(0), ValueRef::of_input(1)};
  auto pick = [&](std::size_t bias_recent) {
    std::size_t lo = square.size() > bias_recent ? square.size() - bias_recent : 0;
    return square[std::uniform_int_distribution<std::size_t>(lo, square.size() - 1)(rng)];
  };
  const Shape sq{d, d};
  for (int i = 0; i < n; ++i) {
    OperatorNode node;
    node.id = "v" + std::to_string(i);
    const int kind = std::uniform_int_distribution<int>(0, 8)(rng);
    switch (kind) {
      case 0: node.op = "add"; node.inputs = {pick(3), pick(6)}; break;
      case 1: node.op = "mul"; node.inputs = {pick(3), pick(6)}; break;
      case 2: node.op = "sub"; node.inputs = {pick(3), pick(6)}; break;
      case 3: node.op = "relu"; node.inputs = {pick(3)}; break;
      case 4: node.op = "clamp"; node.inputs = {pick(3)}; node.attrs["min"] = -0.5; node.attrs["max"] = 0.5; break;
      case 5: node.op = "matmul"; node.inputs = {pick(3), pick(6)}; break;
      case 6: {
        // keepdim sum feeding a broadcasting add keeps the square shape
        OperatorNode s;
        s.id = node.id + "s";
        s.op = "sum";
        s.inputs = {pick(3)};
        s.attrs["dims"] = Json::array({1});
        s.attrs["keepdim"] = true;
        s.outputs = {TensorMeta{{d, 1}, DType::fp32}};
        g.nodes.push_back(s);
        node.op = "add";
        node.inputs = {pick(4), ValueRef::of_node(s.id)};
        break;
      }
      case 7:
        node.op = "layer_norm";
        node.inputs = {pick(3), ValueRef::of_input(2), ValueRef::of_input(2)};
        node.attrs["normalized_shape"] = Json::array({d});
        break;
      default: node.op = "cast"; node.inputs = {pick(3)}; node.attrs["dtype"] = "fp16"; break;
    }
    node.outputs = {TensorMeta{sq, node.op == "cast" ? DType::fp16 : DType::fp32}};
    if (node.op == "cast") {
      g.nodes.push_back(node);
      OperatorNode back;
      back.id = node.id + "c";
      back.op = "cast";
      back.inputs = {ValueRef::of_node(node.id)};
      back.attrs["dtype"] = "fp32";
      back.outputs = {TensorMeta{sq, DType::fp32}};
      g.nodes.push_back(back);
      square.push_back(ValueRef::of_node(back.id));
      continue;
    }
    g.nodes.push_back(node);
    square.push_back(ValueRef::of_node(node.id));
  }
  g.outputs = {square.back()};
  if (square.size() > 4 && std::uniform_int_distribution<int>(0, 1)(rng)) {
    const auto extra = square[square.size() - 3];
    if (!extra.is_input() && extra != g.outputs[0]) g.outputs.push_back(extra);
  }
  if (o.shuffle_storage) std::shuffle(g.nodes.begin(), g.nodes.end(), rng);
  return g;
}

// Graph with node storage in canonical order.
inline Graph canonical_storage(const Graph& g) {
  Graph out = g;
  out.nodes.clear();
  for (const auto& id : topological_order(g)) out.nodes.push_back(g.node(id));
  return out;
}

}  // namespace passkit::testing
