#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "passkit/graph.hpp"

namespace passkit {

using OpSequence = std::vector<std::string>;

// Half-open window [begin, end) over the primitive-level sequence `sequence`.
struct SequenceWindow {
  std::size_t sequence = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const SequenceWindow&, const SequenceWindow&) = default;
};

struct FoldSymbol {
  std::string symbol;
  OpSequence body;    // tokens at fold time (may contain earlier symbols)
  int level = 0;      // 1 for the first fold
  int count = 0;      // non-overlapping occurrences replaced
  std::vector<SequenceWindow> windows;
};

struct FoldSymbolTable {
  std::vector<FoldSymbol> symbols;

  const FoldSymbol* find(std::string_view symbol) const;
  bool is_symbol(std::string_view token) const { return find(token) != nullptr; }
  // Fully expanded primitive sequence of a token.
  OpSequence expand(const std::string& token) const;
};

struct FoldOptions {
  int window_max = 8;
  int min_count = 2;
  // Modulus of the rolling hash; tests shrink it to force collisions.
  uint64_t hash_modulus = (uint64_t{1} << 61) - 1;
};

struct FoldResult {
  FoldSymbolTable table;
  std::vector<OpSequence> folded;
};

// Repeatedly abstracts the most frequent non-overlapping
// subsequence (length 2..window_max, count >= min_count) into a fresh symbol.
// Candidates come from rolling polynomial hashes and are verified token-by-token.
// Ties: shorter length, then earlier first occurrence. Windows never cross sequences.
FoldResult recursive_fold(const std::vector<OpSequence>& corpus, const FoldOptions& options = {});
FoldResult recursive_fold(const OpSequence& seq, const FoldOptions& options = {});

// Greedy left-to-right non-overlapping occurrence count.
int count_non_overlapping(const OpSequence& seq, const OpSequence& pattern);

struct MinedSample {
  Graph graph;
  Json provenance;  // source graph hash, window, strategy
};

struct NodeBounds {
  std::size_t min_ops = 1;
  std::size_t max_ops = static_cast<std::size_t>(-1);
};

// Expands every fold symbol and extracts its windows from `corpus`; dedup by hash.
// For a table built over op_sequence(corpus[i]).
std::vector<MinedSample> motifs_to_subgraphs(const FoldSymbolTable& table, const std::vector<Graph>& corpus,
                                             const NodeBounds& bounds = {});

// Classical bounds for motif samples.
inline constexpr NodeBounds kClassicalBounds{4, 62};

// 1-based inclusive run [start, end] of constant K.
struct Plateau {
  int start = 0;
  int end = 0;
  friend bool operator==(const Plateau&, const Plateau&) = default;
};

// Maximal runs of constant K with length >= 2.
std::vector<Plateau> detect_plateaus(const std::vector<std::pair<int, int>>& curve);

// Canonical-order window [begin, end) for a plateau, snapped to the start of the
// kernel group containing node `start`.
std::pair<std::size_t, std::size_t> plateau_window(const Graph& g, const Plateau& p);

// Plateau windows of one graph; dedup by hash.
std::vector<MinedSample> mine_fusible(const Graph& g);

// One 1-node sample per non-fused node, dedup by (op, attrs, shapes, dtypes).
std::vector<MinedSample> extract_single_ops(const Graph& g);

inline constexpr int kShapeGrid[] = {1, 2, 3, 4, 6, 8, 12, 16, 24, 32};
inline constexpr DType kGeneralizeDTypes[] = {DType::fp32, DType::fp16, DType::bf16};

// 10 batch-scaled shape variants x {fp32, fp16, bf16}. Variants whose shape rules fail
// are dropped and described in `dropped`; duplicates collapse.
std::vector<Graph> generalize_instances(const Graph& g, std::vector<std::string>* dropped = nullptr);

}  // namespace passkit
