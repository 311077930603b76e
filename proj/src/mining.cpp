#include "passkit/mining.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "passkit/cost_model.hpp"
#include "passkit/error.hpp"
#include "passkit/kernel_library.hpp"

namespace passkit {

const FoldSymbol* FoldSymbolTable::find(std::string_view symbol) const {
  for (const auto& s : symbols)
    if (s.symbol == symbol) return &s;
  return nullptr;
}

OpSequence FoldSymbolTable::expand(const std::string& token) const {
  const FoldSymbol* s = find(token);
  if (!s) return {token};
  OpSequence out;
  for (const auto& t : s->body) {
    auto part = expand(t);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

int count_non_overlapping(const OpSequence& seq, const OpSequence& pattern) {
  if (pattern.empty() || pattern.size() > seq.size()) return 0;
  int count = 0;
  for (std::size_t i = 0; i + pattern.size() <= seq.size();) {
    if (std::equal(pattern.begin(), pattern.end(), seq.begin() + i)) {
      ++count;
      i += pattern.size();
    } else {
      ++i;
    }
  }
  return count;
}

namespace {

std::string fold_symbol_name(std::size_t i) {
  static const char* kGreek[] = {"α", "β", "γ", "δ", "ε", "ζ", "η", "θ", "ι", "κ", "λ", "μ",
                                 "ν", "ξ", "ο", "π", "ρ", "σ", "τ", "υ", "φ", "χ", "ψ", "ω"};
  std::string s = kGreek[i % 24];
  if (i >= 24) s += std::to_string(i / 24);
  return s;
}

uint64_t mulmod(uint64_t a, uint64_t b, uint64_t m) {
  return static_cast<uint64_t>((static_cast<unsigned __int128>(a) * b) % m);
}

struct Span {
  std::size_t begin, end;  // primitive-level positions
};

struct Candidate {
  std::size_t length;
  std::size_t seq, pos;  // first occurrence
  int count;
};

}  // namespace

FoldResult recursive_fold(const std::vector<OpSequence>& corpus, const FoldOptions& options) {
  if (options.window_max < 2) throw Error("recursive_fold: window_max must be >= 2");
  if (options.min_count < 2) throw Error("recursive_fold: min_count must be >= 2");
  if (options.hash_modulus < 2) throw Error("recursive_fold: hash modulus must be >= 2");
  FoldResult r;
  r.folded = corpus;
  std::vector<std::vector<Span>> spans(corpus.size());
  for (std::size_t s = 0; s < corpus.size(); ++s)
    for (std::size_t i = 0; i < corpus[s].size(); ++i) spans[s].push_back({i, i + 1});
  std::map<std::string, int> level{};

  const uint64_t mod = options.hash_modulus;
  const uint64_t base = 1000003 % mod;
  for (;;) {
    std::map<std::string, uint64_t> ids;
    for (const auto& seq : r.folded)
      for (const auto& t : seq) ids.emplace(t, ids.size() + 1);

    std::optional<Candidate> best;
    for (std::size_t L = 2; L <= static_cast<std::size_t>(options.window_max); ++L) {
      // hash -> occurrences (sequence, position), in corpus order.
      std::map<uint64_t, std::vector<std::pair<std::size_t, std::size_t>>> buckets;
      uint64_t top = 1;
      for (std::size_t k = 1; k < L; ++k) top = mulmod(top, base, mod);
      for (std::size_t s = 0; s < r.folded.size(); ++s) {
        const auto& seq = r.folded[s];
        if (seq.size() < L) continue;
        uint64_t h = 0;
        for (std::size_t i = 0; i < L; ++i) h = (mulmod(h, base, mod) + ids[seq[i]] % mod) % mod;
        buckets[h].push_back({s, 0});
        for (std::size_t i = 1; i + L <= seq.size(); ++i) {
          const uint64_t out = mulmod(ids[seq[i - 1]] % mod, top, mod);
          h = (h + mod - out) % mod;
          h = (mulmod(h, base, mod) + ids[seq[i + L - 1]] % mod) % mod;
          buckets[h].push_back({s, i});
        }
      }
      for (auto& [h, occ] : buckets) {
        if (occ.size() < static_cast<std::size_t>(options.min_count)) continue;
        // Split the bucket into classes of identical content.
        std::vector<bool> done(occ.size(), false);
        for (std::size_t a = 0; a < occ.size(); ++a) {
          if (done[a]) continue;
          const auto& sa = r.folded[occ[a].first];
          auto first = sa.begin() + occ[a].second;
          int count = 0;
          std::size_t last_seq = static_cast<std::size_t>(-1), next_free = 0;
          for (std::size_t b = a; b < occ.size(); ++b) {
            if (done[b]) continue;
            const auto& sb = r.folded[occ[b].first];
            if (!std::equal(first, first + L, sb.begin() + occ[b].second)) continue;
            done[b] = true;
            if (occ[b].first != last_seq) {
              last_seq = occ[b].first;
              next_free = 0;
            }
            if (occ[b].second >= next_free) {
              ++count;
              next_free = occ[b].second + L;
            }
          }
          if (count < options.min_count) continue;
          Candidate c{L, occ[a].first, occ[a].second, count};
          auto better = [](const Candidate& x, const Candidate& y) {
            if (x.count != y.count) return x.count > y.count;
            if (x.length != y.length) return x.length < y.length;
            return std::pair(x.seq, x.pos) < std::pair(y.seq, y.pos);
          };
          if (!best || better(c, *best)) best = c;
        }
      }
    }
    if (!best) break;

    const auto& src = r.folded[best->seq];
    const OpSequence body(src.begin() + best->pos, src.begin() + best->pos + best->length);
    FoldSymbol sym;
    sym.symbol = fold_symbol_name(r.table.symbols.size());
    sym.body = body;
    for (const auto& t : body) sym.level = std::max(sym.level, level.count(t) ? level[t] : 0);
    sym.level += 1;
    for (std::size_t s = 0; s < r.folded.size(); ++s) {
      OpSequence next;
      std::vector<Span> next_spans;
      const auto& seq = r.folded[s];
      for (std::size_t i = 0; i < seq.size();) {
        if (i + body.size() <= seq.size() && std::equal(body.begin(), body.end(), seq.begin() + i)) {
          const Span sp{spans[s][i].begin, spans[s][i + body.size() - 1].end};
          sym.windows.push_back({s, sp.begin, sp.end});
          next.push_back(sym.symbol);
          next_spans.push_back(sp);
          i += body.size();
        } else {
          next.push_back(seq[i]);
          next_spans.push_back(spans[s][i]);
          ++i;
        }
      }
      r.folded[s] = std::move(next);
      spans[s] = std::move(next_spans);
    }
    sym.count = static_cast<int>(sym.windows.size());
    level[sym.symbol] = sym.level;
    r.table.symbols.push_back(std::move(sym));
  }
  return r;
}

FoldResult recursive_fold(const OpSequence& seq, const FoldOptions& options) {
  return recursive_fold(std::vector<OpSequence>{seq}, options);
}

std::vector<MinedSample> motifs_to_subgraphs(const FoldSymbolTable& table, const std::vector<Graph>& corpus,
                                             const NodeBounds& bounds) {
  std::vector<MinedSample> out;
  std::set<std::string> seen;
  for (const auto& sym : table.symbols) {
    const auto expanded = table.expand(sym.symbol);
    for (const auto& w : sym.windows) {
      const Graph& src = corpus.at(w.sequence);
      const std::size_t n = w.end - w.begin;
      if (n < bounds.min_ops || n > bounds.max_ops) continue;
      Graph sub = extract_subgraph(src, w.begin, w.end);
      if (op_sequence(sub) != expanded)
        throw Error("motif '" + sym.symbol + "' window no longer matches its expansion in '" + src.name + "'");
      const std::string h = graph_hash(sub);
      if (!seen.insert(h).second) continue;
      sub.name = src.name + "/" + sym.symbol + "@" + std::to_string(w.begin);
      out.push_back({std::move(sub), Json{{"strategy", "classical"},
                                          {"source", src.name},
                                          {"source_hash", graph_hash(src)},
                                          {"window", {w.begin, w.end}},
                                          {"symbol", sym.symbol}}});
    }
  }
  return out;
}

std::vector<Plateau> detect_plateaus(const std::vector<std::pair<int, int>>& curve) {
  std::vector<Plateau> out;
  std::size_t i = 0;
  while (i < curve.size()) {
    std::size_t j = i;
    while (j + 1 < curve.size() && curve[j + 1].second == curve[i].second) ++j;
    if (j > i) out.push_back({curve[i].first, curve[j].first});
    i = j + 1;
  }
  return out;
}

std::pair<std::size_t, std::size_t> plateau_window(const Graph& g, const Plateau& p) {
  const auto order = topological_order(g);
  if (p.start < 1 || p.end > static_cast<int>(order.size()) || p.end <= p.start)
    throw Error("plateau_window: plateau out of range");
  std::size_t start = static_cast<std::size_t>(p.start - 1);
  std::size_t pos = 0;
  for (const auto& grp : fuse_groups(g)) {
    if (start < pos + grp.node_ids.size()) {
      start = pos;
      break;
    }
    pos += grp.node_ids.size();
  }
  return {start, static_cast<std::size_t>(p.end)};
}

std::vector<MinedSample> mine_fusible(const Graph& g) {
  std::vector<MinedSample> out;
  std::set<std::string> seen;
  for (const auto& p : detect_plateaus(prefix_kernel_curve(g))) {
    const auto [b, e] = plateau_window(g, p);
    Graph sub = extract_subgraph(g, b, e);
    if (!seen.insert(graph_hash(sub)).second) continue;
    sub.name = g.name + "/fusible@" + std::to_string(b);
    out.push_back({std::move(sub), Json{{"strategy", "fusible"},
                                        {"source", g.name},
                                        {"source_hash", graph_hash(g)},
                                        {"window", {b, e}},
                                        {"plateau", {p.start, p.end}}}});
  }
  return out;
}

std::vector<MinedSample> extract_single_ops(const Graph& g) {
  std::vector<MinedSample> out;
  std::set<std::string> seen;
  const auto order = topological_order(g);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const OperatorNode& n = g.node(order[i]);
    if (is_fused_op(n.op)) continue;
    Graph one;
    one.name = g.name + "/" + n.op + "@" + std::to_string(i);
    OperatorNode c = n;
    std::map<ValueRef, int> arg;
    for (auto& r : c.inputs) {
      auto [it, fresh] = arg.emplace(r, static_cast<int>(one.inputs.size()));
      if (fresh) one.inputs.push_back(g.meta_of(r));
      r = ValueRef::of_input(it->second);
    }
    for (std::size_t k = 0; k < c.outputs.size(); ++k) one.outputs.push_back(ValueRef::of_node(c.id, static_cast<int>(k)));
    one.nodes.push_back(std::move(c));
    if (!seen.insert(graph_hash(one)).second) continue;
    out.push_back({std::move(one), Json{{"strategy", "single"},
                                        {"source", g.name},
                                        {"source_hash", graph_hash(g)},
                                        {"window", {i, i + 1}}}});
  }
  return out;
}

std::vector<Graph> generalize_instances(const Graph& g, std::vector<std::string>* dropped) {
  // Batch-like dims: dim 0 of the highest-rank inputs sharing the leading size of the first of them.
  std::size_t rank = 0;
  for (const auto& m : g.inputs) rank = std::max(rank, m.shape.size());
  std::vector<std::size_t> batch_inputs;
  if (rank > 0) {
    int64_t lead = -1;
    for (std::size_t i = 0; i < g.inputs.size(); ++i) {
      const auto& s = g.inputs[i].shape;
      if (s.size() != rank) continue;
      if (lead < 0) lead = s[0];
      if (s[0] == lead) batch_inputs.push_back(i);
    }
  }

  std::vector<Graph> out;
  std::set<std::string> seen;
  for (int f : kShapeGrid) {
    for (DType d : kGeneralizeDTypes) {
      Graph v = g;
      v.name = g.name + "@b" + std::to_string(f) + "_" + std::string(dtype_name(d));
      for (std::size_t i : batch_inputs) v.inputs[i].shape[0] *= f;
      for (auto& m : v.inputs)
        if (is_floating(m.dtype)) m.dtype = d;
      try {
        const auto metas = infer_graph(v, nullptr);
        for (std::size_t i = 0; i < v.nodes.size(); ++i) v.nodes[i].outputs = metas[i];
        check_structure(v);
      } catch (const Error& e) {
        if (dropped) dropped->push_back(v.name + ": " + e.what());
        continue;
      }
      if (!seen.insert(graph_hash(v)).second) continue;
      out.push_back(std::move(v));
    }
  }
  return out;
}

}  // namespace passkit
