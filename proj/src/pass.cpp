#include "passkit/pass.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include "passkit/error.hpp"
#include "passkit/registry.hpp"

namespace passkit {

std::set<std::string> IntegrityPolicy::effective_whitelist() const {
  return whitelist.empty() ? PrimitiveRegistry::instance().primitive_names() : whitelist;
}

// ---------------------------------------------------------------------------
// Loading

namespace {

bool is_wildcard(const Json& v) { return v.is_string() && v.get<std::string>().starts_with("?"); }

MetaPattern meta_pattern_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("dtype") || !j.at("shape").is_array())
    throw ParseError("pattern input needs shape and dtype");
  MetaPattern m;
  for (const auto& d : j.at("shape")) {
    if (!d.is_number_integer() && !is_wildcard(d)) throw ParseError("pattern dims must be integers or wildcards");
    m.dims.push_back(d);
  }
  m.dtype = j.at("dtype");
  if (!is_wildcard(m.dtype) && !(m.dtype.is_string() && dtype_from_name(m.dtype.get<std::string>())))
    throw SchemaError("pattern input has an unknown dtype");
  return m;
}

PatternGraph pattern_from_json(const Json& j, const KernelLibrary& lib) {
  if (!j.is_object() || !j.contains("inputs") || !j.contains("nodes") || !j.contains("outputs"))
    throw ParseError("pattern needs inputs, nodes and outputs");
  PatternGraph p;
  for (const auto& m : j.at("inputs")) p.inputs.push_back(meta_pattern_from_json(m));
  for (const auto& n : j.at("nodes")) {
    OperatorNode node = node_from_json(n);
    node.outputs.clear();
    p.nodes.push_back(std::move(node));
  }
  for (const auto& r : j.at("outputs")) p.outputs.push_back(output_ref_from_json(r));
  if (p.nodes.empty()) throw SchemaError("pattern has no nodes");
  if (p.outputs.empty()) throw SchemaError("pattern has no outputs");

  Graph shell;
  shell.name = "pattern";
  shell.inputs.resize(p.inputs.size());
  std::vector<bool> used(p.inputs.size(), false);
  for (const auto& n : p.nodes) {
    int outs = 1;
    if (is_fused_op(n.op)) {
      const auto* d = lib.find(n.op);
      if (!d) throw SchemaError("pattern uses undeclared kernel '" + n.op + "'");
      outs = static_cast<int>(d->semantics.outputs.size());
    } else {
      const OpInfo* info = PrimitiveRegistry::instance().find(n.op);
      if (!info) throw SchemaError("pattern uses unknown op_type '" + n.op + "'");
      const int a = static_cast<int>(n.inputs.size());
      if (a < info->min_arity || (info->max_arity >= 0 && a > info->max_arity))
        throw SchemaError("pattern node '" + n.id + "': arity " + std::to_string(a) + " not accepted");
    }
    for (const auto& r : n.inputs)
      if (r.is_input() && r.index >= 0 && r.index < static_cast<int>(used.size())) used[r.index] = true;
    OperatorNode copy = n;
    copy.outputs.resize(outs);
    shell.nodes.push_back(std::move(copy));
  }
  shell.outputs = p.outputs;
  check_structure(shell);
  for (std::size_t k = 0; k < used.size(); ++k)
    if (!used[k]) throw SchemaError("pattern input " + std::to_string(k) + " is never used");
  for (const auto& r : p.outputs)
    if (r.is_input()) throw SchemaError("pattern output cannot be a pattern input");
  return p;
}

FusedKernelDecl decl_from_json(const std::string& name, const Json& semantics, const Json& doc, bool exempt) {
  FusedKernelDecl d;
  d.name = name;
  d.semantics = kernel_program_from_json(semantics);
  d.declared_kernels = doc.value("kernels", 1);
  d.exempt = exempt;
  if (d.declared_kernels != 1)
    throw SchemaError("kernel '" + name + "' declares " + std::to_string(d.declared_kernels) +
                      " launches; the policy admits 1");
  return d;
}

}  // namespace

std::optional<CompilerPass> load_pass(const Json& doc, KernelLibrary& lib) {
  try {
    if (!doc.is_object()) throw ParseError("pass document must be an object");
    if (doc.contains("kernel") && !doc.contains("pattern")) {
      const Json& k = doc.at("kernel");
      if (!k.is_object() || !k.contains("name") || !k.contains("semantics"))
        throw ParseError("kernel document needs name and semantics");
      lib.add(decl_from_json(k.at("name").get<std::string>(), k.at("semantics"), k, k.value("exempt", false)));
      return std::nullopt;
    }
    for (const char* key : {"name", "pattern", "replacement"})
      if (!doc.contains(key)) throw ParseError(std::string("pass document missing '") + key + "'");
    CompilerPass pass;
    pass.name = doc.at("name").get<std::string>();
    pass.exempt = doc.value("exempt", false);
    pass.pattern = pattern_from_json(doc.at("pattern"), lib);

    const Json& rep = doc.at("replacement");
    if (!rep.is_object() || !rep.contains("kernel")) throw ParseError("replacement needs a kernel name");
    pass.replacement.kernel = rep.at("kernel").get<std::string>();
    const int n_in = static_cast<int>(pass.pattern.inputs.size());
    const int n_out = static_cast<int>(pass.pattern.outputs.size());
    if (rep.contains("args")) {
      pass.replacement.args = rep.at("args").get<std::vector<int>>();
    } else {
      pass.replacement.args.resize(n_in);
      std::iota(pass.replacement.args.begin(), pass.replacement.args.end(), 0);
    }
    for (int a : pass.replacement.args)
      if (a < 0 || a >= n_in) throw SchemaError("replacement references undeclared capture " + std::to_string(a));

    if (rep.contains("semantics")) {
      lib.add(decl_from_json(pass.replacement.kernel, rep.at("semantics"), rep, pass.exempt));
    } else if (!lib.contains(pass.replacement.kernel)) {
      throw SchemaError("replacement kernel '" + pass.replacement.kernel + "' is not declared");
    }
    const FusedKernelDecl& decl = *lib.find(pass.replacement.kernel);
    if (decl.semantics.arity != static_cast<int>(pass.replacement.args.size()))
      throw SchemaError("replacement passes " + std::to_string(pass.replacement.args.size()) + " args to '" +
                        decl.name + "', which takes " + std::to_string(decl.semantics.arity));
    const int k_out = static_cast<int>(decl.semantics.outputs.size());
    if (rep.contains("outputs")) {
      pass.replacement.output_wiring = rep.at("outputs").get<std::vector<int>>();
    } else {
      pass.replacement.output_wiring.resize(k_out);
      std::iota(pass.replacement.output_wiring.begin(), pass.replacement.output_wiring.end(), 0);
    }
    auto wiring = pass.replacement.output_wiring;
    std::sort(wiring.begin(), wiring.end());
    std::vector<int> expect(n_out);
    std::iota(expect.begin(), expect.end(), 0);
    if (static_cast<int>(wiring.size()) != k_out || wiring != expect)
      throw SchemaError("replacement of '" + pass.name + "' must wire its " + std::to_string(k_out) +
                        " outputs onto each of the " + std::to_string(n_out) + " pattern outputs exactly once");
    return pass;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("pass document: ") + e.what());
  }
}

std::optional<CompilerPass> load_pass(std::string_view document, KernelLibrary& lib) {
  Json j;
  try {
    j = Json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed pass document: ") + e.what());
  }
  return load_pass(j, lib);
}

PassSet load_pass_dir(const std::filesystem::path& dir) {
  auto read = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ParseError("cannot read '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  Json manifest;
  try {
    manifest = Json::parse(read(dir / "manifest.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed pass manifest: ") + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("passes") || !manifest.at("passes").is_array())
    throw ParseError("pass manifest needs a 'passes' list");
  PassSet set;
  for (const auto& f : manifest.at("passes")) {
    if (!f.is_string()) throw ParseError("pass manifest entries must be file names");
    const auto before = set.library.names();
    auto pass = load_pass(std::string_view(read(dir / f.get<std::string>())), set.library);
    if (pass) {
      set.passes.push_back(std::move(*pass));
    } else {
      for (const auto& n : set.library.names())
        if (std::find(before.begin(), before.end(), n) == before.end()) set.kernel_documents.push_back(n);
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Static integrity

namespace {

std::optional<std::string> find_blocked(const FusedKernelDecl& decl, const std::set<std::string>& block,
                                        const KernelLibrary* lib) {
  for (const auto& n : decl.semantics.nodes) {
    if (block.count(n.op)) return n.op;
    if (is_fused_op(n.op) && lib) {
      const FusedKernelDecl* callee = lib->find(n.op);
      if (callee && !callee->exempt)
        if (auto hit = find_blocked(*callee, block, lib)) return hit;
    }
  }
  return std::nullopt;
}

// Hash-consed structural expressions: equal ids mean equal computation trees.
class ExprTable {
 public:
  int leaf(int k) { return intern("in:" + std::to_string(k)); }
  int node(const std::string& op, const Attrs& attrs, const std::vector<int>& inputs, int out) {
    Json a = Json::object();
    for (const auto& [k, v] : attrs) a[k] = v;
    return intern(Json{op, a, inputs, out}.dump());
  }

 private:
  int intern(const std::string& key) { return ids_.emplace(key, static_cast<int>(ids_.size())).first->second; }
  std::map<std::string, int> ids_;
};

// Expression ids of a program's outputs; non-exempt fused callees are inlined.
std::vector<int> program_exprs(const std::vector<OperatorNode>& nodes, const std::vector<ValueRef>& outputs,
                               const std::vector<int>& leaves, const KernelLibrary& lib, ExprTable& table,
                               int depth = 0) {
  if (depth > 64) throw SchemaError("fused kernel nesting too deep");
  Graph shell;
  shell.inputs.resize(leaves.size());
  std::map<std::string, const OperatorNode*> by_id;
  for (const auto& n : nodes) {
    OperatorNode c = n;
    c.outputs.resize(1);
    if (is_fused_op(n.op))
      if (const auto* d = lib.find(n.op)) c.outputs.resize(d->semantics.outputs.size());
    shell.nodes.push_back(std::move(c));
    by_id[n.id] = &n;
  }
  std::map<ValueRef, int> ids;
  auto id_of = [&](const ValueRef& r) { return r.is_input() ? leaves.at(r.index) : ids.at(r); };
  for (const auto& id : topological_order(shell)) {
    const OperatorNode& n = *by_id.at(id);
    std::vector<int> ins;
    for (const auto& r : n.inputs) ins.push_back(id_of(r));
    const FusedKernelDecl* callee = is_fused_op(n.op) ? lib.find(n.op) : nullptr;
    if (callee && !callee->exempt) {
      const auto outs = program_exprs(callee->semantics.nodes, callee->semantics.outputs, ins, lib, table, depth + 1);
      for (std::size_t k = 0; k < outs.size(); ++k) ids[ValueRef::of_node(id, static_cast<int>(k))] = outs[k];
    } else {
      const int n_out = callee ? static_cast<int>(callee->semantics.outputs.size()) : 1;
      const Attrs attrs = callee ? Attrs{} : n.attrs;
      for (int k = 0; k < n_out; ++k) ids[ValueRef::of_node(id, k)] = table.node(n.op, attrs, ins, k);
    }
  }
  std::vector<int> out;
  for (const auto& r : outputs) out.push_back(id_of(r));
  return out;
}

IntegrityVerdict blocked(const std::string& op, const std::string& where) {
  return {false, "RuntimeError: blocked call: '" + op + "' in " + where, op};
}

}  // namespace

IntegrityVerdict static_integrity_check(const FusedKernelDecl& decl, const IntegrityPolicy& policy) {
  if (decl.exempt) return {};
  if (auto hit = find_blocked(decl, policy.blocklist, nullptr)) return blocked(*hit, "'" + decl.name + "'");
  return {};
}

IntegrityVerdict static_integrity_check(const CompilerPass& pass, const KernelLibrary& lib,
                                        const IntegrityPolicy& policy) {
  const FusedKernelDecl* decl = lib.find(pass.replacement.kernel);
  if (!decl) return {false, "replacement kernel '" + pass.replacement.kernel + "' is not declared", ""};
  if (!pass.exempt) {
    std::set<std::string> block = policy.blocklist;
    block.insert(std::string(kFusedPrefix) + pass.name);
    block.insert(decl->name);
    if (auto hit = find_blocked(*decl, block, &lib)) return blocked(*hit, "pass '" + pass.name + "'");
  }

  ExprTable table;
  std::vector<int> pattern_leaves, sem_leaves;
  for (std::size_t k = 0; k < pass.pattern.inputs.size(); ++k) pattern_leaves.push_back(table.leaf(static_cast<int>(k)));
  for (int a : pass.replacement.args) sem_leaves.push_back(table.leaf(a));
  const auto pat = program_exprs(pass.pattern.nodes, pass.pattern.outputs, pattern_leaves, lib, table);
  const auto sem = program_exprs(decl->semantics.nodes, decl->semantics.outputs, sem_leaves, lib, table);
  bool identical = sem.size() == pass.replacement.output_wiring.size();
  for (std::size_t k = 0; identical && k < sem.size(); ++k)
    identical = sem[k] == pat.at(pass.replacement.output_wiring[k]);
  if (identical) {
    const std::string op = decl->semantics.nodes.empty() ? decl->name : decl->semantics.nodes.back().op;
    return {false, "RuntimeError: blocked call: pass '" + pass.name + "' delegates to the pattern body ('" + op +
                       "' chain unchanged)", op};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Matching

namespace {

bool unify_value(const Json& p, const Json& h, Attrs& bindings) {
  if (p.is_string()) {
    const auto s = p.get<std::string>();
    if (s == "?") return true;
    if (s.size() > 1 && s[0] == '?') {
      auto [it, fresh] = bindings.emplace(s, h);
      return fresh || it->second == h;
    }
  }
  if (p.is_array() && h.is_array()) {
    if (p.size() != h.size()) return false;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (!unify_value(p[i], h[i], bindings)) return false;
    return true;
  }
  if (p.is_number() && h.is_number()) {
    if (p.is_number_integer() && h.is_number_integer()) return p.get<int64_t>() == h.get<int64_t>();
    return p.get<double>() == h.get<double>();
  }
  return p == h;
}

bool unify_meta(const MetaPattern& p, const TensorMeta& h, Attrs& bindings) {
  if (p.dims.size() != h.shape.size()) return false;
  for (std::size_t i = 0; i < p.dims.size(); ++i)
    if (!unify_value(p.dims[i], Json(h.shape[i]), bindings)) return false;
  return unify_value(p.dtype, Json(std::string(dtype_name(h.dtype))), bindings);
}

struct MatchState {
  std::map<std::string, std::string> nodes;   // pattern -> host
  std::map<std::string, std::string> forced;  // pattern -> host, from consumers
  std::set<std::string> used;
  std::vector<std::optional<ValueRef>> captured;
  Attrs bindings;
};

class Matcher {
 public:
  Matcher(const Graph& host, const PatternGraph& pattern) : host_(host), pattern_(pattern) {
    order_ = topological_order(host);
    for (std::size_t i = 0; i < order_.size(); ++i) pos_[order_[i]] = i;
    for (const auto& n : host.nodes)
      for (const auto& r : n.inputs)
        if (!r.is_input()) consumers_[r].push_back(n.id);
    for (const auto& r : host.outputs) host_outputs_.insert(r);

    Graph shell;
    shell.inputs.resize(pattern.inputs.size());
    for (const auto& n : pattern.nodes) {
      OperatorNode c = n;
      c.outputs.resize(1);
      shell.nodes.push_back(std::move(c));
      pnode_[n.id] = &n;
    }
    shell.outputs = pattern.outputs;
    auto porder = topological_order(shell);
    pattern_order_.assign(porder.rbegin(), porder.rend());
  }

  std::vector<Match> all() {
    MatchState s;
    s.captured.resize(pattern_.inputs.size());
    search(s, 0);
    return found_;
  }

  const std::map<std::string, std::size_t>& positions() const { return pos_; }

 private:
  void search(MatchState& s, std::size_t idx) {
    if (idx == pattern_order_.size()) {
      finish(s);
      return;
    }
    const OperatorNode& p = *pnode_.at(pattern_order_[idx]);
    auto f = s.forced.find(p.id);
    if (f != s.forced.end()) {
      MatchState next = s;
      if (assign(next, p, host_.node(f->second))) search(next, idx + 1);
      return;
    }
    for (const auto& hid : order_) {
      if (s.used.count(hid)) continue;
      MatchState next = s;
      if (assign(next, p, host_.node(hid))) search(next, idx + 1);
    }
  }

  bool assign(MatchState& s, const OperatorNode& p, const OperatorNode& h) {
    if (s.used.count(h.id)) return false;
    if (p.op != h.op || p.inputs.size() != h.inputs.size()) return false;
    if (p.attrs.size() != h.attrs.size()) return false;
    for (const auto& [k, v] : p.attrs) {
      auto it = h.attrs.find(k);
      if (it == h.attrs.end() || !unify_value(v, it->second, s.bindings)) return false;
    }
    for (std::size_t j = 0; j < p.inputs.size(); ++j) {
      const ValueRef& pr = p.inputs[j];
      const ValueRef& hr = h.inputs[j];
      if (pr.is_input()) {
        auto& cap = s.captured.at(pr.index);
        if (cap) {
          if (*cap != hr) return false;
        } else {
          if (!unify_meta(pattern_.inputs[pr.index], host_.meta_of(hr), s.bindings)) return false;
          cap = hr;
        }
      } else {
        if (hr.is_input() || hr.index != pr.index) return false;
        auto [it, fresh] = s.forced.emplace(pr.node, hr.node);
        if (!fresh && it->second != hr.node) return false;
        auto m = s.nodes.find(pr.node);
        if (m != s.nodes.end() && m->second != hr.node) return false;
      }
    }
    s.nodes[p.id] = h.id;
    s.used.insert(h.id);
    return true;
  }

  void finish(const MatchState& s) {
    Match m;
    m.nodes = s.nodes;
    m.bindings = s.bindings;
    for (const auto& c : s.captured) m.captured.push_back(*c);
    std::set<ValueRef> outs;
    for (const auto& r : pattern_.outputs) {
      ValueRef h = ValueRef::of_node(s.nodes.at(r.node), r.index);
      m.outputs.push_back(h);
      outs.insert(h);
    }
    // Escape rule.
    for (const auto& [pid, hid] : s.nodes) {
      const auto& hn = host_.node(hid);
      for (std::size_t k = 0; k < hn.outputs.size(); ++k) {
        ValueRef v = ValueRef::of_node(hid, static_cast<int>(k));
        if (outs.count(v)) continue;
        if (host_outputs_.count(v)) return;
        auto it = consumers_.find(v);
        if (it != consumers_.end())
          for (const auto& c : it->second)
            if (!s.used.count(c)) return;
      }
    }
    // Captured values must come from outside the match and not depend on it.
    std::set<std::string> downstream;
    std::deque<std::string> work;
    for (const auto& v : outs)
      if (auto it = consumers_.find(v); it != consumers_.end())
        for (const auto& c : it->second)
          if (!s.used.count(c)) work.push_back(c);
    while (!work.empty()) {
      const std::string id = work.front();
      work.pop_front();
      if (!downstream.insert(id).second) continue;
      const auto& n = host_.node(id);
      for (std::size_t k = 0; k < n.outputs.size(); ++k)
        if (auto it = consumers_.find(ValueRef::of_node(id, static_cast<int>(k))); it != consumers_.end())
          for (const auto& c : it->second) work.push_back(c);
    }
    for (const auto& c : m.captured)
      if (!c.is_input() && (s.used.count(c.node) || downstream.count(c.node))) return;
    found_.push_back(std::move(m));
  }

  const Graph& host_;
  const PatternGraph& pattern_;
  std::vector<std::string> order_;
  std::map<std::string, std::size_t> pos_;
  std::map<ValueRef, std::vector<std::string>> consumers_;
  std::set<ValueRef> host_outputs_;
  std::map<std::string, const OperatorNode*> pnode_;
  std::vector<std::string> pattern_order_;
  std::vector<Match> found_;
};

}  // namespace

std::vector<Match> match_pattern(const Graph& host, const PatternGraph& pattern) {
  Matcher matcher(host, pattern);
  auto all = matcher.all();
  const auto& pos = matcher.positions();
  auto key = [&](const Match& m) {
    std::vector<std::size_t> k;
    for (const auto& [p, h] : m.nodes) k.push_back(pos.at(h));
    std::sort(k.begin(), k.end());
    return k;
  };
  std::vector<std::pair<std::vector<std::size_t>, std::size_t>> keyed;
  for (std::size_t i = 0; i < all.size(); ++i) keyed.emplace_back(key(all[i]), i);
  std::stable_sort(keyed.begin(), keyed.end());
  std::set<std::string> taken;
  std::vector<Match> out;
  for (const auto& [k, i] : keyed) {
    const Match& m = all[i];
    if (std::any_of(m.nodes.begin(), m.nodes.end(), [&](const auto& e) { return taken.count(e.second); })) continue;
    for (const auto& [p, h] : m.nodes) taken.insert(h);
    out.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rewriting

RewriteResult apply_pass(const Graph& host, const CompilerPass& pass, const KernelLibrary& lib) {
  RewriteResult result{host, {}};
  const auto matches = match_pattern(host, pass.pattern);
  if (matches.empty()) return result;

  const auto order = topological_order(host);
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  std::set<std::string> ids;
  for (const auto& n : host.nodes) ids.insert(n.id);

  std::map<ValueRef, ValueRef> remap;
  std::set<std::string> removed;
  std::map<std::size_t, OperatorNode> inserted;  // storage position -> fused node
  for (const auto& m : matches) {
    std::vector<std::string> replaced;
    for (const auto& [p, h] : m.nodes) replaced.push_back(h);
    std::sort(replaced.begin(), replaced.end(), [&](const auto& a, const auto& b) { return pos[a] < pos[b]; });

    OperatorNode fused;
    fused.id = replaced.front() + "_fused";
    for (int k = 2; ids.count(fused.id); ++k) fused.id = replaced.front() + "_fused" + std::to_string(k);
    ids.insert(fused.id);
    fused.op = pass.replacement.kernel;
    fused.attrs = m.bindings;
    std::vector<TensorMeta> in_metas;
    for (int a : pass.replacement.args) {
      fused.inputs.push_back(m.captured.at(a));
      in_metas.push_back(host.meta_of(m.captured.at(a)));
    }
    try {
      fused.outputs = lib.infer(fused.op, in_metas, fused.attrs);
    } catch (const Error& e) {
      throw RewriteError("pass '" + pass.name + "': replacement cannot be instantiated: " + e.what());
    }
    if (fused.outputs.size() != pass.replacement.output_wiring.size())
      throw RewriteError("pass '" + pass.name + "': replacement output count changed");
    for (std::size_t k = 0; k < fused.outputs.size(); ++k) {
      const ValueRef& target = m.outputs.at(pass.replacement.output_wiring[k]);
      if (fused.outputs[k] != host.meta_of(target))
        throw RewriteError("pass '" + pass.name + "': replacement output " + std::to_string(k) + " is " +
                           fused.outputs[k].str() + ", pattern output is " + host.meta_of(target).str());
      remap[target] = ValueRef::of_node(fused.id, static_cast<int>(k));
    }
    std::size_t first = host.nodes.size();
    for (const auto& h : replaced) {
      removed.insert(h);
      first = std::min(first, static_cast<std::size_t>(host.index_of(h)));
    }
    result.log.push_back({pass.name, fused.id, replaced});
    inserted.emplace(first, std::move(fused));
  }

  Graph& g = result.graph;
  g.nodes.clear();
  for (std::size_t i = 0; i < host.nodes.size(); ++i) {
    if (auto it = inserted.find(i); it != inserted.end()) g.nodes.push_back(it->second);
    if (!removed.count(host.nodes[i].id)) g.nodes.push_back(host.nodes[i]);
  }
  auto fix = [&](ValueRef& r) {
    if (auto it = remap.find(r); it != remap.end()) r = it->second;
  };
  for (auto& n : g.nodes)
    for (auto& r : n.inputs) fix(r);
  for (auto& r : g.outputs) fix(r);
  for (const auto& n : g.nodes)
    for (const auto& r : n.inputs)
      if (!r.is_input() && removed.count(r.node))
        throw RewriteError("pass '" + pass.name + "': rewrite leaves a dangling edge to '" + r.node + "'");

  try {
    check_structure(g);
  } catch (const Error& e) {
    throw RewriteError("pass '" + pass.name + "': " + e.what());
  }
  if (g.inputs != host.inputs || g.output_metas() != host.output_metas())
    throw RewriteError("pass '" + pass.name + "': rewrite changed the graph interface");
  return result;
}

// ---------------------------------------------------------------------------
// Verification

SweepResult verify_sweep(const Graph& original, const Graph& rewritten, const KernelLibrary& lib,
                         const std::vector<uint64_t>& seeds, const std::vector<int>& ts, const ToleranceFn& tol,
                         const IntegrityPolicy& policy, NumericsConfig numerics) {
  SweepResult r;
  for (int t : ts) r.correct[t] = true;
  const DispatchGuard guard(policy.effective_whitelist());
  for (uint64_t seed : seeds) {
    const auto inputs = generate_inputs(original, seed);
    EvalResult rw, ref;
    try {
      if (policy.reverse_order) {
        Interpreter fresh_rw(&lib, numerics, &guard);
        rw = fresh_rw.evaluate(rewritten, inputs);
        Interpreter fresh_ref(&lib, numerics, nullptr);
        ref = fresh_ref.evaluate(original, inputs);
      } else {
        Interpreter shared(&lib, numerics, &guard);
        ref = shared.evaluate(original, inputs);
        rw = shared.evaluate(rewritten, inputs);
      }
    } catch (const std::exception& e) {
      r.category = ErrorCategory::runtime;
      r.message = e.what();
      for (auto& [t, ok] : r.correct) ok = false;
      r.max_abs_diff = std::numeric_limits<double>::infinity();
      return r;
    }
    r.rewritten_trace = rw.trace;
    if (rw.outputs.size() != ref.outputs.size()) {
      for (auto& [t, ok] : r.correct) ok = false;
      r.max_abs_diff = std::numeric_limits<double>::infinity();
      continue;
    }
    for (std::size_t i = 0; i < ref.outputs.size(); ++i) {
      const DType d = ref.outputs[i].meta.dtype;
      r.max_abs_diff = std::max(r.max_abs_diff, compare_tensor(rw.outputs[i], ref.outputs[i], 0.0, 0.0).max_abs_diff);
      for (int t : ts) {
        const auto [atol, rtol] = tol(d, t);
        if (!compare_tensor(rw.outputs[i], ref.outputs[i], atol, rtol).pass) r.correct[t] = false;
      }
    }
  }
  if (!rewritten.nodes.empty() && std::any_of(r.correct.begin(), r.correct.end(), [](const auto& e) { return !e.second; }))
    r.message = "outputs differ beyond tolerance (max_abs_diff " + std::to_string(r.max_abs_diff) + ")";
  return r;
}

ValidityResult verify_validity(const Graph& original, const Graph& rewritten, const KernelLibrary& lib,
                               const std::vector<uint64_t>& seeds, double atol, double rtol,
                               const IntegrityPolicy& policy, NumericsConfig numerics) {
  const auto sweep = verify_sweep(
      original, rewritten, lib, seeds, {0}, [&](DType, int) { return std::pair(atol, rtol); }, policy, numerics);
  ValidityResult v;
  v.max_abs_diff = sweep.max_abs_diff;
  v.message = sweep.message;
  if (sweep.category) {
    v.category = sweep.category;
  } else if (!sweep.correct.at(0)) {
    v.category = ErrorCategory::accuracy;
  } else {
    v.pass = true;
  }
  return v;
}

}  // namespace passkit
