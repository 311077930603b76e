#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "passkit/error.hpp"
#include "passkit/pass.hpp"
#include "passkit/pipeline.hpp"
#include "passkit/validate.hpp"

namespace fs = std::filesystem;
using namespace passkit;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitCorrupt = 2;

struct Globals {
  uint64_t seed = 0;
  std::string config;
  int workers = 1;
  bool wallclock = false;
  std::string report_format = "human";
};

RunConfig resolve(const Globals& g, const CLI::App& app) {
  RunConfig c;
  if (!g.config.empty()) c = load_run_config(g.config, c);
  if (app.count("--seed")) c.seed = g.seed;
  if (app.count("--workers")) c.workers = g.workers;
  if (g.wallclock) c.wallclock = true;
  c.cost.check();
  c.metric.check();
  return c;
}

void log_config(std::string_view command, const RunConfig& c) {
  Json header = c.to_json();
  header["command"] = command;
  std::cerr << "passkit config " << header.dump() << "\n";
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty()) std::cout << text;
  else write_text(out, text);
}

std::vector<fs::path> expand_paths(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    if (fs::is_directory(a)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file() && e.path().extension() == ".json") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(a);
    }
  }
  return out;
}

ValidationReport unreadable(const fs::path& p, const std::string& why) {
  ValidationReport r;
  r.graph = p.string();
  for (const char* name : {"runnable", "serializable", "decomposable", "statically_analyzable",
                           "custom_operator_accessible"})
    r.checks.push_back({name, false, why});
  return r;
}

int cmd_validate(const std::vector<std::string>& paths, const std::string& kernels, const Globals& g) {
  std::optional<PassSet> passes;
  if (!kernels.empty()) passes = load_pass_dir(kernels);
  const KernelLibrary* lib = passes ? &passes->library : nullptr;
  Json reports = Json::array();
  bool all_ok = true;
  for (const auto& p : expand_paths(paths)) {
    ValidationReport r;
    try {
      r = validate_graph(parse_graph(read_text(p)), lib);
      r.graph = p.string() + " (" + r.graph + ")";
    } catch (const Error& e) {
      r = unreadable(p, e.what());
    }
    all_ok = all_ok && r.ok();
    if (g.report_format == "human") {
      std::cout << (r.ok() ? "OK   " : "FAIL ") << r.graph << "\n";
      for (const auto& c : r.checks)
        std::cout << "  " << (c.ok ? "ok   " : "fail ") << c.name << (c.detail.empty() ? "" : ": " + c.detail) << "\n";
    }
    reports.push_back(r.to_json());
  }
  if (g.report_format == "machine") std::cout << Json{{"reports", reports}, {"ok", all_ok}}.dump(2) << "\n";
  return all_ok ? 0 : kExitCorrupt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"passkit: graph rewriting pass benchmark toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "RNG seed");
  app.add_option("--config", g.config, "JSON config with cost/metric overrides")->check(CLI::ExistingFile);
  app.add_option("--workers", g.workers, "parallel evaluation workers")->check(CLI::PositiveNumber);
  app.add_flag("--wallclock", g.wallclock, "measure wall-clock latency instead of the cost model");
  app.add_option("--report-format", g.report_format, "human or machine")
      ->check(CLI::IsMember({"human", "machine"}));

  auto* validate = app.add_subcommand("validate", "check graphs against the five sample constraints");
  std::vector<std::string> v_paths;
  std::string v_kernels;
  validate->add_option("paths", v_paths, "graph files or directories")->required();
  validate->add_option("--kernels", v_kernels, "pass directory providing fused kernels")->check(CLI::ExistingDirectory);

  auto* mine = app.add_subcommand("mine", "extract candidate subgraphs from a corpus");
  std::vector<std::string> m_corpus;
  std::string m_strategy = "fusible", m_out;
  bool m_no_generalize = false;
  mine->add_option("corpus", m_corpus, "graph files or directories")->required();
  mine->add_option("--strategy", m_strategy)->check(CLI::IsMember({"classical", "fusible", "single"}));
  mine->add_flag("--no-generalize", m_no_generalize, "skip shape/dtype variants");
  mine->add_option("--out", m_out)->required();

  auto* bench = app.add_subcommand("bench", "bucket samples into tasks and split eval/train");
  std::string b_samples, b_out;
  std::size_t b_n = 200;
  int b_stride = 3;
  bench->add_option("samples", b_samples, "directory written by mine")->required();
  bench->add_option("--n", b_n, "evaluation set size")->check(CLI::PositiveNumber);
  bench->add_option("--stride", b_stride, "stratified sampling stride")->check(CLI::PositiveNumber);
  bench->add_option("--out", b_out)->required();

  auto* eval = app.add_subcommand("eval", "evaluate a task's passes");
  std::string e_task, e_pass_dir, e_out;
  eval->add_option("task", e_task, "task directory")->required();
  eval->add_option("--pass-dir", e_pass_dir, "override the task's pass_dir");
  eval->add_option("--out", e_out, "records file (default stdout)");

  auto* score = app.add_subcommand("score", "aggregate evaluation records");
  std::vector<std::string> s_records;
  std::string s_out;
  score->add_option("records", s_records, "records files")->required();
  score->add_option("--out", s_out, "report file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  RunConfig config;
  try {
    config = resolve(g, app);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*validate) {
      log_config("validate", config);
      return cmd_validate(v_paths, v_kernels, g);
    }
    if (*mine) {
      log_config("mine", config);
      MineOptions opts;
      opts.strategy = *mine_strategy_from_name(m_strategy);
      opts.generalize = !m_no_generalize;
      if (opts.strategy == MineStrategy::classical) opts.bounds = kClassicalBounds;
      const auto samples = mine_corpus(load_graph_files(expand_paths(m_corpus)), opts);
      write_samples(samples, m_out);
      std::cerr << "mined " << samples.size() << " samples\n";
      return 0;
    }
    if (*bench) {
      log_config("bench", config);
      BenchOptions opts;
      opts.n = b_n;
      opts.stride = b_stride;
      opts.seed = config.seed;
      opts.runtime.cost = config.cost;
      const auto split = bench_samples(read_samples(b_samples), opts, b_out);
      for (const auto& w : split.warnings) std::cerr << "warning: " << w << "\n";
      std::cerr << "eval " << split.eval.size() << " tasks, train " << split.train.size() << " tasks\n";
      return 0;
    }
    if (*eval) {
      log_config("eval", config);
      std::optional<fs::path> pd;
      if (!e_pass_dir.empty()) pd = e_pass_dir;
      const auto records = eval_task(e_task, config, pd);
      emit(e_out, records_to_json(records).dump(2) + "\n");
      return 0;
    }
    if (*score) {
      log_config("score", config);
      std::vector<EvalRecord> records;
      for (const auto& p : s_records) {
        Json j;
        try {
          j = Json::parse(read_text(p));
        } catch (const nlohmann::json::parse_error& e) {
          throw ParseError(p + ": " + e.what());
        }
        for (auto& r : records_from_json(j)) records.push_back(std::move(r));
      }
      const auto report = summary_metrics(records, config.metric);
      emit(s_out, g.report_format == "machine" ? report.to_json().dump(2) + "\n" : report.to_human());
      return 0;
    }
  } catch (const ParseError& e) {
    std::cerr << "corrupt input: " << e.what() << "\n";
    return kExitCorrupt;
  } catch (const SchemaError& e) {
    std::cerr << "corrupt input: " << e.what() << "\n";
    return kExitCorrupt;
  } catch (const CycleError& e) {
    std::cerr << "corrupt input: " << e.what() << "\n";
    return kExitCorrupt;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
