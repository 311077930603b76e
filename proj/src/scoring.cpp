#include "passkit/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "passkit/error.hpp"

namespace passkit {

std::vector<int> MetricParams::t_range() const {
  std::vector<int> out;
  for (int t = t_min; t <= t_max(); ++t) out.push_back(t);
  return out;
}

void MetricParams::check() const {
  if (!(b > 0 && b < 1)) throw Error("metric parameter b must lie in (0, 1)");
  if (!(p >= 0 && p < 1)) throw Error("metric parameter p must lie in [0, 1)");
  if (num_categories < 1) throw Error("metric parameter num_categories must be >= 1");
  if (t_min > 0) throw Error("metric parameter t_min must be <= 0");
}

MetricParams metric_params_from_json(const Json& j) {
  MetricParams m;
  if (!j.is_object()) throw ParseError("metric parameters must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number()) throw ParseError("metric parameter '" + k + "' must be a number");
    if (k == "b") m.b = v.get<double>();
    else if (k == "p") m.p = v.get<double>();
    else if (k == "num_categories") m.num_categories = v.get<int>();
    else if (k == "t_min") m.t_min = v.get<int>();
    else throw ParseError("unknown metric parameter '" + k + "'");
  }
  m.check();
  return m;
}

Json metric_params_to_json(const MetricParams& m) {
  return Json{{"b", m.b}, {"p", m.p}, {"num_categories", m.num_categories}, {"t_min", m.t_min}};
}

// ---------------------------------------------------------------------------
// Records

bool EvalRecord::correct_at(int t) const {
  if (category == ErrorCategory::compilation || category == ErrorCategory::runtime) return false;
  auto it = correct.find(std::min(t, 0));
  if (it != correct.end()) return it->second;
  return category == ErrorCategory::none;
}

namespace {

Json real_to_json(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

double real_from_json(const Json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  throw ParseError("bad real value '" + s + "'");
}

}  // namespace

Json EvalRecord::to_json() const {
  Json c = Json::object();
  for (const auto& [t, ok] : correct) c[std::to_string(t)] = ok;
  return Json{{"id", id},
              {"task", task},
              {"speedup", speedup ? Json(*speedup) : Json(nullptr)},
              {"category", category_name(category)},
              {"correct", c},
              {"max_abs_diff", real_to_json(max_abs_diff)},
              {"dtype", dtype_name(dtype)},
              {"kernels_before", kernels_before},
              {"kernels_after", kernels_after},
              {"message", message},
              {"excluded", excluded}};
}

EvalRecord EvalRecord::from_json(const Json& j) {
  EvalRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.task = j.value("task", std::string());
    if (j.contains("speedup") && !j.at("speedup").is_null()) r.speedup = j.at("speedup").get<double>();
    auto c = category_from_name(j.at("category").get<std::string>());
    if (!c) throw ParseError("record '" + r.id + "': unknown category");
    r.category = *c;
    if (j.contains("correct"))
      for (const auto& [t, ok] : j.at("correct").items()) r.correct[std::stoi(t)] = ok.get<bool>();
    if (j.contains("max_abs_diff")) r.max_abs_diff = real_from_json(j.at("max_abs_diff"));
    if (j.contains("dtype")) {
      auto d = dtype_from_name(j.at("dtype").get<std::string>());
      if (!d) throw ParseError("record '" + r.id + "': unknown dtype");
      r.dtype = *d;
    }
    r.kernels_before = j.value("kernels_before", 0);
    r.kernels_after = j.value("kernels_after", 0);
    r.message = j.value("message", std::string());
    r.excluded = j.value("excluded", false);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("evaluation record: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ParseError("evaluation record: correctness keys must be integers");
  }
  if (r.speedup && !(*r.speedup > 0)) throw ParseError("record '" + r.id + "': speedup must be positive");
  return r;
}

// ---------------------------------------------------------------------------
// Metrics

std::pair<double, double> tolerance_at(DType d, int t) {
  if (t > 0) t = 0;
  double ka = 1.0, kr = 0.0;
  switch (d) {
    case DType::bf16: kr = 1.796 / 5.0; break;
    case DType::fp16: kr = 3.0 / 5.0; break;
    case DType::fp32: kr = 5.886 / 5.0; break;
    case DType::fp64: ka = kr = 7.0 / 5.0; break;
    case DType::int64:
    case DType::boolean: return {0.0, 0.0};
  }
  return {std::pow(10.0, ka * t), std::pow(10.0, kr * t)};
}

double rectified_speedup(const EvalRecord& r, int t, const MetricParams& m) {
  if (r.correct_at(t)) {
    if (!r.speedup) throw Error("record '" + r.id + "' is correct but has no speedup");
    const double s = *r.speedup;
    return s >= 1.0 ? s : std::pow(s, m.p + 1.0);
  }
  const int c = static_cast<int>(r.category == ErrorCategory::none ? ErrorCategory::accuracy : r.category);
  return t < c ? m.b : 1.0;
}

double stable_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0, comp = 0.0;
  for (double v : values) {
    const double t = sum + v;
    if (std::fabs(sum) >= std::fabs(v)) comp += (sum - t) + v;
    else comp += (v - t) + sum;
    sum = t;
  }
  return sum + comp;
}

double geometric_mean(const std::vector<double>& values) {
  if (values.empty()) throw Error("geometric mean of an empty set");
  std::vector<double> logs;
  logs.reserve(values.size());
  for (double v : values) {
    if (!(v > 0)) throw Error("geometric mean needs positive values");
    logs.push_back(std::log(v));
  }
  return std::exp(stable_sum(std::move(logs)) / static_cast<double>(values.size()));
}

double es_score(const std::vector<EvalRecord>& records, int t, const MetricParams& m) {
  if (records.empty()) throw Error("ES_t is undefined for an empty record set");
  std::vector<double> s;
  s.reserve(records.size());
  for (const auto& r : records) s.push_back(rectified_speedup(r, t, m));
  return geometric_mean(s);
}

GammaFactor gamma_factor(const std::vector<EvalRecord>& records, int t, const MetricParams& m) {
  std::map<int, int> per_category;
  GammaFactor g;
  for (const auto& r : records) {
    if (r.correct_at(t)) continue;
    const int c = static_cast<int>(r.category == ErrorCategory::none ? ErrorCategory::accuracy : r.category);
    ++per_category[c];
    ++g.n_err;
  }
  if (g.n_err == 0) return g;
  std::vector<double> terms;
  for (const auto& [c, n] : per_category)
    if (t < c) terms.push_back(static_cast<double>(n) / static_cast<double>(g.n_err));
  g.value = std::pow(m.b, stable_sum(terms));
  g.defined = true;
  return g;
}

double weight_at(int t, const MetricParams& m) {
  if (t <= -6 || t >= m.num_categories + 1) return 0.001;
  if (t <= -3) return 1.0;
  // (4/5)^k as one rounded division of exact integers
  const int k = t + 3;
  return std::ldexp(1.0, 2 * k) / std::pow(5.0, k);
}

double as_score(const std::map<int, double>& es_by_t, const std::map<int, double>& weights) {
  if (weights.empty()) throw Error("AS needs at least one weight");
  std::vector<double> num, den;
  for (const auto& [t, w] : weights) {
    auto it = es_by_t.find(t);
    if (it == es_by_t.end()) throw Error("AS needs ES_t for t = " + std::to_string(t));
    if (!(it->second > 0)) throw Error("AS needs positive ES_t");
    if (!(w > 0)) throw Error("AS weights must be positive");
    num.push_back(w * std::log(it->second));
    den.push_back(w);
  }
  return std::exp(stable_sum(num) / stable_sum(den));
}

double as_score(const std::map<int, double>& es_by_t, const MetricParams& m) {
  std::map<int, double> w;
  for (int t : m.t_range()) w[t] = weight_at(t, m);
  return as_score(es_by_t, w);
}

ScoreReport summary_metrics(const std::vector<EvalRecord>& all, const MetricParams& m, int t0) {
  m.check();
  ScoreReport rep;
  rep.params = m;
  rep.t0 = t0;
  for (const auto& r : all)
    if (!r.excluded) rep.records.push_back(r);
  const auto& records = rep.records;
  if (records.empty()) throw Error("no scorable records");
  rep.num_records = records.size();

  for (int t : m.t_range()) {
    rep.es[t] = es_score(records, t, m);
    const GammaFactor g = gamma_factor(records, t, m);
    rep.gamma[t] = g;
    if (g.defined) {
      std::vector<double> pen;
      for (const auto& r : records)
        if (!r.correct_at(t)) pen.push_back(rectified_speedup(r, t, m));
      rep.gamma_check[t] = std::fabs(geometric_mean(pen) - g.value);
    }
  }
  rep.as = as_score(rep.es, m);

  const double n = static_cast<double>(records.size());
  std::size_t n_correct = 0;
  std::vector<double> correct_s;
  for (const auto& r : records)
    if (r.correct_at(t0)) {
      ++n_correct;
      correct_s.push_back(*r.speedup);
    }
  for (double p : kFastThresholds) {
    std::size_t k = 0;
    for (const auto& r : records)
      if (r.correct_at(t0) && *r.speedup >= p) ++k;
    rep.fast_p[p] = static_cast<double>(k) / n;
  }
  rep.sub_cr = static_cast<double>(n_correct) / n;

  std::map<std::string, bool> task_ok;
  for (const auto& r : records) {
    auto [it, fresh] = task_ok.emplace(r.task, true);
    it->second = it->second && r.correct_at(t0);
  }
  rep.num_tasks = task_ok.size();
  std::size_t ok_tasks = 0;
  for (const auto& [t, ok] : task_ok) ok_tasks += ok ? 1 : 0;
  rep.samp_cr = static_cast<double>(ok_tasks) / static_cast<double>(task_ok.size());
  if (!correct_s.empty()) rep.gmean_speedup = geometric_mean(correct_s);
  return rep;
}

namespace {

std::string fmt(double x, int precision = 6) {
  std::ostringstream ss;
  ss << std::setprecision(precision) << x;
  return ss.str();
}

}  // namespace

Json ScoreReport::to_json() const {
  Json es_j = Json::object(), gamma_j = Json::object(), check_j = Json::object(), fast_j = Json::object();
  for (const auto& [t, v] : es) es_j[std::to_string(t)] = v;
  for (const auto& [t, g] : gamma)
    gamma_j[std::to_string(t)] = Json{{"value", g.value}, {"defined", g.defined}, {"n_err", g.n_err}};
  for (const auto& [t, v] : gamma_check) check_j[std::to_string(t)] = v;
  for (const auto& [p, v] : fast_p) fast_j["fast_" + fmt(p)] = v;
  Json recs = Json::array();
  for (const auto& r : records) recs.push_back(r.to_json());
  return Json{{"params", metric_params_to_json(params)},
              {"t0", t0},
              {"num_records", num_records},
              {"num_tasks", num_tasks},
              {"es", es_j},
              {"gamma", gamma_j},
              {"gamma_check", check_j},
              {"as", as},
              {"fast_p", fast_j},
              {"sub_cr", sub_cr},
              {"samp_cr", samp_cr},
              {"gmean_speedup", gmean_speedup ? Json(*gmean_speedup) : Json(nullptr)},
              {"records", recs}};
}

std::string ScoreReport::to_human() const {
  std::ostringstream out;
  out << "records " << num_records << ", tasks " << num_tasks << ", t0 = " << t0 << "\n";
  out << "AS        " << fmt(as) << "\n";
  for (const auto& [p, v] : fast_p) out << "fast_" << fmt(p) << std::string(p == 1.0 || p == 2.0 ? 5 : 3, ' ') << fmt(100 * v, 4) << "%\n";
  out << "Sub. CR   " << fmt(100 * sub_cr, 4) << "%\n";
  out << "Samp. CR  " << fmt(100 * samp_cr, 4) << "%\n";
  out << "G-Mean    " << (gmean_speedup ? fmt(*gmean_speedup) : std::string("n/a")) << "\n";
  out << "\n   t      ES_t     gamma_t  n_err\n";
  for (const auto& [t, v] : es) {
    const auto& g = gamma.at(t);
    out << std::setw(4) << t << "  " << std::setw(9) << fmt(v) << "  " << std::setw(9)
        << (g.defined ? fmt(g.value) : std::string("-")) << "  " << std::setw(5) << g.n_err << "\n";
  }
  double worst = 0.0;
  for (const auto& [t, v] : gamma_check) worst = std::max(worst, v);
  out << "gamma cross-check max |diff| = " << fmt(worst, 3) << "\n";
  return out.str();
}

}  // namespace passkit
