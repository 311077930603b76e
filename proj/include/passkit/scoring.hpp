#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "passkit/category.hpp"
#include "passkit/dtype.hpp"
#include "passkit/graph.hpp"

namespace passkit {

struct MetricParams {
  double b = 0.1;  // base penalty, (0, 1)
  double p = 0.0;  // slowdown exponent, [0, 1)
  int num_categories = 3;
  int t_min = -10;

  int t_max() const { return num_categories + 1; }
  std::vector<int> t_range() const;
  void check() const;
};

MetricParams metric_params_from_json(const Json& j);
Json metric_params_to_json(const MetricParams& m);

inline constexpr int kReportT0 = -3;

struct EvalRecord {
  std::string id;
  std::string task;
  std::optional<double> speedup;  // present iff execution completed
  ErrorCategory category = ErrorCategory::none;
  std::map<int, bool> correct;  // t in [t_min, 0]
  double max_abs_diff = 0.0;
  DType dtype = DType::fp32;
  int kernels_before = 0;
  int kernels_after = 0;
  std::string message;
  bool excluded = false;  // unstable wall-clock sample; dropped before aggregation

  // t > 0 reuses the t = 0 verdict.
  bool correct_at(int t) const;
  Json to_json() const;
  static EvalRecord from_json(const Json& j);
};

// atol(t), rtol(t) = 10^(k t); t > 0 clamps to 0; int64/bool give (0, 0).
std::pair<double, double> tolerance_at(DType d, int t);

// s, s^(p+1), or b^[t < c].
double rectified_speedup(const EvalRecord& r, int t, const MetricParams& m);

// Geometric mean of rectified speedups. Throws Error when records is empty.
double es_score(const std::vector<EvalRecord>& records, int t, const MetricParams& m);

struct GammaFactor {
  double value = 1.0;
  bool defined = false;  // false when no record is erroneous at t
  int n_err = 0;
};
// b^(sum_c pi_c [t < c]) over records incorrect at t.
GammaFactor gamma_factor(const std::vector<EvalRecord>& records, int t, const MetricParams& m);

double weight_at(int t, const MetricParams& m);
// Throws Error when any t of the range is missing.
double as_score(const std::map<int, double>& es_by_t, const MetricParams& m);
// Weighted geometric mean of ES_t over the keys of `weights`.
double as_score(const std::map<int, double>& es_by_t, const std::map<int, double>& weights);

// Neumaier-compensated sum over values sorted ascending, so any input order gives the same bits.
double stable_sum(std::vector<double> values);
double geometric_mean(const std::vector<double>& values);

struct ScoreReport {
  MetricParams params;
  int t0 = kReportT0;
  std::size_t num_records = 0;
  std::size_t num_tasks = 0;
  std::map<int, double> es;           // ES_t
  std::map<int, GammaFactor> gamma;   // gamma_t
  std::map<int, double> gamma_check;  // |geo-mean of error penalties - gamma_t|
  double as = 0.0;
  std::map<double, double> fast_p;    // p -> fraction
  double sub_cr = 0.0;
  double samp_cr = 0.0;
  std::optional<double> gmean_speedup;
  std::vector<EvalRecord> records;

  Json to_json() const;
  std::string to_human() const;
};

inline constexpr double kFastThresholds[] = {0.5, 1.0, 1.5, 2.0};

// Summary table over the non-excluded records; tasks are identified by EvalRecord::task.
ScoreReport summary_metrics(const std::vector<EvalRecord>& records, const MetricParams& m, int t0 = kReportT0);

}  // namespace passkit
