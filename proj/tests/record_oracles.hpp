#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "passkit/scoring.hpp"

namespace passkit::testing {

// Mixed record sets: correct fast, correct slow, accuracy failures that pass from
// some t on, compilation and runtime failures.
inline std::vector<EvalRecord> random_records(std::mt19937_64& rng, std::size_t n, int t_min = -10) {
  std::vector<EvalRecord> out;
  std::uniform_int_distribution<int> kind(0, 4);
  std::uniform_real_distribution<double> logs(-3.0, 3.0);
  for (std::size_t i = 0; i < n; ++i) {
    EvalRecord r;
    r.id = "r" + std::to_string(i);
    r.task = "task" + std::to_string(i % 7);
    const int k = kind(rng);
    const double s = std::exp(logs(rng));
    switch (k) {
      case 0:
      case 1:
        r.speedup = s;
        for (int t = t_min; t <= 0; ++t) r.correct[t] = true;
        break;
      case 2: {
        r.speedup = s;
        r.category = ErrorCategory::accuracy;
        const int from = std::uniform_int_distribution<int>(t_min, 1)(rng);
        for (int t = t_min; t <= 0; ++t) r.correct[t] = t >= from;
        break;
      }
      case 3:
        r.category = ErrorCategory::compilation;
        for (int t = t_min; t <= 0; ++t) r.correct[t] = false;
        break;
      default:
        r.category = ErrorCategory::runtime;
        for (int t = t_min; t <= 0; ++t) r.correct[t] = false;
        break;
    }
    out.push_back(r);
  }
  return out;
}

// Direct transcription of the rectified speedup, independent of the library.
inline double oracle_rectified(const EvalRecord& r, int t, double b, double p) {
  bool ok = false;
  if (r.category == ErrorCategory::none || r.category == ErrorCategory::accuracy) {
    auto it = r.correct.find(t > 0 ? 0 : t);
    ok = it != r.correct.end() && it->second;
  }
  if (ok) return *r.speedup >= 1 ? *r.speedup : std::pow(*r.speedup, p + 1);
  const int c = r.category == ErrorCategory::compilation ? 2 : r.category == ErrorCategory::runtime ? 3 : 1;
  return t < c ? b : 1.0;
}

// Product of all terms then the N-th root, in long double.
inline double product_root(const std::vector<double>& v) {
  long double prod = 1.0L;
  for (double x : v) prod *= static_cast<long double>(x);
  return static_cast<double>(std::pow(prod, 1.0L / static_cast<long double>(v.size())));
}

inline double rel_err(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(b), 1e-300); }

}  // namespace passkit::testing
