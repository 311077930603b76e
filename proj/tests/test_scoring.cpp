#include <doctest.h>

#include <algorithm>
#include <random>

#include "passkit/error.hpp"
#include "passkit/scoring.hpp"
#include "record_oracles.hpp"

using namespace passkit;
using passkit::testing::oracle_rectified;
using passkit::testing::product_root;
using passkit::testing::random_records;
using passkit::testing::rel_err;

namespace {

EvalRecord correct(double s, std::string task = "t") {
  EvalRecord r;
  r.id = "c" + std::to_string(s) + task;
  r.task = task;
  r.speedup = s;
  for (int t = -10; t <= 0; ++t) r.correct[t] = true;
  return r;
}

EvalRecord failed(ErrorCategory c, std::string id = "e") {
  EvalRecord r;
  r.id = id;
  r.task = "t";
  r.category = c;
  for (int t = -10; t <= 0; ++t) r.correct[t] = false;
  return r;
}

}  // namespace

TEST_CASE("tolerance schedule") {
  CHECK(tolerance_at(DType::fp32, -5).first == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(tolerance_at(DType::fp32, -5).second == doctest::Approx(1.3e-6).epsilon(0.01));
  CHECK(tolerance_at(DType::fp32, -5).second == std::pow(10.0, -5.886));
  for (DType d : {DType::fp64, DType::fp32, DType::fp16, DType::bf16}) {
    CHECK(tolerance_at(d, 0) == std::pair(1.0, 1.0));
    CHECK(tolerance_at(d, 2) == tolerance_at(d, 0));
    for (int t = -10; t < 0; ++t) {
      CHECK(tolerance_at(d, t).first < tolerance_at(d, t + 1).first);
      CHECK(tolerance_at(d, t).second < tolerance_at(d, t + 1).second);
    }
  }
  CHECK(tolerance_at(DType::bf16, -5).second == doctest::Approx(std::pow(10.0, -1.796)));
  CHECK(tolerance_at(DType::fp16, -5).second == doctest::Approx(1e-3));
  CHECK(tolerance_at(DType::fp64, -5).first == doctest::Approx(1e-7));
  CHECK(tolerance_at(DType::int64, -3) == std::pair(0.0, 0.0));
  CHECK(tolerance_at(DType::boolean, 0) == std::pair(0.0, 0.0));
}

TEST_CASE("rectified speedup cases") {
  MetricParams m;
  CHECK(rectified_speedup(correct(2.0), -4, m) == 2.0);
  MetricParams p1;
  p1.p = 0.5;
  CHECK(rectified_speedup(correct(0.5), 0, p1) == doctest::Approx(std::pow(0.5, 1.5)));
  CHECK(rectified_speedup(correct(0.5), 0, m) == 0.5);
  const EvalRecord acc = failed(ErrorCategory::accuracy);
  CHECK(rectified_speedup(acc, 0, m) == 0.1);
  CHECK(rectified_speedup(acc, 1, m) == 1.0);
  const EvalRecord rt = failed(ErrorCategory::runtime);
  CHECK(rectified_speedup(rt, 2, m) == 0.1);
  CHECK(rectified_speedup(rt, 3, m) == 1.0);
  CHECK_FALSE(rt.correct_at(3));
}

TEST_CASE("ES and gamma examples") {
  MetricParams m;
  CHECK(es_score({correct(2.0), correct(0.5)}, 0, m) == doctest::Approx(1.0).epsilon(1e-15));
  for (int t : m.t_range()) CHECK(es_score({correct(1.0), correct(1.0)}, t, m) == 1.0);
  CHECK_THROWS(es_score({}, 0, m));
  const std::vector<EvalRecord> errs{failed(ErrorCategory::accuracy, "a"), failed(ErrorCategory::runtime, "b")};
  CHECK(gamma_factor(errs, 1, m).value == doctest::Approx(std::sqrt(0.1)).epsilon(1e-12));
  CHECK(gamma_factor(errs, 4, m).value == 1.0);
  CHECK(gamma_factor({failed(ErrorCategory::compilation)}, 0, m).value == doctest::Approx(0.1));
  const auto none = gamma_factor({correct(1.5)}, 0, m);
  CHECK_FALSE(none.defined);
  CHECK(none.value == 1.0);
}

TEST_CASE("weights and AS") {
  MetricParams m;
  CHECK(weight_at(-4, m) == 1.0);
  CHECK(weight_at(-5, m) == 1.0);
  CHECK(weight_at(-3, m) == 1.0);
  CHECK(weight_at(0, m) == 0.512);
  CHECK(weight_at(-2, m) == 0.8);
  CHECK(weight_at(-10, m) == 0.001);
  CHECK(weight_at(-6, m) == 0.001);
  CHECK(weight_at(4, m) == 0.001);
  CHECK(weight_at(3, m) == 4096.0 / 15625.0);
  std::map<int, double> es;
  for (int t : m.t_range()) es[t] = 1.7;
  CHECK(as_score(es, m) == doctest::Approx(1.7).epsilon(1e-14));
  es.erase(2);
  CHECK_THROWS(as_score(es, m));

  std::mt19937_64 rng(3);
  std::map<int, double> any, equal;
  std::vector<double> vals;
  for (int t : m.t_range()) {
    any[t] = std::exp(std::uniform_real_distribution<double>(-2, 2)(rng));
    equal[t] = 0.37;
    vals.push_back(any[t]);
  }
  CHECK(rel_err(as_score(any, equal), product_root(vals)) < 1e-12);
}

TEST_CASE("randomized identities against the product-root oracle") {
  std::mt19937_64 rng(101);
  MetricParams m;
  for (int trial = 0; trial < 300; ++trial) {
    const auto recs = random_records(rng, 1 + rng() % 40);
    for (int t : m.t_range()) {
      std::vector<double> all, err;
      for (const auto& r : recs) {
        all.push_back(oracle_rectified(r, t, m.b, m.p));
        if (!r.correct_at(t)) err.push_back(all.back());
      }
      CHECK(rel_err(es_score(recs, t, m), product_root(all)) < 1e-12);
      const auto g = gamma_factor(recs, t, m);
      if (!err.empty()) {
        CHECK(g.defined);
        CHECK(rel_err(g.value, product_root(err)) < 1e-12);
      }
    }
  }
}

TEST_CASE("loosening t never breaks a passing record") {
  std::mt19937_64 rng(7);
  MetricParams m;
  for (const auto& r : random_records(rng, 500)) {
    bool seen = false;
    for (int t : m.t_range()) {
      if (seen) CHECK(r.correct_at(t));
      seen = seen || r.correct_at(t);
    }
  }
}

TEST_CASE("rectified speedup is non-decreasing in t except for slow records under b") {
  std::mt19937_64 rng(8);
  MetricParams m;
  for (const auto& r : random_records(rng, 500)) {
    const bool borderline = r.category == ErrorCategory::accuracy && r.speedup && *r.speedup < m.b;
    if (borderline) continue;
    for (int t = m.t_min; t < m.t_max(); ++t) CHECK(rectified_speedup(r, t, m) <= rectified_speedup(r, t + 1, m));
  }
  // a slow record that becomes correct drops below the penalty it had while failing
  EvalRecord slow;
  slow.id = "slow";
  slow.category = ErrorCategory::accuracy;
  slow.speedup = 0.05;
  for (int t = -10; t <= 0; ++t) slow.correct[t] = t >= -3;
  CHECK(rectified_speedup(slow, -4, m) == 0.1);
  CHECK(rectified_speedup(slow, -3, m) == 0.05);
}

TEST_CASE("eager baseline row") {
  std::vector<EvalRecord> recs;
  for (int i = 0; i < 12; ++i) recs.push_back(correct(1.0, "t" + std::to_string(i / 3)));
  const auto rep = summary_metrics(recs, {});
  CHECK(rep.fast_p.at(1.0) == 1.0);
  CHECK(rep.sub_cr == 1.0);
  CHECK(rep.samp_cr == 1.0);
  REQUIRE(rep.gmean_speedup);
  CHECK(*rep.gmean_speedup == 1.0);
  CHECK(rep.as == 1.0);
  CHECK(rep.num_tasks == 4);
}

TEST_CASE("report fractions") {
  EvalRecord bad = failed(ErrorCategory::accuracy, "x");
  bad.task = "t";
  const auto rep = summary_metrics({correct(1.2, "t"), bad}, {});
  CHECK(rep.sub_cr == 0.5);
  CHECK(rep.samp_cr == 0.0);

  std::vector<EvalRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back(correct(1.5, "t" + std::to_string(i)));
  const double before = summary_metrics(recs, {}).fast_p.at(1.0);
  recs[3].category = ErrorCategory::accuracy;
  for (auto& [t, ok] : recs[3].correct) ok = false;
  const double after = summary_metrics(recs, {}).fast_p.at(1.0);
  CHECK(before - after == doctest::Approx(0.1).epsilon(1e-15));

  const auto none = summary_metrics({failed(ErrorCategory::runtime)}, {});
  CHECK_FALSE(none.gmean_speedup);
  CHECK(none.to_json().at("gmean_speedup").is_null());

  EvalRecord skip = correct(9.0, "z");
  skip.excluded = true;
  CHECK(summary_metrics({correct(1.0), skip}, {}).num_records == 1);
  CHECK_THROWS(summary_metrics({skip}, {}));
}

TEST_CASE("reports are invariant under record order") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    auto recs = random_records(rng, 25);
    const auto a = summary_metrics(recs, {});
    std::shuffle(recs.begin(), recs.end(), rng);
    const auto b = summary_metrics(recs, {});
    CHECK(a.as == b.as);
    CHECK(a.es == b.es);
    for (const auto& [t, g] : a.gamma) CHECK(g.value == b.gamma.at(t).value);
    CHECK(a.fast_p == b.fast_p);
    CHECK(a.sub_cr == b.sub_cr);
    CHECK(a.samp_cr == b.samp_cr);
    CHECK(a.gmean_speedup == b.gmean_speedup);
    for (const auto& [t, d] : a.gamma_check) CHECK(d < 1e-12);
  }
}

TEST_CASE("record JSON round trip") {
  EvalRecord r = failed(ErrorCategory::runtime, "task/001");
  r.max_abs_diff = std::numeric_limits<double>::infinity();
  r.message = "RuntimeError: x";
  const Json j = r.to_json();
  CHECK(j.at("max_abs_diff") == "inf");
  CHECK(j.at("category") == "runtime");
  const EvalRecord back = EvalRecord::from_json(j);
  CHECK(back.id == r.id);
  CHECK(back.category == r.category);
  CHECK(std::isinf(back.max_abs_diff));
  CHECK(back.correct == r.correct);
  Json broken = j;
  broken["category"] = "mystery";
  CHECK_THROWS_AS(EvalRecord::from_json(broken), ParseError);
  const auto rep = summary_metrics({correct(1.3), r}, {});
  CHECK(rep.to_human().find("gamma cross-check") != std::string::npos);
}

TEST_CASE("metric parameter validation") {
  MetricParams m;
  m.b = 1.0;
  CHECK_THROWS(m.check());
  CHECK_THROWS_AS(metric_params_from_json(Json{{"q", 1}}), ParseError);
  CHECK(metric_params_from_json(Json{{"b", 0.2}}).b == 0.2);
}
