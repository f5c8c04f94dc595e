#include "gst/estimators.hpp"

#include <cmath>
#include <map>

#include "doctest.h"
#include "gst/math.hpp"
#include "gst/precision.hpp"
#include "gst/rng.hpp"
#include "test_support.hpp"

using namespace gst;
using gst::testing::make_logistic_distribution;
using gst::testing::sample_snapshot;

namespace {

AnalysisSnapshot complete_snapshot(std::vector<ParticipantRecord> records) {
  AnalysisSnapshot s;
  const std::size_t n = records.size();
  s.records = std::move(records);
  s.c_l.assign(n, 1);
  s.c_y.assign(n, 1);
  s.p_l = s.p_y = 1.0;
  return s;
}

ParticipantRecord rec(double w, int a, int l, int y) {
  ParticipantRecord r;
  r.w = {w};
  r.a = a;
  r.l = l;
  r.y = y;
  return r;
}

AnalysisSnapshot flip_arms(AnalysisSnapshot s) {
  for (auto& r : s.records) r.a = 1 - r.a;
  return s;
}

// Stratified difference of stratum means over W cells; the collapse target
// for the saturated no-censoring TMLE.
double stratified_plug_in(const AnalysisSnapshot& s) {
  std::map<double, std::array<std::pair<double, double>, 2>> cells;  // w -> per-arm (sum, count)
  for (const auto& r : s.records) {
    auto& cell = cells[r.w[0]][r.a];
    cell.first += r.y;
    cell.second += 1.0;
  }
  double delta = 0.0;
  const double n = static_cast<double>(s.size());
  for (auto& [w, arms] : cells) {
    const double pw = (arms[0].second + arms[1].second) / n;
    delta += pw * (arms[1].first / arms[1].second - arms[0].first / arms[0].second);
  }
  return delta;
}

}  // namespace

TEST_CASE("unadjusted arm means and variance") {
  auto s = complete_snapshot({rec(0, 1, 0, 1), rec(0, 1, 0, 0), rec(0, 0, 0, 1)});
  const auto [m1, v1] = unadjusted_arm_mean(s, 1);
  CHECK(m1 == doctest::Approx(0.5));
  CHECK(v1 == doctest::Approx(0.25));  // s^2 = 0.5, /2

  auto all_ones = complete_snapshot({rec(0, 1, 0, 1), rec(0, 1, 0, 1), rec(0, 0, 0, 0)});
  const auto [m, v] = unadjusted_arm_mean(all_ones, 1);
  CHECK(m == doctest::Approx(1.0));
  CHECK(v == doctest::Approx(0.0));
  CHECK(unadjusted_ate(all_ones).degenerate);

  CHECK_THROWS(unadjusted_arm_mean(complete_snapshot({rec(0, 1, 0, 1)}), 0));
}

TEST_CASE("unadjusted ate is the difference of arm means and negates under relabel") {
  auto s = complete_snapshot({rec(0, 1, 0, 1), rec(0, 1, 0, 1), rec(0, 1, 0, 1), rec(0, 1, 0, 0),
                              rec(0, 1, 0, 1), rec(0, 1, 0, 1), rec(0, 1, 0, 1), rec(0, 1, 0, 0),
                              rec(0, 1, 0, 1), rec(0, 1, 0, 0), rec(0, 0, 0, 1), rec(0, 0, 0, 0),
                              rec(0, 0, 0, 1), rec(0, 0, 0, 0), rec(0, 0, 0, 1), rec(0, 0, 0, 0),
                              rec(0, 0, 0, 1), rec(0, 0, 0, 0), rec(0, 0, 0, 1), rec(0, 0, 0, 0)});
  const auto est = unadjusted_ate(s);
  CHECK(est.delta_hat == doctest::Approx(0.2));
  const auto flipped = unadjusted_ate(flip_arms(s));
  CHECK(flipped.delta_hat == doctest::Approx(-est.delta_hat));
  CHECK(flipped.variance_hat == doctest::Approx(est.variance_hat));
}

TEST_CASE("unadjusted variance matches the closed-form asymptotics") {
  // Bernoulli(0.6) outcomes, p_y = 0.5: scaled arm variance 0.24/(0.5 p_a).
  Rng rng(101);
  const int n = 100000;
  AnalysisSnapshot s;
  std::size_t n_y = 0;
  for (int i = 0; i < n; ++i) {
    ParticipantRecord r = rec(0.0, rng.bernoulli(0.5) ? 1 : 0, 0, rng.bernoulli(0.6) ? 1 : 0);
    r.id = i;
    s.records.push_back(r);
    const int cy = rng.bernoulli(0.5) ? 1 : 0;
    s.c_y.push_back(cy);
    s.c_l.push_back(1);
    n_y += cy;
  }
  s.p_y = static_cast<double>(n_y) / n;
  s.p_l = 1.0;
  const auto [m1, v1] = unadjusted_arm_mean(s, 1);
  // MC standard error of the scaled variance estimate is ~ sqrt(2/m) * avar.
  const double avar1 = 0.24 / (0.5 * 0.5);
  const double se1 = avar1 * std::sqrt(2.0 / (0.25 * n));
  CHECK(std::fabs(n * v1 - avar1) <= 3.0 * se1);
  CHECK(m1 == doctest::Approx(0.6).epsilon(0.02));

  // Scaled ATE variance: 2(0.24 + 0.24)/p_y at p_y = 0.5 here.
  const auto est = unadjusted_ate(s);
  const double avar = 2.0 * (0.24 + 0.24) / 0.5;
  CHECK(std::fabs(n * est.variance_hat - avar) <= 3.0 * avar * std::sqrt(2.0 / (0.25 * n)));
}

TEST_CASE("wald statistic") {
  EstimateResult e;
  e.delta_hat = 0.2;
  e.variance_hat = 0.01;
  CHECK(wald_statistic(e) == doctest::Approx(2.0));
  e.delta_hat = 0.0;
  CHECK(wald_statistic(e) == doctest::Approx(0.0));
  e.variance_hat = 0.0;
  CHECK_THROWS(wald_statistic(e));
}

TEST_CASE("wald statistic is standard normal under the null") {
  // 5,000 simulated null datasets; z should have mean ~0 and variance ~1.
  const auto d = make_logistic_distribution(0.5, 0.5, {0.1, 0.6, 0.0}, {-0.4, 0.8, 0.7, 0.0});
  Rng rng(103);
  const int n_trials = 5000;
  std::vector<double> zs;
  zs.reserve(n_trials);
  for (int t = 0; t < n_trials; ++t) {
    const auto snap = sample_snapshot(d, 400, 0.8, 0.95, rng);
    zs.push_back(wald_statistic(unadjusted_ate(snap)));
  }
  CHECK(std::fabs(mean(zs)) < 3.0 / std::sqrt(static_cast<double>(n_trials)));
  CHECK(sample_variance(zs) > 0.94);
  CHECK(sample_variance(zs) < 1.06);
}

TEST_CASE("saturated TMLE with no censoring collapses to the stratified estimate") {
  std::vector<ParticipantRecord> records;
  Rng rng(107);
  // Every (a, l, w) cell populated with interior cell means.
  for (int w = 0; w < 2; ++w)
    for (int a = 0; a < 2; ++a)
      for (int l = 0; l < 2; ++l) {
        const int reps = 3 + static_cast<int>(rng.below(4));
        const int ones = 1 + static_cast<int>(rng.below(reps - 1));
        for (int i = 0; i < reps + 2; ++i)
          records.push_back(rec(w, a, l, i < ones ? 1 : 0));
      }
  auto s = complete_snapshot(records);
  WorkingModelSpec spec = WorkingModelSpec::all_main_terms(1);
  spec.saturate = true;
  const auto est = tmle_ate(s, spec);
  CHECK_FALSE(est.targeting_fallback);
  CHECK(est.delta_hat == doctest::Approx(stratified_plug_in(s)).epsilon(1e-8));
  CHECK(std::fabs(est.eif_mean) < 1e-6);
}

TEST_CASE("tmle matches the unadjusted estimator when nothing is prognostic") {
  // Y independent of (W, L) given A; the two estimators share an influence
  // function, so their difference is higher order.
  const auto d = make_logistic_distribution(0.5, 0.5, {0.2, 0.8, 0.1}, {-0.3, 0.0, 0.0, 0.6});
  WorkingModelSpec spec = WorkingModelSpec::all_main_terms(1);
  Rng rng(109);
  const int n = 20000, reps = 12;
  double worst_ratio = 0.0;
  for (int r = 0; r < reps; ++r) {
    const auto snap = sample_snapshot(d, n, 0.75, 0.9, rng);
    const auto t = tmle_ate(snap, spec);
    const auto u = unadjusted_ate(snap);
    const double se = std::sqrt(u.variance_hat);
    worst_ratio = std::max(worst_ratio, std::fabs(t.delta_hat - u.delta_hat) / se);
  }
  // The difference should be a small fraction of one standard error.
  CHECK(worst_ratio < 0.25);
}

TEST_CASE("tmle under censoring is consistent and efficient for a correct law") {
  const auto d = make_logistic_distribution(0.45, 0.5, {-0.2, 1.0, 0.2}, {-0.9, 1.4, 1.0, 0.6});
  const double truth = d.mean_y(1) - d.mean_y(0);
  const double p_y = 0.65, p_l = 0.9;
  WorkingModelSpec spec = WorkingModelSpec::all_main_terms(1);
  Rng rng(113);
  const auto snap = sample_snapshot(d, 100000, p_y, p_l, rng);
  const auto est = tmle_ate(snap, spec);
  CHECK(std::fabs(est.delta_hat - truth) <= 3.0 * std::sqrt(est.variance_hat));
  CHECK(std::fabs(est.eif_mean) < 1e-6);
  // The EIF variance estimate should approach the semiparametric bound.
  const double bound = variance_bound_ate(d, p_y, p_l);
  CHECK(est.n_enrolled * est.variance_hat == doctest::Approx(bound).epsilon(0.08));
}

TEST_CASE("tmle is doubly robust to a broken outcome model") {
  const auto d = make_logistic_distribution(0.45, 0.5, {-0.2, 1.0, 0.2}, {-0.9, 1.4, 1.0, 0.6});
  const double truth = d.mean_y(1) - d.mean_y(0);
  WorkingModelSpec spec = WorkingModelSpec::all_main_terms(1);
  spec.outcome_terms_lw.clear();  // outcome fits reduced to intercept + L/A only
  spec.outcome_terms_w.clear();
  Rng rng(127);
  const auto snap = sample_snapshot(d, 100000, 0.65, 0.9, rng);
  const auto est = tmle_ate(snap, spec);
  CHECK(std::fabs(est.delta_hat - truth) <= 3.0 * std::sqrt(est.variance_hat));
}

TEST_CASE("tmle negates under arm relabeling") {
  const auto d = make_logistic_distribution(0.4, 0.5, {-0.1, 0.8, 0.3}, {-0.7, 1.1, 0.8, 0.5});
  WorkingModelSpec spec = WorkingModelSpec::all_main_terms(1);
  Rng rng(131);
  const auto snap = sample_snapshot(d, 5000, 0.7, 0.9, rng);
  const auto est = tmle_ate(snap, spec);
  const auto flipped = tmle_ate(flip_arms(snap), spec);
  CHECK(flipped.delta_hat == doctest::Approx(-est.delta_hat).epsilon(1e-6));
}

TEST_CASE("tmle error paths") {
  // One arm entirely missing among observed outcomes.
  auto s = complete_snapshot({rec(0, 1, 0, 1), rec(1, 1, 1, 0), rec(0, 1, 1, 1), rec(1, 1, 0, 0)});
  WorkingModelSpec spec = WorkingModelSpec::all_main_terms(1);
  CHECK_THROWS(tmle_ate(s, spec));
}

TEST_CASE("bootstrap variance flag") {
  const auto d = make_logistic_distribution(0.4, 0.5, {-0.1, 0.8, 0.3}, {-0.7, 1.1, 0.8, 0.5});
  WorkingModelSpec spec = WorkingModelSpec::all_main_terms(1);
  Rng rng(137);
  const auto snap = sample_snapshot(d, 4000, 0.7, 0.9, rng);
  TmleOptions opts;
  opts.bootstrap_variance = true;
  opts.n_bootstrap = 60;
  opts.seed = 99;
  const auto eif_est = tmle_ate(snap, spec);
  const auto boot_est = tmle_ate(snap, spec, opts);
  CHECK(boot_est.delta_hat == doctest::Approx(eif_est.delta_hat));
  CHECK(boot_est.variance_hat > 0.0);
  CHECK(boot_est.variance_hat / eif_est.variance_hat > 0.5);
  CHECK(boot_est.variance_hat / eif_est.variance_hat < 2.0);
  const auto boot_again = tmle_ate(snap, spec, opts);
  CHECK(boot_again.variance_hat == doctest::Approx(boot_est.variance_hat));
}
