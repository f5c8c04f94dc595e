#include "gst/dgm.hpp"

#include <cmath>
#include <map>

#include "doctest.h"
#include "gst/estimators.hpp"
#include "gst/math.hpp"
#include "gst/precision.hpp"
#include "gst/rng.hpp"

using namespace gst;

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

PrecisionSummary sampled_summary(Setting setting, double delta, std::size_t n,
                                 std::uint64_t seed, double* delta_hat = nullptr) {
  DgmConfig cfg = canonical_config();
  cfg.setting = setting;
  cfg.delta = delta;
  auto snap = complete_snapshot(sample_trial(default_population(), n, cfg, seed));
  if (delta_hat) *delta_hat = unadjusted_ate(snap).delta_hat;
  return plug_in_summary(snap, WorkingModelSpec::all_main_terms(2));
}

}  // namespace

TEST_CASE("synthetic base is deterministic given the seed") {
  const auto a = build_synthetic_base();
  const auto b = build_synthetic_base();
  REQUIRE(a.rows.size() == 100);
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(a.rows[i].w_full == b.rows[i].w_full);
    CHECK(a.rows[i].a == b.rows[i].a);
    CHECK(a.rows[i].l_full == b.rows[i].l_full);
    CHECK(a.rows[i].y == b.rows[i].y);
  }
  const auto c = build_synthetic_base(kDefaultBaseSeed + 1);
  bool any_diff = false;
  for (std::size_t i = 0; i < 100; ++i) any_diff |= (a.rows[i].w_full != c.rows[i].w_full);
  CHECK(any_diff);
}

TEST_CASE("twin imputation tie goes to one") {
  CHECK(impute_binary(0.5) == 1);
  CHECK(impute_binary(0.4999) == 0);
  CHECK(impute_binary(0.75) == 1);
}

TEST_CASE("twins balance treatment within every covariate profile") {
  const auto base = build_synthetic_base();
  const auto aug = augment_twins(base);
  REQUIRE(aug.rows.size() == 200);
  int n_twins = 0;
  for (auto f : aug.twin_flag) n_twins += f;
  CHECK(n_twins == 100);

  // Twin i shares baseline covariates with original i and flips the arm.
  for (int i = 0; i < 100; ++i) {
    CHECK(aug.rows[i + 100].w_full == aug.rows[i].w_full);
    CHECK(aug.rows[i + 100].a == 1 - aug.rows[i].a);
  }

  // Equal arm counts within each covariate profile.
  std::map<std::array<double, 4>, std::array<int, 2>> counts;
  for (const auto& r : aug.rows) counts[r.w_full][r.a] += 1;
  for (const auto& [profile, c] : counts) CHECK(c[0] == c[1]);

  // Exact zero correlation between arm and each covariate.
  for (int j = 0; j < 4; ++j) {
    double mean_w = 0.0, mean_a = 0.0;
    for (const auto& r : aug.rows) {
      mean_w += r.w_full[j];
      mean_a += r.a;
    }
    mean_w /= 200.0;
    mean_a /= 200.0;
    double cov = 0.0;
    for (const auto& r : aug.rows) cov += (r.w_full[j] - mean_w) * (r.a - mean_a);
    CHECK(std::fabs(cov) < 1e-12);
  }
}

TEST_CASE("sample_trial is deterministic and respects the adjustment subset") {
  DgmConfig cfg = canonical_config();
  const auto& pop = default_population();
  const auto a = sample_trial(pop, 500, cfg, 99);
  const auto b = sample_trial(pop, 500, cfg, 99);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].w == b[i].w);
    CHECK(a[i].a == b[i].a);
    CHECK(a[i].l == b[i].l);
    CHECK(a[i].y == b[i].y);
    CHECK(a[i].w.size() == 2);  // (W1, W4) by default
  }
  const auto c = sample_trial(pop, 500, cfg, 100);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) any_diff |= (a[i].y != c[i].y);
  CHECK(any_diff);
}

TEST_CASE("non-prognostic settings erase the plug-in summaries") {
  const auto p = sampled_summary(Setting::progn_none, 0.122, 200000, 7);
  CHECK(p.r2_w < 0.02);
  CHECK(p.r2_l_given_w < 0.02);
  CHECK(p.gamma < 0.02);

  const auto pw = sampled_summary(Setting::progn_W, 0.122, 200000, 8);
  CHECK(pw.r2_l_given_w < 0.02);
  CHECK(pw.r2_w > 0.25);

  const auto pll = sampled_summary(Setting::progn_L, 0.122, 200000, 9);
  CHECK(pll.r2_w < 0.02);
  CHECK(pll.r2_l_given_w > 0.2);
}

TEST_CASE("null configuration has no effect and no heterogeneity") {
  double delta_hat = 0.0;
  const auto p = sampled_summary(Setting::progn_WL, 0.0, 400000, 11, &delta_hat);
  // 3 binomial-scale standard errors at n = 4e5.
  CHECK(std::fabs(delta_hat) < 3.0 * std::sqrt(2.0 * 0.25 / 100000.0));
  CHECK(p.gamma < 0.01);
}

TEST_CASE("setting modifications preserve the base marginals") {
  const auto& pop = default_population();
  double base_l = 0.0;
  for (int l : pop.l_pool) base_l += l;
  base_l /= static_cast<double>(pop.l_pool.size());
  double base_w1 = 0.0, base_w4 = 0.0;
  for (const auto& w : pop.w_pool) {
    base_w1 += w[0];
    base_w4 += w[3];
  }
  base_w1 /= 100.0;
  base_w4 /= 100.0;

  DgmConfig cfg = canonical_config();
  cfg.setting = Setting::progn_none;
  const std::size_t n = 200000;
  const auto records = sample_trial(pop, n, cfg, 13);
  double m_l = 0.0, m_w1 = 0.0, m_w4 = 0.0;
  for (const auto& r : records) {
    m_l += r.l;
    m_w1 += r.w[0];
    m_w4 += r.w[1];
  }
  m_l /= n;
  m_w1 /= n;
  m_w4 /= n;
  // z-tests at the 0.001 level.
  const double z = 3.29;
  CHECK(std::fabs(m_l - base_l) < z * std::sqrt(base_l * (1 - base_l) / n));
  CHECK(std::fabs(m_w1 - base_w1) < z * std::sqrt(base_w1 * (1 - base_w1) / n));
  CHECK(std::fabs(m_w4 - base_w4) < z * 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("calibrate converges immediately at an attained target") {
  // Evaluate the shipped generator once, then ask for exactly what it does.
  const auto start = default_generator_coeffs();
  CalibrationTargets targets;
  {
    DgmConfig cfg;
    cfg.reset_effect_prob = kCalibratedResetEffect;
    cfg.reset_noise_prob = kCalibratedResetNoise;
    auto snap = complete_snapshot(
        sample_trial(default_population(), 20000, cfg, split_seed(kDefaultBaseSeed, 1)));
    const auto p = plug_in_summary(snap, WorkingModelSpec::all_main_terms(2));
    targets.r2_w = p.r2_w;
    targets.r2_l_given_w = p.r2_l_given_w;
    targets.gamma = p.gamma;
    targets.delta = unadjusted_ate(snap).delta_hat;
  }
  const auto [pop, result] = calibrate(targets, kDefaultBaseSeed, start, 20000);
  CHECK(result.converged);
  CHECK(result.search_trace.size() == 1);
  CHECK(std::fabs(result.achieved.r2_w - targets.r2_w) <= 0.02);

  const auto [pop2, result2] = calibrate(targets, kDefaultBaseSeed, start, 20000);
  CHECK(result2.search_trace.size() == result.search_trace.size());
  CHECK(result2.achieved_delta == result.achieved_delta);
}

TEST_CASE("calibrate with zero targets is satisfied by a noise-only generator") {
  GeneratorCoeffs silent{};  // all-zero coefficients: pure coin flips
  CalibrationTargets targets;  // all zeros
  const auto [pop, result] = calibrate(targets, 21, silent, 20000);
  CHECK(result.converged);
  CHECK(std::fabs(result.achieved.r2_w) <= 0.02);
  CHECK(std::fabs(result.achieved_delta) <= 0.02);
}

TEST_CASE("population exports to the trial csv layout") {
  const auto recs = to_records(default_population());
  REQUIRE(recs.size() == 200);
  CHECK(recs[0].w.size() == 4);
  int n1 = 0;
  for (const auto& r : recs) n1 += r.a;
  CHECK(n1 == 100);  // exact balance after augmentation
}
