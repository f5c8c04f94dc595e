#include "gst/trial.hpp"

#include <sstream>

#include "doctest.h"
#include "gst/rng.hpp"

using namespace gst;

namespace {

ParticipantRecord make_record(std::int64_t id, double enroll, double w0, int a, int l, int y) {
  ParticipantRecord r;
  r.id = id;
  r.enroll_time = enroll;
  r.w = {w0};
  r.a = a;
  r.l = l;
  r.y = y;
  return r;
}

}  // namespace

TEST_CASE("single record at the outcome delay boundary") {
  DelayConfig cfg;
  auto s = snapshot_at({make_record(0, 0.0, 1.0, 1, 1, 1)}, cfg.d_y, cfg);
  CHECK(s.c_l[0] == 1);
  CHECK(s.c_y[0] == 1);
  CHECK(s.p_l == 1.0);
  CHECK(s.p_y == 1.0);
}

TEST_CASE("mixed observation pattern") {
  DelayConfig cfg;
  const double t = cfg.d_y + 0.1;
  auto s = snapshot_at({make_record(0, 0.0, 1.0, 1, 1, 1), make_record(1, t - cfg.d_l, 0.0, 0, 1, 0)},
                       t, cfg);
  CHECK(s.c_l[0] == 1);
  CHECK(s.c_y[0] == 1);
  CHECK(s.c_l[1] == 1);
  CHECK(s.c_y[1] == 0);
  const auto [p_y, p_l] = observed_fractions(s);
  CHECK(p_y == doctest::Approx(0.5));
  CHECK(p_l == doctest::Approx(1.0));
}

TEST_CASE("interim pattern at a 140/year pace") {
  // 165 equally spaced enrollments over (0, 1.2]; analysis at 1.2 years.
  DelayConfig cfg;
  std::vector<ParticipantRecord> records;
  for (int i = 0; i < 165; ++i)
    records.push_back(make_record(i, 1.2 * (i + 1) / 165.0, 0.0, i % 2, 0, 0));
  auto s = snapshot_at(records, 1.2, cfg);
  int n_y = 0, n_l = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    n_y += s.c_y[i];
    n_l += s.c_l[i];
  }
  CHECK(std::abs(n_y - 96) <= 3);
  CHECK(std::abs((n_l - n_y) - 57) <= 3);
  CHECK(std::abs((165 - n_l) - 12) <= 3);
}

TEST_CASE("observed fractions at a late interim") {
  // 288 complete, 57 with only L, 12 pipeline-only.
  DelayConfig cfg;
  std::vector<ParticipantRecord> records;
  const double t = 3.0;
  for (int i = 0; i < 288; ++i) records.push_back(make_record(i, t - cfg.d_y, 0.0, i % 2, 1, 1));
  for (int i = 0; i < 57; ++i) records.push_back(make_record(288 + i, t - cfg.d_l, 0.0, i % 2, 1, 0));
  for (int i = 0; i < 12; ++i) records.push_back(make_record(345 + i, t, 0.0, i % 2, 0, 0));
  auto s = snapshot_at(records, t, cfg);
  const auto [p_y, p_l] = observed_fractions(s);
  CHECK(p_y == doctest::Approx(288.0 / 357.0));
  CHECK(p_l == doctest::Approx(345.0 / 357.0));
  CHECK(p_y == doctest::Approx(0.807).epsilon(0.001));
  CHECK(p_l == doctest::Approx(0.966).epsilon(0.001));
}

TEST_CASE("monotone censoring and fraction monotonicity on random inputs") {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    DelayConfig cfg;
    cfg.d_l = rng.uniform(0.01, 0.5);
    cfg.d_y = cfg.d_l + rng.uniform(0.0, 1.0);
    std::vector<ParticipantRecord> records;
    const int n = 2 + static_cast<int>(rng.below(40));
    for (int i = 0; i < n; ++i)
      records.push_back(make_record(i, rng.uniform(0.0, 2.0), 0.0, i % 2, 0, 0));
    double prev_py = 0.0, prev_pl = 0.0;
    for (double t = 2.0 + cfg.d_y; t < 4.5; t += 0.25) {
      auto s = snapshot_at(records, t, cfg);
      for (std::size_t i = 0; i < s.size(); ++i) CHECK(s.c_y[i] <= s.c_l[i]);
      CHECK(s.p_y >= prev_py);
      CHECK(s.p_l >= prev_pl);
      CHECK(s.p_y <= s.p_l);
      prev_py = s.p_y;
      prev_pl = s.p_l;
    }
  }
}

TEST_CASE("snapshot error paths") {
  DelayConfig cfg;
  CHECK_THROWS(snapshot_at({}, 1.0, cfg));
  // Analysis before any primary outcome.
  CHECK_THROWS(snapshot_at({make_record(0, 0.0, 1.0, 1, 0, 0)}, cfg.d_l, cfg));
  // Record enrolled after the analysis time.
  CHECK_THROWS(snapshot_at({make_record(0, 2.0, 1.0, 1, 0, 0)}, 1.0, cfg));
}

TEST_CASE("csv round trip preserves records") {
  Rng rng(13);
  std::vector<ParticipantRecord> records;
  for (int i = 0; i < 25; ++i) {
    ParticipantRecord r;
    r.id = i;
    r.enroll_time = rng.uniform(0.0, 3.0);
    r.w = {rng.normal(), rng.normal(), std::floor(rng.uniform(0.0, 5.0))};
    r.a = rng.bernoulli(0.5);
    r.l = rng.bernoulli(0.4);
    r.y = rng.bernoulli(0.3);
    records.push_back(r);
  }
  std::stringstream ss;
  write_csv(ss, records);
  const auto back = read_csv(ss);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].id == records[i].id);
    CHECK(back[i].enroll_time == records[i].enroll_time);
    REQUIRE(back[i].w.size() == records[i].w.size());
    for (std::size_t j = 0; j < records[i].w.size(); ++j) CHECK(back[i].w[j] == records[i].w[j]);
    CHECK(back[i].a == records[i].a);
    CHECK(back[i].l == records[i].l);
    CHECK(back[i].y == records[i].y);
  }
}

TEST_CASE("enrollment times are equally spaced") {
  std::vector<ParticipantRecord> records(5);
  assign_enrollment_times(records, 140.0);
  for (int i = 0; i < 5; ++i) CHECK(records[i].enroll_time == doctest::Approx((i + 1) / 140.0));
}
