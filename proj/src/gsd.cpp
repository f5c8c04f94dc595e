#include "gst/gsd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gst/math.hpp"
#include "gst/parallel.hpp"
#include "gst/rng.hpp"

namespace gst {

void ErrorSpendingSpec::validate() const {
  if (k_stages < 2) throw std::invalid_argument("ErrorSpendingSpec: need at least 2 stages");
  if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0))
    throw std::invalid_argument("ErrorSpendingSpec: alpha/beta outside (0,1)");
  if (!(delta_alt > 0.0)) throw std::invalid_argument("ErrorSpendingSpec: delta_alt must be positive");
  if (!(f_power > 0.0) || !(g_power > 0.0))
    throw std::invalid_argument("ErrorSpendingSpec: spending powers must be positive");
  if (i_max < 0.0) throw std::invalid_argument("ErrorSpendingSpec: negative i_max");
}

double ErrorSpendingSpec::f(double t) const {
  return alpha * std::min(std::pow(std::max(t, 0.0), f_power), 1.0);
}

double ErrorSpendingSpec::g(double t) const {
  return beta * std::min(std::pow(std::max(t, 0.0), g_power), 1.0);
}

void JointStatisticModel::validate() const {
  if (k_stages < 2) throw std::invalid_argument("JointStatisticModel: need at least 2 stages");
  const int d = dim();
  if (static_cast<int>(info_interim.size()) != k_stages - 1 ||
      static_cast<int>(info_decision.size()) != k_stages)
    throw std::invalid_argument("JointStatisticModel: wrong information vector length");
  if (corr.rows() != d || corr.cols() != d)
    throw std::invalid_argument("JointStatisticModel: wrong correlation dimension");
  if (static_cast<int>(drift.size()) != d)
    throw std::invalid_argument("JointStatisticModel: wrong drift length");
  for (int k = 1; k < k_stages - 1; ++k)
    if (info_interim[k] < info_interim[k - 1])
      throw std::invalid_argument("JointStatisticModel: interim information must be non-decreasing");
  for (int k = 1; k < k_stages; ++k)
    if (info_decision[k - 1] < info_interim[k - 1])
      throw std::invalid_argument("JointStatisticModel: decision information below interim");
  for (double v : info_interim)
    if (!(v > 0.0)) throw std::invalid_argument("JointStatisticModel: nonpositive information");
}

JointStatisticModel make_canonical_model(const std::vector<double>& info_interim,
                                         const std::vector<double>& info_decision) {
  JointStatisticModel m;
  m.k_stages = static_cast<int>(info_decision.size());
  m.info_interim = info_interim;
  m.info_decision = info_decision;
  const int d = m.dim();
  std::vector<double> info(d);
  for (int k = 1; k < m.k_stages; ++k) info[m.interim_coord(k)] = info_interim[k - 1];
  for (int k = 1; k <= m.k_stages; ++k) info[m.decision_coord(k)] = info_decision[k - 1];
  m.corr.resize(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      m.corr(i, j) = std::sqrt(std::min(info[i], info[j]) / std::max(info[i], info[j]));
  m.drift.resize(d);
  for (int i = 0; i < d; ++i) m.drift[i] = std::sqrt(info[i]);
  m.validate();
  return m;
}

namespace {

Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& corr) {
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::MatrixXd jittered = corr;
  jittered.diagonal().array() += 1e-10;
  Eigen::LLT<Eigen::MatrixXd> retry(jittered);
  if (retry.info() == Eigen::Success) return retry.matrixL();
  throw std::invalid_argument("correlation matrix not positive semidefinite");
}

// n_draws x d matrix of joint draws with zero mean and the given correlation.
Eigen::MatrixXd sample_paths(const Eigen::MatrixXd& corr, int n_draws, std::uint64_t seed) {
  const Eigen::MatrixXd chol = cholesky_with_jitter(corr);
  const int d = static_cast<int>(corr.rows());
  Eigen::MatrixXd z(n_draws, d);
  Rng rng(seed);
  for (int i = 0; i < n_draws; ++i)
    for (int j = 0; j < d; ++j) z(i, j) = rng.normal();
  return z * chol.transpose();
}

constexpr double kProbTol = 1e-4;
constexpr int kMaxBisect = 60;

}  // namespace

std::pair<double, double> mvn_rect_prob(const Eigen::MatrixXd& corr, const Eigen::VectorXd& mean,
                                        const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                        int n_draws, std::uint64_t seed) {
  const int d = static_cast<int>(corr.rows());
  if (corr.cols() != d || mean.size() != d || lower.size() != d || upper.size() != d)
    throw std::invalid_argument("mvn_rect_prob: dimension mismatch");
  if (n_draws < 1) throw std::invalid_argument("mvn_rect_prob: need n_draws >= 1");

  if (d == 1) {
    // Exact univariate path; no Monte Carlo error.
    const double sd = std::sqrt(corr(0, 0));
    const double lo = (lower[0] - mean[0]) / sd;
    const double hi = (upper[0] - mean[0]) / sd;
    const double p = std::max(0.0, norm_cdf(hi) - norm_cdf(lo));
    return {p, 0.0};
  }

  const Eigen::MatrixXd x = sample_paths(corr, n_draws, seed);
  std::int64_t hits = 0;
  for (int i = 0; i < n_draws; ++i) {
    bool in = true;
    for (int j = 0; j < d; ++j) {
      const double v = x(i, j) + mean[j];
      if (v < lower[j] || v > upper[j]) {
        in = false;
        break;
      }
    }
    hits += in;
  }
  const double p = static_cast<double>(hits) / static_cast<double>(n_draws);
  const double se = std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(n_draws));
  return {p, se};
}

namespace {

// Shared-draw boundary solver state: one path matrix, survivor index sets for
// the null and the drifted alternative.
struct BoundarySolver {
  const JointStatisticModel& model;
  Eigen::MatrixXd paths;  // null paths; alternative adds delta * drift
  std::vector<std::int32_t> alive_null, alive_alt;
  double inv_n;

  BoundarySolver(const JointStatisticModel& m, int n_draws, std::uint64_t seed)
      : model(m), paths(sample_paths(m.corr, n_draws, seed)) {
    alive_null.resize(n_draws);
    alive_alt.resize(n_draws);
    for (int i = 0; i < n_draws; ++i) alive_null[i] = alive_alt[i] = i;
    inv_n = 1.0 / static_cast<double>(n_draws);
  }

  // P(survivors so far, coordinate >= bound) under the null.
  double tail_up_null(int coord, double bound) const {
    const double* col = paths.col(coord).data();
    std::int64_t c = 0;
    for (const auto i : alive_null) c += (col[i] >= bound);
    return static_cast<double>(c) * inv_n;
  }

  // P(survivors so far, coordinate <= bound) under drift `shift`.
  double tail_down_alt(int coord, double bound, double shift) const {
    const double* col = paths.col(coord).data();
    std::int64_t c = 0;
    for (const auto i : alive_alt) c += (col[i] + shift <= bound);
    return static_cast<double>(c) * inv_n;
  }

  // Balance function for the decision critical value at stage k:
  //   P(surv, S_k >= u, Sd < c) - P(surv, S_k <= l, Sd >= c), null.
  double balance(int coord_s, int coord_d, double u, double l, double c) const {
    const double* s = paths.col(coord_s).data();
    const double* dd = paths.col(coord_d).data();
    std::int64_t lhs = 0, rhs = 0;
    for (const auto i : alive_null) {
      if (s[i] >= u && dd[i] < c) ++lhs;
      if (s[i] <= l && dd[i] >= c) ++rhs;
    }
    return static_cast<double>(lhs - rhs) * inv_n;
  }

  double tail_up_final(int coord_d, double c) const {
    const double* dd = paths.col(coord_d).data();
    std::int64_t n = 0;
    for (const auto i : alive_null) n += (dd[i] >= c);
    return static_cast<double>(n) * inv_n;
  }

  void apply_continuation(int coord, double l, double u, double shift) {
    const double* col = paths.col(coord).data();
    auto keep_null = [&](std::int32_t i) { return col[i] > l && col[i] < u; };
    auto keep_alt = [&](std::int32_t i) { return col[i] + shift > l && col[i] + shift < u; };
    std::vector<std::int32_t> next;
    next.reserve(alive_null.size());
    for (auto i : alive_null)
      if (keep_null(i)) next.push_back(i);
    alive_null.swap(next);
    next.clear();
    next.reserve(alive_alt.size());
    for (auto i : alive_alt)
      if (keep_alt(i)) next.push_back(i);
    alive_alt.swap(next);
  }
};

// Bisection for a monotone probability function; stops at kProbTol in
// probability or kMaxBisect iterations.
template <typename ProbFn>
double bisect_to_target(double lo, double hi, double target, bool decreasing, ProbFn prob) {
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < kMaxBisect; ++it) {
    mid = 0.5 * (lo + hi);
    const double p = prob(mid);
    if (std::fabs(p - target) <= kProbTol) return mid;
    const bool above = p > target;
    if (above == decreasing)
      lo = mid;
    else
      hi = mid;
  }
  return mid;
}

}  // namespace

DesignBoundaries solve_boundaries(const JointStatisticModel& model, const ErrorSpendingSpec& spec,
                                  int n_draws, std::uint64_t seed) {
  model.validate();
  spec.validate();
  if (model.k_stages != spec.k_stages)
    throw std::invalid_argument("solve_boundaries: stage count mismatch");
  const int K = spec.k_stages;
  const double i_max = spec.i_max > 0.0 ? spec.i_max : model.info_decision.back();

  std::vector<double> t(K);  // spending times; t[K-1] = 1 at the final decision
  for (int k = 1; k < K; ++k) t[k - 1] = std::min(model.info_interim[k - 1] / i_max, 1.0);
  t[K - 1] = 1.0;

  BoundarySolver solver(model, n_draws, seed);
  DesignBoundaries b;
  b.u.resize(K - 1);
  b.l.resize(K - 1);
  b.c.resize(K);

  double f_prev = 0.0, g_prev = 0.0;
  for (int k = 1; k < K; ++k) {
    const int ic = model.interim_coord(k);
    const int dc = model.decision_coord(k);
    const double f_inc = spec.f(t[k - 1]) - f_prev;
    const double g_inc = spec.g(t[k - 1]) - g_prev;
    if (f_inc < -1e-12 || g_inc < -1e-12)
      throw std::runtime_error("solve_boundaries: spent error exceeds available");
    f_prev = spec.f(t[k - 1]);
    g_prev = spec.g(t[k - 1]);
    const double shift = spec.delta_alt * model.drift[ic];

    if (k == 1) {
      // Unconditional stage: exact univariate quantiles.
      b.u[0] = norm_quantile(1.0 - f_inc);
      b.l[0] = shift + norm_quantile(g_inc);
    } else {
      if (solver.tail_up_null(ic, -12.0) < f_inc - kProbTol)
        throw std::runtime_error("solve_boundaries: spent error exceeds available");
      b.u[k - 1] = bisect_to_target(-12.0, 12.0, f_inc, /*decreasing=*/true,
                                    [&](double v) { return solver.tail_up_null(ic, v); });
      b.l[k - 1] = bisect_to_target(-12.0, 12.0, g_inc, /*decreasing=*/false,
                                    [&](double v) { return solver.tail_down_alt(ic, v, shift); });
    }
    if (b.l[k - 1] >= b.u[k - 1]) throw std::runtime_error("solve_boundaries: design saturated");

    // Decision critical value balancing wrong-direction decisions.
    double lo = b.l[k - 1], hi = b.u[k - 1];
    const double u_k = b.u[k - 1], l_k = b.l[k - 1];
    auto h = [&](double c) { return solver.balance(ic, dc, u_k, l_k, c); };
    if (h(lo) > 0.0) lo = -12.0;
    if (h(hi) < 0.0) hi = 12.0;
    b.c[k - 1] = bisect_to_target(lo, hi, 0.0, /*decreasing=*/false, h);

    solver.apply_continuation(ic, b.l[k - 1], b.u[k - 1], shift);
  }

  // Final decision: remaining Type I error among never-stopped paths.
  const double f_final = spec.alpha - f_prev;
  if (f_final < -1e-12) throw std::runtime_error("solve_boundaries: spent error exceeds available");
  const int dcK = model.decision_coord(K);
  if (solver.tail_up_final(dcK, -12.0) < f_final - kProbTol)
    throw std::runtime_error("solve_boundaries: spent error exceeds available");
  b.c[K - 1] = bisect_to_target(-12.0, 12.0, f_final, /*decreasing=*/true,
                                [&](double v) { return solver.tail_up_final(dcK, v); });
  return b;
}

// ---- Simulation harness ------------------------------------------------------

namespace {

// Interim k is scheduled when round(k/K * n_max) participants have the
// primary outcome observed.
std::vector<int> interim_outcome_counts(int k_stages, int n_max) {
  std::vector<int> c(k_stages - 1);
  for (int k = 1; k < k_stages; ++k)
    c[k - 1] = static_cast<int>(std::lround(static_cast<double>(k) * n_max / k_stages));
  return c;
}

std::size_t enrolled_by(const std::vector<ParticipantRecord>& trial, double time) {
  std::size_t n = 0;
  while (n < trial.size() && trial[n].enroll_time <= time) ++n;
  return n;
}

std::vector<ParticipantRecord> prefix(const std::vector<ParticipantRecord>& trial, std::size_t n) {
  return {trial.begin(), trial.begin() + static_cast<std::ptrdiff_t>(n)};
}

struct AnalysisPath {
  std::vector<double> delta;  // 2K-1, model coordinate order
  std::vector<double> z;
  std::vector<int> n_enrolled;  // per interim, plus n_max last
  bool valid = false;
};

// Estimator at every interim and decision analysis of a never-stopped trial.
AnalysisPath replay_all_analyses(const std::vector<ParticipantRecord>& trial,
                                 const DesignSkeleton& skeleton, EstimatorKind kind,
                                 const WorkingModelSpec& wm) {
  const int K = skeleton.k_stages;
  const auto counts = interim_outcome_counts(K, skeleton.n_max);
  AnalysisPath path;
  path.delta.assign(2 * K - 1, 0.0);
  path.z.assign(2 * K - 1, 0.0);
  path.n_enrolled.assign(K, skeleton.n_max);
  for (int k = 1; k < K; ++k) {
    const double t_k = trial[counts[k - 1] - 1].enroll_time + skeleton.delays.d_y;
    const std::size_t n_enr = enrolled_by(trial, t_k);
    path.n_enrolled[k - 1] = static_cast<int>(n_enr);
    auto snap = snapshot_at(prefix(trial, n_enr), t_k, skeleton.delays);
    const EstimateResult interim = estimate(snap, kind, wm);
    path.delta[k - 1] = interim.delta_hat;
    path.z[k - 1] = wald_statistic(interim);
    auto dsnap = snapshot_complete(prefix(trial, n_enr), skeleton.delays);
    const EstimateResult decision = estimate(dsnap, kind, wm);
    path.delta[K - 1 + k - 1] = decision.delta_hat;
    path.z[K - 1 + k - 1] = wald_statistic(decision);
  }
  auto final_snap = snapshot_complete(trial, skeleton.delays);
  const EstimateResult final_est = estimate(final_snap, kind, wm);
  path.delta[2 * K - 2] = final_est.delta_hat;
  path.z[2 * K - 2] = wald_statistic(final_est);
  path.valid = true;
  return path;
}

std::vector<ParticipantRecord> make_trial(const DgmConfig& cfg, const DesignSkeleton& skeleton,
                                          std::uint64_t seed) {
  auto records = sample_trial(default_population(), skeleton.n_max, cfg, seed);
  assign_enrollment_times(records, skeleton.delays.enroll_rate);
  return records;
}

}  // namespace

JointStatisticModel estimate_joint_covariance(const DgmConfig& dgm_cfg,
                                              const DesignSkeleton& skeleton,
                                              EstimatorKind estimator_kind, int m_trials,
                                              std::uint64_t seed, int workers) {
  if (m_trials < 1000)
    throw std::invalid_argument("estimate_joint_covariance: need m_trials >= 1000");
  skeleton.delays.validate();
  const int K = skeleton.k_stages;
  const int d = 2 * K - 1;
  const WorkingModelSpec wm = WorkingModelSpec::all_main_terms(static_cast<int>(dgm_cfg.adjust_w.size()));

  std::vector<AnalysisPath> paths(m_trials);
  parallel_for(m_trials, workers, [&](std::size_t tr) {
    try {
      const auto trial = make_trial(dgm_cfg, skeleton, split_seed(seed, tr));
      paths[tr] = replay_all_analyses(trial, skeleton, estimator_kind, wm);
    } catch (const std::exception&) {
      paths[tr].valid = false;
    }
  });

  std::vector<const AnalysisPath*> ok;
  ok.reserve(m_trials);
  for (const auto& p : paths)
    if (p.valid) ok.push_back(&p);
  if (ok.size() < static_cast<std::size_t>(m_trials) * 99 / 100)
    throw std::runtime_error("estimate_joint_covariance: estimator failed in more than 1% of trials");
  const double m = static_cast<double>(ok.size());

  Eigen::VectorXd z_mean = Eigen::VectorXd::Zero(d);
  std::vector<double> d_mean(d, 0.0);
  for (const auto* p : ok)
    for (int j = 0; j < d; ++j) {
      z_mean[j] += p->z[j];
      d_mean[j] += p->delta[j];
    }
  z_mean /= m;
  for (auto& v : d_mean) v /= m;

  Eigen::MatrixXd z_cov = Eigen::MatrixXd::Zero(d, d);
  std::vector<double> d_var(d, 0.0);
  for (const auto* p : ok) {
    Eigen::VectorXd zc(d);
    for (int j = 0; j < d; ++j) {
      zc[j] = p->z[j] - z_mean[j];
      d_var[j] += (p->delta[j] - d_mean[j]) * (p->delta[j] - d_mean[j]);
    }
    z_cov.noalias() += zc * zc.transpose();
  }
  z_cov /= (m - 1.0);
  for (auto& v : d_var) v /= (m - 1.0);

  JointStatisticModel model;
  model.k_stages = K;
  model.corr.resize(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      model.corr(i, j) = z_cov(i, j) / std::sqrt(z_cov(i, i) * z_cov(j, j));
  model.drift.resize(d);
  for (int j = 0; j < d; ++j) {
    if (!(d_var[j] > 0.0)) throw std::runtime_error("estimate_joint_covariance: degenerate analysis");
    model.drift[j] = std::sqrt(1.0 / d_var[j]);
  }
  model.info_interim.resize(K - 1);
  model.info_decision.resize(K);
  for (int k = 1; k < K; ++k) model.info_interim[k - 1] = 1.0 / d_var[model.interim_coord(k)];
  for (int k = 1; k <= K; ++k) model.info_decision[k - 1] = 1.0 / d_var[model.decision_coord(k)];
  model.validate();
  return model;
}

TrialOutcome apply_stopping_procedure(const std::vector<double>& interim_z,
                                      const std::vector<double>& decision_z,
                                      const std::vector<int>& n_enrolled,
                                      const DesignBoundaries& boundaries) {
  const int K = static_cast<int>(decision_z.size());
  if (static_cast<int>(interim_z.size()) != K - 1 ||
      static_cast<int>(boundaries.u.size()) != K - 1 ||
      static_cast<int>(boundaries.c.size()) != K ||
      static_cast<int>(n_enrolled.size()) != K)
    throw std::invalid_argument("apply_stopping_procedure: size mismatch");
  for (int k = 1; k < K; ++k) {
    const double s_k = interim_z[k - 1];
    if (s_k <= boundaries.l[k - 1] || s_k >= boundaries.u[k - 1])
      return {k, decision_z[k - 1] >= boundaries.c[k - 1], n_enrolled[k - 1]};
  }
  return {K, decision_z[K - 1] >= boundaries.c[K - 1], n_enrolled[K - 1]};
}

TrialOutcome run_group_sequential(const std::vector<ParticipantRecord>& trial,
                                  const DesignBoundaries& boundaries,
                                  const DesignSkeleton& skeleton, EstimatorKind estimator_kind) {
  const int K = skeleton.k_stages;
  if (static_cast<int>(trial.size()) != skeleton.n_max)
    throw std::invalid_argument("run_group_sequential: trial size differs from n_max");
  const WorkingModelSpec wm =
      WorkingModelSpec::all_main_terms(static_cast<int>(trial.front().w.size()));
  const AnalysisPath path = replay_all_analyses(trial, skeleton, estimator_kind, wm);
  std::vector<double> interim_z(path.z.begin(), path.z.begin() + (K - 1));
  std::vector<double> decision_z(path.z.begin() + (K - 1), path.z.end());
  return apply_stopping_procedure(interim_z, decision_z, path.n_enrolled, boundaries);
}

namespace {

struct BatchResult {
  double reject_rate = 0.0;
  double ess = 0.0;
  std::vector<double> stage_dist;
  int n_failed = 0;
};

BatchResult simulate_batch(const DgmConfig& cfg, const DesignBoundaries& bounds,
                           const DesignSkeleton& skeleton, EstimatorKind kind, int n_trials,
                           std::uint64_t seed, int workers) {
  std::vector<TrialOutcome> outcomes(n_trials);
  std::vector<std::uint8_t> ok(n_trials, 0);
  parallel_for(n_trials, workers, [&](std::size_t tr) {
    try {
      const auto trial = make_trial(cfg, skeleton, split_seed(seed, tr));
      outcomes[tr] = run_group_sequential(trial, bounds, skeleton, kind);
      ok[tr] = 1;
    } catch (const std::exception&) {
      ok[tr] = 0;
    }
  });
  BatchResult res;
  res.stage_dist.assign(skeleton.k_stages, 0.0);
  int n_ok = 0;
  for (int i = 0; i < n_trials; ++i) {
    if (!ok[i]) {
      ++res.n_failed;
      continue;
    }
    ++n_ok;
    res.reject_rate += outcomes[i].rejected;
    res.ess += outcomes[i].n_enrolled;
    res.stage_dist[outcomes[i].stop_stage - 1] += 1.0;
  }
  if (n_ok == 0) throw std::runtime_error("simulate_batch: all trials failed");
  res.reject_rate /= n_ok;
  res.ess /= n_ok;
  for (auto& v : res.stage_dist) v /= n_ok;
  return res;
}

}  // namespace

OperatingCharacteristics simulate_operating_characteristics(const DgmConfig& dgm_cfg,
                                                            const ErrorSpendingSpec& spec,
                                                            EstimatorKind estimator_kind, int n_max,
                                                            int n_trials, std::uint64_t seed,
                                                            int workers) {
  spec.validate();
  DesignSkeleton skeleton;
  skeleton.k_stages = spec.k_stages;
  skeleton.n_max = n_max;

  // Boundaries come from the null configuration of the same prognostic
  // setting; the alternative enters only through the drift.
  DgmConfig null_cfg = dgm_cfg;
  null_cfg.delta = 0.0;
  DgmConfig alt_cfg = dgm_cfg;
  alt_cfg.delta = 0.122;

  const JointStatisticModel model = estimate_joint_covariance(
      null_cfg, skeleton, estimator_kind, 2000, split_seed(seed, 1000001), workers);
  ErrorSpendingSpec espec = spec;
  if (espec.i_max == 0.0) espec.i_max = model.info_decision.back();
  const DesignBoundaries bounds = solve_boundaries(model, espec, 1 << 20, split_seed(seed, 1000002));

  const BatchResult null_res =
      simulate_batch(null_cfg, bounds, skeleton, estimator_kind, n_trials,
                     split_seed(seed, 1000003), workers);
  const BatchResult alt_res =
      simulate_batch(alt_cfg, bounds, skeleton, estimator_kind, n_trials,
                     split_seed(seed, 1000004), workers);

  OperatingCharacteristics oc;
  oc.type_i = null_res.reject_rate;
  oc.power = alt_res.reject_rate;
  oc.ess_null = null_res.ess;
  oc.ess_alt = alt_res.ess;
  oc.stop_stage_dist = alt_res.stage_dist;
  oc.n_trials = n_trials;
  oc.n_failed = null_res.n_failed + alt_res.n_failed;
  return oc;
}

int search_n_max(const DgmConfig& dgm_cfg, const ErrorSpendingSpec& spec,
                 EstimatorKind estimator_kind, double target_power, int n_trials_per_probe,
                 std::uint64_t seed, int workers) {
  if (!(target_power > 0.0 && target_power < 1.0))
    throw std::invalid_argument("search_n_max: target_power outside (0,1)");
  const double need = target_power - 0.01;

  auto probe_power = [&](int n_max) {
    DesignSkeleton skeleton;
    skeleton.k_stages = spec.k_stages;
    skeleton.n_max = n_max;
    DgmConfig null_cfg = dgm_cfg;
    null_cfg.delta = 0.0;
    DgmConfig alt_cfg = dgm_cfg;
    alt_cfg.delta = 0.122;
    const JointStatisticModel model = estimate_joint_covariance(
        null_cfg, skeleton, estimator_kind, 2000, split_seed(seed, 2000001), workers);
    ErrorSpendingSpec espec = spec;
    if (espec.i_max == 0.0) espec.i_max = model.info_decision.back();
    const DesignBoundaries bounds =
        solve_boundaries(model, espec, 1 << 20, split_seed(seed, 2000002));
    return simulate_batch(alt_cfg, bounds, skeleton, estimator_kind, n_trials_per_probe,
                          split_seed(seed, 2000003), workers)
        .reject_rate;
  };

  // Grid n = 100 + 10*i. Binary search assuming power is monotone in n.
  int lo = 0, hi = 90;
  if (probe_power(100 + 10 * hi) < need) throw std::runtime_error("search_n_max: bracket exhausted");
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (probe_power(100 + 10 * mid) >= need)
      hi = mid;
    else
      lo = mid + 1;
  }
  return 100 + 10 * hi;
}

RelativeEfficiencyTable simulate_relative_efficiency(const DgmConfig& dgm_cfg,
                                                     const DesignSkeleton& skeleton, int m_trials,
                                                     std::uint64_t seed, int workers) {
  const int d = 2 * skeleton.k_stages - 1;
  const WorkingModelSpec wm =
      WorkingModelSpec::all_main_terms(static_cast<int>(dgm_cfg.adjust_w.size()));

  std::vector<AnalysisPath> unadj(m_trials), adj(m_trials);
  parallel_for(m_trials, workers, [&](std::size_t tr) {
    try {
      const auto trial = make_trial(dgm_cfg, skeleton, split_seed(seed, tr));
      unadj[tr] = replay_all_analyses(trial, skeleton, EstimatorKind::unadjusted, wm);
      adj[tr] = replay_all_analyses(trial, skeleton, EstimatorKind::tmle, wm);
    } catch (const std::exception&) {
      unadj[tr].valid = adj[tr].valid = false;
    }
  });

  RelativeEfficiencyTable table;
  table.re.resize(d);
  table.var_unadj.resize(d);
  table.var_adjusted.resize(d);
  for (int j = 0; j < d; ++j) {
    std::vector<double> du, da;
    du.reserve(m_trials);
    da.reserve(m_trials);
    for (int tr = 0; tr < m_trials; ++tr) {
      if (!unadj[tr].valid || !adj[tr].valid) continue;
      du.push_back(unadj[tr].delta[j]);
      da.push_back(adj[tr].delta[j]);
    }
    if (du.size() < 2) throw std::runtime_error("simulate_relative_efficiency: too many failures");
    table.var_unadj[j] = sample_variance(du);
    table.var_adjusted[j] = sample_variance(da);
    table.re[j] = table.var_unadj[j] / table.var_adjusted[j];
  }
  return table;
}

}  // namespace gst
