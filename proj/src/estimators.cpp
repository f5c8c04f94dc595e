#include "gst/estimators.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gst/glm.hpp"
#include "gst/math.hpp"
#include "gst/rng.hpp"

namespace gst {

WorkingModelSpec WorkingModelSpec::all_main_terms(int d_w) {
  WorkingModelSpec spec;
  for (int j = 0; j < d_w; ++j) {
    spec.outcome_terms_lw.push_back(j);
    spec.outcome_terms_w.push_back(j);
    spec.censor_terms_l.push_back(j);
    spec.censor_terms_y.push_back(j);
    spec.arm_terms.push_back(j);
  }
  return spec;
}

void WorkingModelSpec::validate(int d_w) const {
  auto check = [d_w](const std::vector<int>& terms) {
    for (int j : terms)
      if (j < 0 || j >= d_w) throw std::invalid_argument("WorkingModelSpec: covariate index out of range");
  };
  check(outcome_terms_lw);
  check(outcome_terms_w);
  check(censor_terms_l);
  check(censor_terms_y);
  check(arm_terms);
}

namespace {

// Base columns for one row: intercept, selected W terms, then optional L and
// A columns. With `saturate`, expands to all products of the non-intercept
// factors (exact fits for small binary designs).
struct DesignBuilder {
  std::vector<int> w_terms;
  bool with_l = false;
  bool with_a = false;
  bool saturate = false;

  int n_factors() const { return static_cast<int>(w_terms.size()) + with_l + with_a; }

  int n_cols() const {
    const int k = n_factors();
    if (k > 16 || (saturate && k > 10))
      throw std::invalid_argument("WorkingModelSpec: too many model terms");
    return saturate ? (1 << k) : (1 + k);
  }

  Eigen::RowVectorXd fill(const ParticipantRecord& r, int l, int a) const {
    const int k = n_factors();
    Eigen::RowVectorXd row(n_cols());
    double f[16];
    int idx = 0;
    for (int j : w_terms) f[idx++] = r.w[j];
    if (with_l) f[idx++] = l;
    if (with_a) f[idx++] = a;
    if (!saturate) {
      row[0] = 1.0;
      for (int j = 0; j < k; ++j) row[j + 1] = f[j];
      return row;
    }
    for (int mask = 0; mask < (1 << k); ++mask) {
      double v = 1.0;
      for (int j = 0; j < k; ++j)
        if (mask & (1 << j)) v *= f[j];
      row[mask] = v;
    }
    return row;
  }

  Eigen::MatrixXd matrix(const AnalysisSnapshot& s, const std::vector<std::size_t>& rows) const {
    Eigen::MatrixXd x(rows.size(), n_cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = s.records[rows[i]];
      x.row(i) = fill(r, r.l, r.a);
    }
    return x;
  }

  double predict_at(const glm::LogisticFit& fit, const ParticipantRecord& r, int l, int a) const {
    return glm::predict(fit, fill(r, l, a).transpose());
  }
};

// Intercept-only logistic fluctuation with offset and weights. Returns the
// fitted intercept, or 0 with *fallback set when the fit does not converge.
double fluctuate(const Eigen::VectorXd& y, const Eigen::VectorXd& offset,
                 const Eigen::VectorXd& weights, bool* fallback) {
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(y.size(), 1);
  const glm::LogisticFit fit = glm::fit_logistic(ones, y, weights, offset);
  if (!fit.converged) {
    *fallback = true;
    return 0.0;
  }
  return fit.coefficients[0];
}

EstimateResult tmle_point_estimate(const AnalysisSnapshot& s, const WorkingModelSpec& spec) {
  const std::size_t n = s.size();
  std::vector<std::size_t> idx_cl, idx_cy;
  std::array<std::size_t, 2> n_cl{0, 0}, n_cy{0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    const int a = s.records[i].a;
    if (s.c_l[i]) {
      idx_cl.push_back(i);
      ++n_cl[a];
    }
    if (s.c_y[i]) {
      idx_cy.push_back(i);
      ++n_cy[a];
    }
  }
  if (n_cy[0] == 0 || n_cy[1] == 0)
    throw std::runtime_error("tmle_ate: an arm has no observed primary outcomes");
  if (n_cl[0] == 0 || n_cl[1] == 0)
    throw std::runtime_error("tmle_ate: an arm has no observed short-term outcomes");

  EstimateResult res;
  res.kind = EstimatorKind::tmle;
  res.n_enrolled = static_cast<int>(n);

  const DesignBuilder arm_design{spec.arm_terms, false, false, spec.saturate};
  const DesignBuilder cl_design{spec.censor_terms_l, false, true, spec.saturate};
  const DesignBuilder cy_design{spec.censor_terms_y, true, true, spec.saturate};
  const DesignBuilder q2_design{spec.outcome_terms_lw, true, true, spec.saturate};
  const DesignBuilder q1_design{spec.outcome_terms_w, false, true, spec.saturate};

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  // Arm assignment model P(A=1|W), fit on everyone.
  Eigen::VectorXd a_resp(n);
  for (std::size_t i = 0; i < n; ++i) a_resp[i] = s.records[i].a;
  const glm::LogisticFit fit_g = glm::fit_logistic(arm_design.matrix(s, all), a_resp);
  std::vector<double> g_own(n);  // P(A = A_i | W_i)
  for (std::size_t i = 0; i < n; ++i) {
    const double g1 = arm_design.predict_at(fit_g, s.records[i], 0, 0);
    g_own[i] = s.records[i].a == 1 ? g1 : 1.0 - g1;
  }

  // Censoring model P(C^L=1|A,W), fit on everyone.
  Eigen::VectorXd cl_resp(n);
  for (std::size_t i = 0; i < n; ++i) cl_resp[i] = s.c_l[i];
  const glm::LogisticFit fit_cl = glm::fit_logistic(cl_design.matrix(s, all), cl_resp);
  std::vector<double> pi_l(n);
  for (std::size_t i = 0; i < n; ++i)
    pi_l[i] = cl_design.predict_at(fit_cl, s.records[i], 0, s.records[i].a);

  // Censoring model P(C^Y=1|L,A,W), fit among those with L observed.
  Eigen::VectorXd cy_resp(idx_cl.size());
  for (std::size_t i = 0; i < idx_cl.size(); ++i) cy_resp[i] = s.c_y[idx_cl[i]];
  const glm::LogisticFit fit_cy = glm::fit_logistic(cy_design.matrix(s, idx_cl), cy_resp);
  std::vector<double> pi_y(n, 1.0);
  for (std::size_t i : idx_cl)
    pi_y[i] = cy_design.predict_at(fit_cy, s.records[i], s.records[i].l, s.records[i].a);

  // Initial outcome regression E(Y|L,A,W) on complete cases.
  Eigen::VectorXd y_cy(idx_cy.size());
  for (std::size_t i = 0; i < idx_cy.size(); ++i) y_cy[i] = s.records[idx_cy[i]].y;
  const glm::LogisticFit fit_q2 = glm::fit_logistic(q2_design.matrix(s, idx_cy), y_cy);

  // Target E(Y|L,A,W) per arm with the inverse-probability clever covariate
  // as fluctuation weight.
  std::array<double, 2> eps2{0.0, 0.0};
  for (int arm = 0; arm < 2; ++arm) {
    std::vector<std::size_t> rows;
    for (std::size_t i : idx_cy)
      if (s.records[i].a == arm) rows.push_back(i);
    Eigen::VectorXd y(rows.size()), off(rows.size()), w(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t r = rows[i];
      y[i] = s.records[r].y;
      off[i] = logit(q2_design.predict_at(fit_q2, s.records[r], s.records[r].l, arm));
      w[i] = 1.0 / (g_own[r] * pi_l[r] * pi_y[r]);
    }
    eps2[arm] = fluctuate(y, off, w, &res.targeting_fallback);
  }

  // Targeted predictions and sequential-regression pseudo-outcomes for both
  // hypothetical arms, on all rows with L observed.
  auto q2_star = [&](std::size_t i, int arm) {
    const double q = q2_design.predict_at(fit_q2, s.records[i], s.records[i].l, arm);
    return expit(logit(q) + eps2[arm]);
  };

  std::array<std::vector<double>, 2> z;  // indexed as idx_cl
  for (int arm = 0; arm < 2; ++arm) {
    z[arm].resize(idx_cl.size());
    for (std::size_t i = 0; i < idx_cl.size(); ++i) z[arm][i] = q2_star(idx_cl[i], arm);
  }

  // Sequential regression E(Q2* | W, A) with fractional responses, then the
  // second per-arm targeting step.
  std::array<glm::LogisticFit, 2> fit_q1;
  std::array<double, 2> eps1{0.0, 0.0};
  const Eigen::MatrixXd x_q1 = q1_design.matrix(s, idx_cl);
  const Eigen::VectorXd ones_cl = Eigen::VectorXd::Ones(idx_cl.size());
  const Eigen::VectorXd zeros_cl = Eigen::VectorXd::Zero(idx_cl.size());
  for (int arm = 0; arm < 2; ++arm) {
    Eigen::VectorXd zv = Eigen::Map<const Eigen::VectorXd>(z[arm].data(), z[arm].size());
    fit_q1[arm] = glm::fit_logistic(x_q1, zv, ones_cl, zeros_cl);

    std::vector<std::size_t> rows;  // positions within idx_cl
    for (std::size_t i = 0; i < idx_cl.size(); ++i)
      if (s.records[idx_cl[i]].a == arm) rows.push_back(i);
    Eigen::VectorXd resp(rows.size()), off(rows.size()), w(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t r = idx_cl[rows[i]];
      resp[i] = z[arm][rows[i]];
      off[i] = logit(q1_design.predict_at(fit_q1[arm], s.records[r], 0, arm));
      w[i] = 1.0 / (g_own[r] * pi_l[r]);
    }
    eps1[arm] = fluctuate(resp, off, w, &res.targeting_fallback);
  }

  auto q1_star = [&](std::size_t i, int arm) {
    const double q = q1_design.predict_at(fit_q1[arm], s.records[i], 0, arm);
    return expit(logit(q) + eps1[arm]);
  };

  // Arm means average the targeted regression over every enrolled W.
  std::array<double, 2> mu{0.0, 0.0};
  std::array<std::vector<double>, 2> q1s;
  for (int arm = 0; arm < 2; ++arm) {
    q1s[arm].resize(n);
    for (std::size_t i = 0; i < n; ++i) q1s[arm][i] = q1_star(i, arm);
    mu[arm] = mean(q1s[arm]);
  }
  res.delta_hat = mu[1] - mu[0];

  // Estimated-EIF variance.
  std::vector<double> eif(n, 0.0);
  std::vector<std::size_t> pos_in_cl(n, 0);
  for (std::size_t i = 0; i < idx_cl.size(); ++i) pos_in_cl[idx_cl[i]] = i;
  for (std::size_t i = 0; i < n; ++i) {
    const int a = s.records[i].a;
    const double sign = a == 1 ? 1.0 : -1.0;
    double v = (q1s[1][i] - mu[1]) - (q1s[0][i] - mu[0]);
    if (s.c_l[i]) {
      const double h1 = 1.0 / (g_own[i] * pi_l[i]);
      v += sign * h1 * (z[a][pos_in_cl[i]] - q1s[a][i]);
    }
    if (s.c_y[i]) {
      const double h2 = 1.0 / (g_own[i] * pi_l[i] * pi_y[i]);
      v += sign * h2 * (s.records[i].y - q2_star(i, a));
    }
    eif[i] = v;
  }
  res.eif_mean = mean(eif);
  res.variance_hat = sample_variance(eif) / static_cast<double>(n);
  res.degenerate = !(res.variance_hat > 0.0);
  res.information = res.degenerate ? 0.0 : 1.0 / res.variance_hat;
  return res;
}

}  // namespace

std::pair<double, double> unadjusted_arm_mean(const AnalysisSnapshot& s, int arm) {
  if (arm != 0 && arm != 1) throw std::invalid_argument("unadjusted_arm_mean: arm must be 0 or 1");
  std::vector<double> ys;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.c_y[i] && s.records[i].a == arm) ys.push_back(s.records[i].y);
  if (ys.empty()) throw std::runtime_error("unadjusted_arm_mean: no eligible records");
  const double m = mean(ys);
  const double v = sample_variance(ys) / static_cast<double>(ys.size());
  return {m, v};
}

EstimateResult unadjusted_ate(const AnalysisSnapshot& s) {
  const auto [m1, v1] = unadjusted_arm_mean(s, 1);
  const auto [m0, v0] = unadjusted_arm_mean(s, 0);
  EstimateResult res;
  res.kind = EstimatorKind::unadjusted;
  res.delta_hat = m1 - m0;
  res.variance_hat = v1 + v0;
  res.n_enrolled = static_cast<int>(s.size());
  res.degenerate = !(res.variance_hat > 0.0);
  res.information = res.degenerate ? 0.0 : 1.0 / res.variance_hat;
  return res;
}

EstimateResult tmle_ate(const AnalysisSnapshot& s, const WorkingModelSpec& spec,
                        const TmleOptions& opts) {
  if (s.size() == 0) throw std::invalid_argument("tmle_ate: empty snapshot");
  spec.validate(static_cast<int>(s.records[0].w.size()));
  EstimateResult res = tmle_point_estimate(s, spec);
  if (!opts.bootstrap_variance) return res;

  // Nonparametric bootstrap of the point estimate; resamples carry their
  // censoring flags with them.
  Rng rng(opts.seed);
  std::vector<double> deltas;
  deltas.reserve(opts.n_bootstrap);
  const std::size_t n = s.size();
  for (int b = 0; b < opts.n_bootstrap; ++b) {
    AnalysisSnapshot bs;
    bs.analysis_time = s.analysis_time;
    bs.records.reserve(n);
    bs.c_l.reserve(n);
    bs.c_y.reserve(n);
    std::size_t n_l = 0, n_y = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = rng.below(n);
      bs.records.push_back(s.records[j]);
      bs.c_l.push_back(s.c_l[j]);
      bs.c_y.push_back(s.c_y[j]);
      n_l += s.c_l[j];
      n_y += s.c_y[j];
    }
    bs.p_l = static_cast<double>(n_l) / static_cast<double>(n);
    bs.p_y = static_cast<double>(n_y) / static_cast<double>(n);
    try {
      deltas.push_back(tmle_point_estimate(bs, spec).delta_hat);
    } catch (const std::exception&) {
      // Degenerate resample; skip.
    }
  }
  if (deltas.size() < 2) throw std::runtime_error("tmle_ate: bootstrap failed");
  res.variance_hat = sample_variance(deltas);
  res.degenerate = !(res.variance_hat > 0.0);
  res.information = res.degenerate ? 0.0 : 1.0 / res.variance_hat;
  return res;
}

double wald_statistic(const EstimateResult& e) {
  if (!(e.variance_hat > 0.0)) throw std::invalid_argument("wald_statistic: degenerate variance");
  return e.delta_hat / std::sqrt(e.variance_hat);
}

EstimateResult estimate(const AnalysisSnapshot& s, EstimatorKind kind,
                        const WorkingModelSpec& spec) {
  return kind == EstimatorKind::unadjusted ? unadjusted_ate(s) : tmle_ate(s, spec);
}

}  // namespace gst
