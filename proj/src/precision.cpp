#include "gst/precision.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "gst/glm.hpp"
#include "gst/math.hpp"

namespace gst {

DiscreteDistribution::DiscreteDistribution(std::vector<std::vector<double>> w_atoms,
                                           std::vector<double> w_prob, double p_a,
                                           std::vector<std::array<std::array<double, 4>, 2>> ly_pmf)
    : w_atoms_(std::move(w_atoms)), w_prob_(std::move(w_prob)), p_a1_(p_a),
      ly_pmf_(std::move(ly_pmf)) {
  if (w_atoms_.empty() || w_atoms_.size() != w_prob_.size() || w_atoms_.size() != ly_pmf_.size())
    throw std::invalid_argument("DiscreteDistribution: inconsistent sizes");
  if (!(p_a1_ > 0.0 && p_a1_ < 1.0))
    throw std::invalid_argument("DiscreteDistribution: p_a outside (0,1)");
  double tot = 0.0;
  for (double p : w_prob_) {
    if (p < 0.0) throw std::invalid_argument("DiscreteDistribution: negative W probability");
    tot += p;
  }
  if (std::fabs(tot - 1.0) > 1e-12)
    throw std::invalid_argument("DiscreteDistribution: W probabilities must sum to 1");
  for (const auto& cell : ly_pmf_) {
    for (int arm = 0; arm < 2; ++arm) {
      double s = 0.0;
      for (double p : cell[arm]) {
        if (p < 0.0) throw std::invalid_argument("DiscreteDistribution: negative (l,y) probability");
        s += p;
      }
      if (std::fabs(s - 1.0) > 1e-12)
        throw std::invalid_argument("DiscreteDistribution: (l,y) pmf must sum to 1");
    }
  }
}

double DiscreteDistribution::mean_y_given_w(std::size_t j, int arm) const {
  return pr_ly(j, arm, 0, 1) + pr_ly(j, arm, 1, 1);
}

double DiscreteDistribution::mean_y_given_lw(std::size_t j, int arm, int l) const {
  const double pl = pr_l(j, arm, l);
  if (pl <= 0.0) throw std::invalid_argument("mean_y_given_lw: zero-probability L stratum");
  return pr_ly(j, arm, l, 1) / pl;
}

double DiscreteDistribution::mean_y(int arm) const {
  double m = 0.0;
  for (std::size_t j = 0; j < n_atoms(); ++j) m += w_prob_[j] * mean_y_given_w(j, arm);
  return m;
}

double DiscreteDistribution::var_y(int arm) const {
  const double m = mean_y(arm);
  return m * (1.0 - m);  // Y is binary
}

DiscreteDistribution::Draw DiscreteDistribution::sample(Rng& rng) const {
  Draw d;
  double u = rng.uniform();
  d.w_idx = n_atoms() - 1;
  for (std::size_t j = 0; j < n_atoms(); ++j) {
    if (u < w_prob_[j]) {
      d.w_idx = j;
      break;
    }
    u -= w_prob_[j];
  }
  d.a = rng.bernoulli(p_a1_) ? 1 : 0;
  double v = rng.uniform();
  int cell = 3;
  for (int c = 0; c < 4; ++c) {
    if (v < ly_pmf_[d.w_idx][d.a][c]) {
      cell = c;
      break;
    }
    v -= ly_pmf_[d.w_idx][d.a][c];
  }
  d.l = cell / 2;
  d.y = cell % 2;
  return d;
}

std::vector<DiscreteDistribution::SupportPoint> DiscreteDistribution::support() const {
  std::vector<SupportPoint> out;
  for (std::size_t j = 0; j < n_atoms(); ++j)
    for (int arm = 0; arm < 2; ++arm)
      for (int c = 0; c < 4; ++c) {
        const double pr = w_prob_[j] * p_a(arm) * ly_pmf_[j][arm][c];
        if (pr > 0.0) out.push_back({j, arm, c / 2, c % 2, pr});
      }
  return out;
}

// ---- Formulas ---------------------------------------------------------------

namespace {

void check_fractions(double p_y, double p_l) {
  if (!(p_y > 0.0 && p_y <= p_l && p_l <= 1.0))
    throw std::invalid_argument("need 0 < p_y <= p_l <= 1");
}

}  // namespace

double are_ate(const PrecisionSummary& p, double p_y, double p_l) {
  check_fractions(p_y, p_l);
  const double denom = 1.0 + (p_y / 2.0) * p.gamma - p.r2_w - (1.0 - p_y / p_l) * p.r2_l_given_w;
  if (!(denom > 0.0) || denom > 1.0 + 1e-12)
    throw std::invalid_argument("are_ate: inconsistent summary");
  return 1.0 / denom;
}

double are_arm(const PrecisionSummary& p, int arm, double p_a, double p_y, double p_l) {
  check_fractions(p_y, p_l);
  if (!(p_a > 0.0 && p_a < 1.0)) throw std::invalid_argument("are_arm: p_a outside (0,1)");
  if (arm != 0 && arm != 1) throw std::invalid_argument("are_arm: arm must be 0 or 1");
  const double denom = 1.0 - (1.0 - p_a * p_y) * p.r2_w_a[arm] -
                       (1.0 - p_y / p_l) * p.r2_l_given_w_a[arm];
  if (!(denom > 0.0)) throw std::invalid_argument("are_arm: inconsistent summary");
  return 1.0 / denom;
}

double aerss(double are) {
  if (!(are >= 1.0)) throw std::invalid_argument("aerss: ARE must be >= 1");
  return 1.0 - 1.0 / are;
}

double ratio_r(double p_y, double p_l) {
  check_fractions(p_y, p_l);
  if (p_y == p_l) throw std::invalid_argument("ratio_r: r undefined (no L-only participants)");
  return (1.0 - p_y / 2.0) / (1.0 - p_y / p_l);
}

// ---- Exact oracles ----------------------------------------------------------

namespace {

// Var_a{E_a(Y|L,W) - E_a(Y|W)} by enumeration; zero-probability L strata
// contribute nothing.
double var_l_increment(const DiscreteDistribution& d, int arm) {
  double v = 0.0;
  for (std::size_t j = 0; j < d.n_atoms(); ++j) {
    const double ew = d.mean_y_given_w(j, arm);
    for (int l = 0; l < 2; ++l) {
      const double pl = d.pr_l(j, arm, l);
      if (pl <= 0.0) continue;
      const double diff = d.mean_y_given_lw(j, arm, l) - ew;
      v += d.w_prob(j) * pl * diff * diff;
    }
  }
  return v;
}

// Var_a{Y - E_a(Y|L,W)} by enumeration.
double var_residual(const DiscreteDistribution& d, int arm) {
  double v = 0.0;
  for (std::size_t j = 0; j < d.n_atoms(); ++j)
    for (int l = 0; l < 2; ++l) {
      const double pl = d.pr_l(j, arm, l);
      if (pl <= 0.0) continue;
      const double elw = d.mean_y_given_lw(j, arm, l);
      for (int y = 0; y < 2; ++y) {
        const double pr = d.pr_ly(j, arm, l, y);
        if (pr <= 0.0) continue;
        v += d.w_prob(j) * pr * (y - elw) * (y - elw);
      }
    }
  return v;
}

// Var over the W marginal of E_a(Y|W) (equals the within-arm variance since
// A is independent of W).
double var_w_mean(const DiscreteDistribution& d, int arm) {
  const double m = d.mean_y(arm);
  double v = 0.0;
  for (std::size_t j = 0; j < d.n_atoms(); ++j) {
    const double diff = d.mean_y_given_w(j, arm) - m;
    v += d.w_prob(j) * diff * diff;
  }
  return v;
}

double var_treatment_effect(const DiscreteDistribution& d) {
  double m = d.mean_y(1) - d.mean_y(0);
  double v = 0.0;
  for (std::size_t j = 0; j < d.n_atoms(); ++j) {
    const double diff = d.mean_y_given_w(j, 1) - d.mean_y_given_w(j, 0) - m;
    v += d.w_prob(j) * diff * diff;
  }
  return v;
}

}  // namespace

double variance_bound_ate(const DiscreteDistribution& d, double p_y, double p_l) {
  check_fractions(p_y, p_l);
  double bound = var_treatment_effect(d);
  for (int arm = 0; arm < 2; ++arm) {
    bound += var_l_increment(d, arm) / (d.p_a(arm) * p_l);
    bound += var_residual(d, arm) / (d.p_a(arm) * p_y);
  }
  return bound;
}

double variance_bound_arm(const DiscreteDistribution& d, int arm, double p_a, double p_y,
                          double p_l) {
  check_fractions(p_y, p_l);
  if (!(p_a > 0.0 && p_a < 1.0)) throw std::invalid_argument("variance_bound_arm: bad p_a");
  return var_w_mean(d, arm) + var_l_increment(d, arm) / (p_a * p_l) +
         var_residual(d, arm) / (p_a * p_y);
}

EifComponents eif_components(const Observation& obs, const DiscreteDistribution& d, double p_a,
                             double p_y, double p_l) {
  check_fractions(p_y, p_l);
  if (obs.w_idx >= d.n_atoms()) throw std::invalid_argument("eif_components: W index off-support");
  if (obs.c_y > obs.c_l) throw std::invalid_argument("eif_components: monotone censoring violated");
  if (obs.a != 0 && obs.a != 1) throw std::invalid_argument("eif_components: bad arm");
  if (obs.c_l == 1 && d.pr_l(obs.w_idx, obs.a, obs.l) <= 0.0)
    throw std::invalid_argument("eif_components: observation off-support");
  if (obs.c_y == 1 && d.pr_ly(obs.w_idx, obs.a, obs.l, obs.y) <= 0.0)
    throw std::invalid_argument("eif_components: observation off-support");

  const double p1 = p_a, p0 = 1.0 - p_a;
  EifComponents e;
  e.d0 = (d.mean_y_given_w(obs.w_idx, 1) - d.mean_y(1)) -
         (d.mean_y_given_w(obs.w_idx, 0) - d.mean_y(0));
  if (obs.c_l == 1) {
    const double inc = d.mean_y_given_lw(obs.w_idx, obs.a, obs.l) -
                       d.mean_y_given_w(obs.w_idx, obs.a);
    const double sign = obs.a == 1 ? 1.0 : -1.0;
    e.d1 = sign * inc / ((obs.a == 1 ? p1 : p0) * p_l);
  }
  if (obs.c_y == 1) {
    const double resid = obs.y - d.mean_y_given_lw(obs.w_idx, obs.a, obs.l);
    const double sign = obs.a == 1 ? 1.0 : -1.0;
    e.d2 = sign * resid / ((obs.a == 1 ? p1 : p0) * p_y);
  }
  return e;
}

VarianceParts decompose_variance(const DiscreteDistribution& d, int arm) {
  if (arm != 0 && arm != 1) throw std::invalid_argument("decompose_variance: arm must be 0 or 1");
  VarianceParts parts;
  parts.v_resid = var_residual(d, arm);
  parts.v_l_given_w = var_l_increment(d, arm);
  parts.v_w = var_w_mean(d, arm);
  return parts;
}

PrecisionSummary summarize(const DiscreteDistribution& d) {
  const double var0 = d.var_y(0);
  const double var1 = d.var_y(1);
  if (var0 <= 0.0 || var1 <= 0.0) throw std::invalid_argument("summarize: degenerate outcome");
  const double var_sum = var0 + var1;

  PrecisionSummary p;
  for (int arm = 0; arm < 2; ++arm) {
    const VarianceParts parts = decompose_variance(d, arm);
    const double va = arm == 1 ? var1 : var0;
    p.r2_w_a[arm] = parts.v_w / va;
    p.r2_l_given_w_a[arm] = parts.v_l_given_w / va;
    p.r2_resid_a[arm] = parts.v_resid / va;
    p.r2_w += parts.v_w / var_sum;
    p.r2_l_given_w += parts.v_l_given_w / var_sum;
  }
  p.gamma = var_treatment_effect(d) / var_sum;
  return p;
}

// ---- Plug-in summary from data ----------------------------------------------

namespace {

Eigen::MatrixXd design_w(const AnalysisSnapshot& s, const std::vector<int>& terms,
                         const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd x(rows.size(), terms.size() + 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x(i, 0) = 1.0;
    for (std::size_t j = 0; j < terms.size(); ++j) x(i, j + 1) = s.records[rows[i]].w[terms[j]];
  }
  return x;
}

Eigen::MatrixXd design_wl(const AnalysisSnapshot& s, const std::vector<int>& terms,
                          const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd x(rows.size(), terms.size() + 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x(i, 0) = 1.0;
    for (std::size_t j = 0; j < terms.size(); ++j) x(i, j + 1) = s.records[rows[i]].w[terms[j]];
    x(i, terms.size() + 1) = s.records[rows[i]].l;
  }
  return x;
}

Eigen::VectorXd response_y(const AnalysisSnapshot& s, const std::vector<std::size_t>& rows) {
  Eigen::VectorXd y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) y[i] = s.records[rows[i]].y;
  return y;
}

}  // namespace

PrecisionSummary plug_in_summary(const AnalysisSnapshot& s, const WorkingModelSpec& spec) {
  const std::size_t n = s.size();
  if (n == 0) throw std::invalid_argument("plug_in_summary: empty snapshot");
  spec.validate(static_cast<int>(s.records[0].w.size()));

  std::array<std::vector<std::size_t>, 2> rows_y, rows_l;
  for (std::size_t i = 0; i < n; ++i) {
    const int a = s.records[i].a;
    if (s.c_y[i]) rows_y[a].push_back(i);
    if (s.c_l[i]) rows_l[a].push_back(i);
  }
  if (rows_y[0].empty() || rows_y[1].empty())
    throw std::invalid_argument("plug_in_summary: an arm has no observed outcomes");

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  std::array<glm::LogisticFit, 2> fit_w, fit_lw;
  for (int arm = 0; arm < 2; ++arm) {
    const auto& rows = rows_y[arm];
    const Eigen::VectorXd y = response_y(s, rows);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(rows.size());
    const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(rows.size());
    fit_w[arm] = glm::fit_logistic(design_w(s, spec.outcome_terms_w, rows), y, ones, zeros);
    fit_lw[arm] = glm::fit_logistic(design_wl(s, spec.outcome_terms_lw, rows), y, ones, zeros);
  }

  // Fitted E(Y | W, A=a) for every enrolled participant, both arms.
  const Eigen::MatrixXd xw_all = design_w(s, spec.outcome_terms_w, all);
  std::array<std::vector<double>, 2> pred_w;
  for (int arm = 0; arm < 2; ++arm) {
    pred_w[arm].resize(n);
    for (std::size_t i = 0; i < n; ++i)
      pred_w[arm][i] = glm::predict(fit_w[arm], xw_all.row(i).transpose());
  }

  double var_sum = 0.0;
  std::array<double, 2> var_a{};
  for (int arm = 0; arm < 2; ++arm) {
    std::vector<double> ys;
    ys.reserve(rows_y[arm].size());
    for (auto i : rows_y[arm]) ys.push_back(s.records[i].y);
    var_a[arm] = sample_variance(ys);
    var_sum += var_a[arm];
  }
  if (var_sum <= 0.0) throw std::invalid_argument("plug_in_summary: degenerate outcome variance");

  PrecisionSummary p;
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = pred_w[1][i] - pred_w[0][i];
  p.gamma = sample_variance(diff) / var_sum;

  for (int arm = 0; arm < 2; ++arm) {
    const double vw = sample_variance(pred_w[arm]);
    std::vector<double> inc;
    inc.reserve(rows_l[arm].size());
    for (auto i : rows_l[arm]) {
      Eigen::VectorXd row(spec.outcome_terms_lw.size() + 2);
      row[0] = 1.0;
      for (std::size_t j = 0; j < spec.outcome_terms_lw.size(); ++j)
        row[j + 1] = s.records[i].w[spec.outcome_terms_lw[j]];
      row[spec.outcome_terms_lw.size() + 1] = s.records[i].l;
      inc.push_back(glm::predict(fit_lw[arm], row) - pred_w[arm][i]);
    }
    const double vlw = inc.size() >= 2 ? sample_variance(inc) : 0.0;

    p.r2_w += vw / var_sum;
    p.r2_l_given_w += vlw / var_sum;
    p.r2_w_a[arm] = var_a[arm] > 0.0 ? vw / var_a[arm] : 0.0;
    p.r2_l_given_w_a[arm] = var_a[arm] > 0.0 ? vlw / var_a[arm] : 0.0;
    p.r2_resid_a[arm] = 1.0 - p.r2_w_a[arm] - p.r2_l_given_w_a[arm];
  }
  return p;
}

}  // namespace gst
