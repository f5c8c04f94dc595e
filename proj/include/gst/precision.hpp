#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "gst/estimators.hpp"
#include "gst/rng.hpp"
#include "gst/trial.hpp"

namespace gst {

// (R^2_W, R^2_{L|W}, gamma) plus the per-arm analogues. Inputs to every
// relative-efficiency formula.
struct PrecisionSummary {
  double r2_w = 0.0;
  double r2_l_given_w = 0.0;
  double gamma = 0.0;
  std::array<double, 2> r2_w_a{0.0, 0.0};
  std::array<double, 2> r2_l_given_w_a{0.0, 0.0};
  std::array<double, 2> r2_resid_a{1.0, 1.0};
};

// Finite joint law of (W, A, L, Y) with A independent of W by construction:
// W atoms carry marginal probabilities, and each (atom, arm) cell holds a
// pmf over the four (l, y) values. Used as the exact oracle of record.
class DiscreteDistribution {
 public:
  // lq[w_idx][arm] is the pmf over (l, y) in order (0,0),(0,1),(1,0),(1,1).
  DiscreteDistribution(std::vector<std::vector<double>> w_atoms, std::vector<double> w_prob,
                       double p_a, std::vector<std::array<std::array<double, 4>, 2>> ly_pmf);

  std::size_t n_atoms() const { return w_atoms_.size(); }
  const std::vector<double>& w_atom(std::size_t j) const { return w_atoms_[j]; }
  double w_prob(std::size_t j) const { return w_prob_[j]; }
  double p_a(int arm) const { return arm == 1 ? p_a1_ : 1.0 - p_a1_; }

  double pr_ly(std::size_t j, int arm, int l, int y) const {
    return ly_pmf_[j][arm][2 * l + y];
  }
  double pr_l(std::size_t j, int arm, int l) const {
    return pr_ly(j, arm, l, 0) + pr_ly(j, arm, l, 1);
  }

  // Exact conditional expectations from enumeration.
  double mean_y_given_w(std::size_t j, int arm) const;          // E_a(Y | W = w_j)
  double mean_y_given_lw(std::size_t j, int arm, int l) const;  // E_a(Y | L = l, W = w_j)
  double mean_y(int arm) const;                                 // E_a(Y)
  double var_y(int arm) const;                                  // Var_a(Y)

  struct Draw {
    std::size_t w_idx;
    int a, l, y;
  };
  Draw sample(Rng& rng) const;

  // Flattened (w, a, l, y, probability) support; zero-probability cells omitted.
  struct SupportPoint {
    std::size_t w_idx;
    int a, l, y;
    double prob;
  };
  std::vector<SupportPoint> support() const;

 private:
  std::vector<std::vector<double>> w_atoms_;
  std::vector<double> w_prob_;
  double p_a1_;
  std::vector<std::array<std::array<double, 4>, 2>> ly_pmf_;
};

struct EifComponents {
  double d0 = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
  double sum() const { return d0 + d1 + d2; }
};

struct Observation {
  std::size_t w_idx = 0;
  int a = 0;
  int c_l = 0;
  int l = 0;
  int c_y = 0;
  int y = 0;
};

// ---- Relative-efficiency formulas -----------------------------------------

// ARE between an efficient estimator and the unadjusted estimator of the
// average treatment effect:
//   1 / (1 + (p_y/2) gamma - R^2_W - (1 - p_y/p_l) R^2_{L|W}).
double are_ate(const PrecisionSummary& p, double p_y, double p_l);

// Per-arm analogue for the treatment-specific mean E(Y | A = arm):
//   1 / (1 - (1 - p_a p_y) R^2_{W;a} - (1 - p_y/p_l) R^2_{L|W;a}).
double are_arm(const PrecisionSummary& p, int arm, double p_a, double p_y, double p_l);

// Asymptotic equivalent reduction in sample size, 1 - 1/ARE.
double aerss(double are);

// Ratio of sample-size reductions from an equally prognostic baseline
// variable versus short-term outcome: (1 - p_y/2) / (1 - p_y/p_l).
// Undefined at p_y = p_l.
double ratio_r(double p_y, double p_l);

// ---- Exact oracles over a DiscreteDistribution -----------------------------

// Semiparametric variance lower bound for the average treatment effect.
double variance_bound_ate(const DiscreteDistribution& d, double p_y, double p_l);

// Same bound for one arm's mean.
double variance_bound_arm(const DiscreteDistribution& d, int arm, double p_a, double p_y,
                          double p_l);

// Efficient-influence-function pieces at a single observation. Throws if the
// observation has zero probability under d or violates monotone censoring.
EifComponents eif_components(const Observation& obs, const DiscreteDistribution& d, double p_a,
                             double p_y, double p_l);

// Exact per-arm variance decomposition (residual, L-after-W, W). The three
// parts sum to Var_a(Y).
struct VarianceParts {
  double v_resid = 0.0;
  double v_l_given_w = 0.0;
  double v_w = 0.0;
};
VarianceParts decompose_variance(const DiscreteDistribution& d, int arm);

// Exact PrecisionSummary by enumeration. Throws if either arm has zero
// outcome variance.
PrecisionSummary summarize(const DiscreteDistribution& d);

// ---- Model-based estimate from trial data ----------------------------------

// Plug-in summary from arm-specific main-terms logistic fits, following the
// sample-variance estimators used with the ARE formulas.
PrecisionSummary plug_in_summary(const AnalysisSnapshot& s, const WorkingModelSpec& spec);

}  // namespace gst
