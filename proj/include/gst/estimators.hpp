#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "gst/trial.hpp"

namespace gst {

// Covariate index sets (into ParticipantRecord::w) for each working model.
// All models are logistic with an intercept and main terms; `saturate`
// tensor-expands the binary design columns so small cases can be fit exactly.
struct WorkingModelSpec {
  std::vector<int> outcome_terms_lw;  // E(Y | L, A, W)
  std::vector<int> outcome_terms_w;   // E(Y | A, W)
  std::vector<int> censor_terms_l;    // P(C^L = 1 | A, W)
  std::vector<int> censor_terms_y;    // P(C^Y = 1 | L, A, W)
  std::vector<int> arm_terms;         // P(A = 1 | W)
  bool saturate = false;

  // Main terms in every model for all d_w covariates.
  static WorkingModelSpec all_main_terms(int d_w);
  void validate(int d_w) const;
};

enum class EstimatorKind { unadjusted, tmle };

struct EstimateResult {
  double delta_hat = 0.0;
  double variance_hat = 0.0;  // variance of the estimator (AVar/n estimate)
  double information = 0.0;   // 1 / variance_hat
  double eif_mean = 0.0;      // sample mean of the estimated influence function
  int n_enrolled = 0;
  EstimatorKind kind = EstimatorKind::unadjusted;
  bool degenerate = false;          // zero variance estimate
  bool targeting_fallback = false;  // a fluctuation failed; untargeted fit used
};

struct TmleOptions {
  bool bootstrap_variance = false;  // default is the estimated-EIF variance
  int n_bootstrap = 200;
  std::uint64_t seed = 0;
};

// Sample mean and variance-of-the-mean of Y among {A = arm, C^Y = 1}.
std::pair<double, double> unadjusted_arm_mean(const AnalysisSnapshot& s, int arm);

// Difference of arm means over participants with Y observed.
EstimateResult unadjusted_ate(const AnalysisSnapshot& s);

// TMLE for the average treatment effect with a short-term outcome:
// sequential logistic regressions targeted per arm, inverse-probability
// clever covariates from fitted arm/censoring models, and influence-function
// variance. See the companion tests for the exact collapse and robustness
// properties this implementation guarantees.
EstimateResult tmle_ate(const AnalysisSnapshot& s, const WorkingModelSpec& spec,
                        const TmleOptions& opts = {});

double wald_statistic(const EstimateResult& e);

EstimateResult estimate(const AnalysisSnapshot& s, EstimatorKind kind,
                        const WorkingModelSpec& spec);

}  // namespace gst
