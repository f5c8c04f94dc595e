#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "gst/dgm.hpp"
#include "gst/estimators.hpp"
#include "gst/trial.hpp"

namespace gst {

// Error-spending design parameters. Both spending functions are of the form
// total * min(t^power, 1) on information time t.
struct ErrorSpendingSpec {
  int k_stages = 5;
  double alpha = 0.025;
  double beta = 0.2;
  double delta_alt = 0.122;
  double f_power = 2.0;
  double g_power = 2.0;
  double i_max = 0.0;  // 0: use the final decision analysis information

  void validate() const;
  double f(double t) const;  // cumulative Type I error spent by time t
  double g(double t) const;  // cumulative Type II error spent by time t
};

// Joint normal model of the Wald statistics at the K-1 interim and K decision
// analyses. Coordinate order: interims 1..K-1, then decisions 1..K. Under a
// treatment effect d the mean vector is d * drift.
struct JointStatisticModel {
  int k_stages = 0;
  std::vector<double> info_interim;   // K-1 entries
  std::vector<double> info_decision;  // K entries
  Eigen::MatrixXd corr;               // (2K-1) square
  std::vector<double> drift;          // sqrt(info), same ordering as corr

  int dim() const { return 2 * k_stages - 1; }
  int interim_coord(int k) const { return k - 1; }                 // k in 1..K-1
  int decision_coord(int k) const { return k_stages - 1 + k - 1; } // k in 1..K
  void validate() const;
};

// Independent-increments model with the given information levels; decision
// analyses may coincide with interims (duplicate information levels are
// handled by jitter in the samplers).
JointStatisticModel make_canonical_model(const std::vector<double>& info_interim,
                                         const std::vector<double>& info_decision);

struct DesignBoundaries {
  std::vector<double> u;  // efficacy, K-1
  std::vector<double> l;  // futility, K-1
  std::vector<double> c;  // decision critical values, K
};

struct OperatingCharacteristics {
  double type_i = 0.0;
  double power = 0.0;
  double ess_null = 0.0;
  double ess_alt = 0.0;
  std::vector<double> stop_stage_dist;  // under the alternative
  int n_trials = 0;
  int n_failed = 0;
};

struct DesignSkeleton {
  int k_stages = 5;
  int n_max = 480;
  DelayConfig delays;
};

struct TrialOutcome {
  int stop_stage = 0;
  bool rejected = false;
  int n_enrolled = 0;
};

// Monte Carlo P(lower <= X <= upper) for X ~ N(mean, corr), via one seeded
// draw set (identical seeds share identical draws). The univariate case is
// evaluated exactly. Throws if corr is not positive semidefinite after a
// 1e-10 jitter attempt.
std::pair<double, double> mvn_rect_prob(const Eigen::MatrixXd& corr, const Eigen::VectorXd& mean,
                                        const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                        int n_draws, std::uint64_t seed);

// Stagewise error-spending boundary solve: efficacy and futility bounds from
// the incremental Type I / Type II equations, decision critical values from
// the balance equation, all by bisection over common-random-number Monte
// Carlo probabilities (first stage exactly).
DesignBoundaries solve_boundaries(const JointStatisticModel& model, const ErrorSpendingSpec& spec,
                                  int n_draws = 1 << 20, std::uint64_t seed = 20240901);

// Simulates complete (never-stopped) trials and records the estimator at
// every interim and decision analysis; returns the empirical correlation,
// information, and drift of the Wald statistics.
JointStatisticModel estimate_joint_covariance(const DgmConfig& dgm_cfg,
                                              const DesignSkeleton& skeleton,
                                              EstimatorKind estimator_kind, int m_trials,
                                              std::uint64_t seed, int workers = 1);

// Pure stop/continue/decision rule on precomputed Wald statistics: interim k
// stops enrollment outside (l_k, u_k); the matching decision analysis rejects
// at c_k; reaching the end tests at c_K. n_enrolled gives the enrollment
// count at each interim (and n_max last).
TrialOutcome apply_stopping_procedure(const std::vector<double>& interim_z,
                                      const std::vector<double>& decision_z,
                                      const std::vector<int>& n_enrolled,
                                      const DesignBoundaries& boundaries);

// Applies the stop/continue and decision rules to one trial's data.
TrialOutcome run_group_sequential(const std::vector<ParticipantRecord>& trial,
                                  const DesignBoundaries& boundaries,
                                  const DesignSkeleton& skeleton, EstimatorKind estimator_kind);

// End-to-end: covariance precompute, boundary solve, then batch simulation
// under both the null and alternative configurations.
OperatingCharacteristics simulate_operating_characteristics(const DgmConfig& dgm_cfg,
                                                            const ErrorSpendingSpec& spec,
                                                            EstimatorKind estimator_kind, int n_max,
                                                            int n_trials, std::uint64_t seed,
                                                            int workers = 1);

// Smallest n_max in [100, 1000] (step 10) whose simulated power reaches
// target_power - 0.01.
int search_n_max(const DgmConfig& dgm_cfg, const ErrorSpendingSpec& spec,
                 EstimatorKind estimator_kind, double target_power, int n_trials_per_probe,
                 std::uint64_t seed, int workers = 1);

// Across-trial variance ratio unadjusted/adjusted at every analysis of the
// never-stopped replay; one row per analysis in model coordinate order.
struct RelativeEfficiencyTable {
  std::vector<double> re;            // 2K-1 entries
  std::vector<double> var_unadj;     // across-trial variance of the unadjusted estimator
  std::vector<double> var_adjusted;  // and of the TMLE
};
RelativeEfficiencyTable simulate_relative_efficiency(const DgmConfig& dgm_cfg,
                                                     const DesignSkeleton& skeleton, int m_trials,
                                                     std::uint64_t seed, int workers = 1);

}  // namespace gst
