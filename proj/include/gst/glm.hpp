#pragma once

#include <Eigen/Dense>

namespace gst::glm {

// Probabilities returned by predict() are truncated to this range; keeps
// inverse-probability weights bounded downstream.
constexpr double kProbClipLo = 0.005;
constexpr double kProbClipHi = 0.995;

// Coefficients are clipped to this magnitude to tame separation.
constexpr double kBetaClip = 20.0;

struct LogisticFit {
  Eigen::VectorXd coefficients;  // intercept first
  bool converged = false;
  bool clipped = false;  // true if any coefficient sits at the clip bound
  int n_iter = 0;
  double deviance = 0.0;
};

// Weighted logistic regression with offsets. Responses may be fractional
// (quasi-binomial), which the sequential-regression pseudo-outcomes require.
// `x` must already contain the intercept column. Throws on NaN input or zero
// total weight.
LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& weights, const Eigen::VectorXd& offset);

// Convenience overload: unit weights, zero offsets.
LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

// expit of the offset-free linear predictor, truncated to
// [kProbClipLo, kProbClipHi].
double predict(const LogisticFit& fit, const Eigen::VectorXd& x_row);

// Truncated expit applied to a precomputed linear predictor.
inline double clip_probability(double p) {
  if (p < kProbClipLo) return kProbClipLo;
  if (p > kProbClipHi) return kProbClipHi;
  return p;
}

}  // namespace gst::glm
