#include "gst/glm.hpp"

#include <cmath>
#include <stdexcept>

#include "gst/math.hpp"

namespace gst::glm {

namespace {

constexpr double kScoreTol = 1e-8;
constexpr double kDevianceRelTol = 1e-10;
constexpr int kMaxIter = 100;
constexpr double kRidge = 1e-8;

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

// -2 * quasi-Bernoulli log-likelihood, evaluated on the linear predictor so
// saturated probabilities stay finite.
double quasi_binomial_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& eta,
                               const Eigen::VectorXd& w) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (w[i] == 0.0) continue;
    ll += w[i] * (y[i] * eta[i] - softplus(eta[i]));
  }
  return -2.0 * ll;
}

Eigen::VectorXd clip_beta(Eigen::VectorXd beta) {
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (beta[j] > kBetaClip) beta[j] = kBetaClip;
    if (beta[j] < -kBetaClip) beta[j] = -kBetaClip;
  }
  return beta;
}

}  // namespace

LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& weights, const Eigen::VectorXd& offset) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (n < 1 || p < 1) throw std::invalid_argument("fit_logistic: empty design");
  if (y.size() != n || weights.size() != n || offset.size() != n)
    throw std::invalid_argument("fit_logistic: dimension mismatch");
  if (!x.allFinite() || !y.allFinite() || !weights.allFinite() || !offset.allFinite())
    throw std::invalid_argument("fit_logistic: non-finite input");
  double wtot = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y[i] < 0.0 || y[i] > 1.0) throw std::invalid_argument("fit_logistic: response outside [0,1]");
    if (weights[i] < 0.0) throw std::invalid_argument("fit_logistic: negative weight");
    wtot += weights[i];
  }
  if (wtot <= 0.0) throw std::invalid_argument("fit_logistic: zero total weight");

  LogisticFit fit;
  fit.coefficients = Eigen::VectorXd::Zero(p);

  Eigen::VectorXd eta(n), mu(n);
  auto eval_mu = [&](const Eigen::VectorXd& beta) {
    eta = offset + x * beta;
    for (Eigen::Index i = 0; i < n; ++i) mu[i] = expit(eta[i]);
  };

  eval_mu(fit.coefficients);
  double dev = quasi_binomial_deviance(y, eta, weights);

  for (int iter = 1; iter <= kMaxIter; ++iter) {
    fit.n_iter = iter;
    Eigen::VectorXd resid = (y - mu).cwiseProduct(weights);
    Eigen::VectorXd score = x.transpose() * resid;
    if (score.cwiseAbs().maxCoeff() < kScoreTol) {
      fit.converged = true;
      break;
    }

    Eigen::VectorXd irls_w(n);
    for (Eigen::Index i = 0; i < n; ++i) irls_w[i] = weights[i] * mu[i] * (1.0 - mu[i]);
    Eigen::MatrixXd hess = x.transpose() * irls_w.asDiagonal() * x;
    hess.diagonal().array() += kRidge;
    Eigen::VectorXd step = hess.ldlt().solve(score);

    // Step-halving keeps the quasi-likelihood monotone on hard cases.
    double new_dev = dev;
    Eigen::VectorXd new_beta = fit.coefficients;
    for (int half = 0; half < 6; ++half) {
      new_beta = clip_beta(fit.coefficients + step);
      eval_mu(new_beta);
      new_dev = quasi_binomial_deviance(y, eta, weights);
      if (new_dev <= dev + 1e-12 || half == 5) break;
      step *= 0.5;
    }
    fit.coefficients = new_beta;

    const double rel = std::fabs(dev - new_dev) / (std::fabs(dev) + 1.0);
    dev = new_dev;
    if (rel < kDevianceRelTol) {
      fit.converged = true;
      break;
    }
  }
  eval_mu(fit.coefficients);
  fit.deviance = quasi_binomial_deviance(y, eta, weights);
  fit.clipped = (fit.coefficients.cwiseAbs().maxCoeff() >= kBetaClip);
  return fit;
}

LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return fit_logistic(x, y, Eigen::VectorXd::Ones(x.rows()), Eigen::VectorXd::Zero(x.rows()));
}

double predict(const LogisticFit& fit, const Eigen::VectorXd& x_row) {
  if (x_row.size() != fit.coefficients.size())
    throw std::invalid_argument("predict: dimension mismatch");
  return clip_probability(expit(x_row.dot(fit.coefficients)));
}

}  // namespace gst::glm
