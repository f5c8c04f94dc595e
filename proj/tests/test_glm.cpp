#include "gst/glm.hpp"

#include <cmath>

#include "doctest.h"
#include "gst/math.hpp"

using namespace gst;

namespace {

// Independent check: plain Newton-Raphson on the quasi-Bernoulli
// log-likelihood with an exact (ternary-search) line search. Deliberately
// shares no code with glm::fit_logistic.
Eigen::VectorXd newton_oracle(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& w, const Eigen::VectorXd& offset) {
  const auto loglik = [&](const Eigen::VectorXd& beta) {
    double ll = 0.0;
    Eigen::VectorXd eta = offset + x * beta;
    for (Eigen::Index i = 0; i < y.size(); ++i)
      ll += w[i] * (y[i] * eta[i] - std::log1p(std::exp(eta[i])));
    return ll;
  };
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::VectorXd eta = offset + x * beta;
    Eigen::VectorXd mu(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) mu[i] = expit(eta[i]);
    Eigen::VectorXd grad = x.transpose() * (w.cwiseProduct(y - mu));
    if (grad.cwiseAbs().maxCoeff() < 1e-12) break;
    Eigen::VectorXd irls = w.cwiseProduct(mu.cwiseProduct(Eigen::VectorXd::Ones(mu.size()) - mu));
    Eigen::MatrixXd hess = x.transpose() * irls.asDiagonal() * x;
    Eigen::VectorXd dir = hess.fullPivLu().solve(grad);
    double lo = 0.0, hi = 4.0;
    for (int ls = 0; ls < 200; ++ls) {
      const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      if (loglik(beta + m1 * dir) < loglik(beta + m2 * dir))
        lo = m1;
      else
        hi = m2;
    }
    beta += 0.5 * (lo + hi) * dir;
  }
  return beta;
}

// Fixed 20-row fixture: two covariates, non-uniform weights, nonzero offsets.
struct Fixture {
  Eigen::MatrixXd x;
  Eigen::VectorXd y, w, offset;
  Fixture() : x(20, 3), y(20), w(20), offset(20) {
    const double x1[20] = {0.5,  -1.2, 0.3,  2.1, -0.7, 1.5,  -0.2, 0.9,  -1.8, 0.4,
                           1.1,  -0.5, 0.8,  -1.0, 0.2, -0.9, 1.7,  -0.1, 0.6,  -1.4};
    const double x2[20] = {1.0, 0.0, -1.0, 0.5, 2.0,  -0.5, 1.5, -2.0, 0.3, -0.8,
                           0.7, 1.2, -0.3, 0.9, -1.5, 0.1,  0.4, -0.6, 1.8, -1.1};
    const int yy[20] = {1, 0, 1, 1, 0, 1, 0, 1, 0, 0, 1, 1, 0, 1, 0, 0, 1, 0, 1, 0};
    const double ww[20] = {1.0, 2.0, 1.0, 0.5, 1.5, 1.0, 1.0, 2.5, 1.0, 0.8,
                           1.2, 1.0, 0.6, 1.0, 1.4, 1.0, 0.9, 1.0, 1.1, 1.0};
    const double off[20] = {0.1, -0.2, 0.0, 0.3, -0.1, 0.0, 0.2, -0.3, 0.1, 0.0,
                            -0.1, 0.2, 0.0, -0.2, 0.3, 0.0, 0.1, -0.1, 0.0, 0.2};
    for (int i = 0; i < 20; ++i) {
      x(i, 0) = 1.0;
      x(i, 1) = x1[i];
      x(i, 2) = x2[i];
      y[i] = yy[i];
      w[i] = ww[i];
      offset[i] = off[i];
    }
  }
};

}  // namespace

TEST_CASE("intercept-only fit matches the response mean") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 1);
  Eigen::VectorXd y(4);
  y << 0, 1, 1, 0;
  const auto fit = glm::fit_logistic(x, y);
  CHECK(fit.converged);
  CHECK(fit.coefficients[0] == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("intercept-only predicted probability equals the weighted mean") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(5, 1);
  Eigen::VectorXd y(5), w(5);
  y << 1, 0, 1, 1, 0;
  w << 2.0, 1.0, 0.5, 1.5, 3.0;
  const auto fit = glm::fit_logistic(x, y, w, Eigen::VectorXd::Zero(5));
  const double wmean = (2.0 + 0.5 + 1.5) / 8.0;
  CHECK(expit(fit.coefficients[0]) == doctest::Approx(wmean).epsilon(1e-8));
}

TEST_CASE("constant response saturates at the coefficient clip") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(10, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Ones(10);
  const auto fit = glm::fit_logistic(x, y);
  CHECK(fit.converged);
  CHECK(fit.clipped);
  CHECK(fit.coefficients[0] == doctest::Approx(20.0));
}

TEST_CASE("fixture fit matches the Newton oracle") {
  Fixture f;
  const auto fit = glm::fit_logistic(f.x, f.y, f.w, f.offset);
  REQUIRE(fit.converged);
  CHECK_FALSE(fit.clipped);
  const Eigen::VectorXd oracle = newton_oracle(f.x, f.y, f.w, f.offset);
  for (int j = 0; j < 3; ++j)
    CHECK(fit.coefficients[j] == doctest::Approx(oracle[j]).epsilon(1e-6));

  // Frozen oracle solution for this fixture.
  CHECK(fit.coefficients[0] == doctest::Approx(-0.1161657776).epsilon(1e-6));
  CHECK(fit.coefficients[1] == doctest::Approx(2.2716080416).epsilon(1e-6));
  CHECK(fit.coefficients[2] == doctest::Approx(0.4422855249).epsilon(1e-6));

  // Score equations hold at the optimum.
  Eigen::VectorXd mu(20);
  for (int i = 0; i < 20; ++i)
    mu[i] = expit(f.offset[i] + f.x.row(i).dot(fit.coefficients));
  const Eigen::VectorXd score = f.x.transpose() * (f.w.cwiseProduct(f.y - mu));
  CHECK(score.cwiseAbs().maxCoeff() < 1e-6);

  // Prediction agrees with the oracle's probability (offset-free).
  Eigen::VectorXd row(3);
  row << 1.0, 0.5, -0.5;
  CHECK(glm::predict(fit, row) == doctest::Approx(expit(row.dot(oracle))).epsilon(1e-6));
}

TEST_CASE("predict clips extreme probabilities") {
  glm::LogisticFit fit;
  fit.coefficients = Eigen::VectorXd::Zero(1);
  Eigen::VectorXd row = Eigen::VectorXd::Ones(1);
  CHECK(glm::predict(fit, row) == doctest::Approx(0.5));
  fit.coefficients[0] = 20.0;
  CHECK(glm::predict(fit, row) == doctest::Approx(0.995));
  fit.coefficients[0] = -20.0;
  CHECK(glm::predict(fit, row) == doctest::Approx(0.005));
}

TEST_CASE("invalid inputs are rejected") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 1);
  Eigen::VectorXd y(3);
  y << 0, 1, 1;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(3);
  CHECK_THROWS(glm::fit_logistic(x, y, w, Eigen::VectorXd::Zero(3)));
  y[1] = std::nan("");
  CHECK_THROWS(glm::fit_logistic(x, y));
  y[1] = 1.5;
  CHECK_THROWS(glm::fit_logistic(x, y));
}

TEST_CASE("fractional responses are accepted") {
  Eigen::MatrixXd x(6, 2);
  Eigen::VectorXd y(6);
  for (int i = 0; i < 6; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = i - 2.5;
    y[i] = 0.1 + 0.15 * i;
  }
  const auto fit = glm::fit_logistic(x, y);
  CHECK(fit.converged);
  const Eigen::VectorXd oracle = newton_oracle(x, y, Eigen::VectorXd::Ones(6),
                                               Eigen::VectorXd::Zero(6));
  CHECK(fit.coefficients[0] == doctest::Approx(oracle[0]).epsilon(1e-6));
  CHECK(fit.coefficients[1] == doctest::Approx(oracle[1]).epsilon(1e-6));
}
