#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "speedgov/core.hpp"
#include "speedgov/math/special.hpp"

namespace speedgov {

struct PlainLogitFit {
  Eigen::VectorXd coef;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
};

inline double logit_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& beta) {
  const Eigen::VectorXd lp = X * beta;
  double ll = 0.0;
  for (int i = 0; i < y.size(); ++i)
    ll -= y[i] > 0.5 ? log1pexp(-lp[i]) : log1pexp(lp[i]);
  return ll;
}

// Newton-Raphson binary logit with a small ridge guard on the information
// matrix for near-collinear designs.
inline PlainLogitFit fit_plain_logit(const Eigen::MatrixXd& X,
                                     const Eigen::VectorXd& y,
                                     int max_iter = 100, double tol = 1e-10) {
  const int p = static_cast<int>(X.cols());
  PlainLogitFit fit;
  fit.coef = Eigen::VectorXd::Zero(p);

  for (int iter = 0; iter < max_iter; ++iter) {
    fit.iterations = iter + 1;
    const Eigen::VectorXd lp = X * fit.coef;
    Eigen::VectorXd mu(lp.size()), w(lp.size());
    for (int i = 0; i < lp.size(); ++i) {
      mu[i] = logistic(lp[i]);
      w[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-12);
    }
    const Eigen::VectorXd grad = X.transpose() * (y - mu);
    if (grad.cwiseAbs().maxCoeff() < tol) {
      fit.converged = true;
      break;
    }
    Eigen::MatrixXd info = X.transpose() * w.asDiagonal() * X;
    info.diagonal().array() += 1e-10;
    const Eigen::VectorXd step = info.ldlt().solve(grad);
    // Halve the step until the likelihood does not decrease.
    double ll_old = logit_loglik(X, y, fit.coef);
    double scale = 1.0;
    Eigen::VectorXd cand;
    for (int h = 0; h < 40; ++h) {
      cand = fit.coef + scale * step;
      if (logit_loglik(X, y, cand) >= ll_old - 1e-12) break;
      scale *= 0.5;
    }
    fit.coef = cand;
  }
  fit.loglik = logit_loglik(X, y, fit.coef);
  return fit;
}

}  // namespace speedgov
