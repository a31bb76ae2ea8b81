#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace speedgov {

// f(x, grad_out) -> value; grad_out may be null when only the value is needed.
using ObjectiveFn =
    std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

struct OptimSettings {
  int max_iter = 300;
  double grad_tol = 1e-5;     // max-norm of the gradient
  double f_rel_tol = 1e-9;    // relative change in f between accepted steps
};

struct OptimResult {
  Eigen::VectorXd x;
  double f = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> trace;  // f at every accepted step, first entry = start
  std::string message;
};

// BFGS (inverse-Hessian update) with Armijo backtracking. Minimizes f.
inline OptimResult minimize_bfgs(const ObjectiveFn& f, Eigen::VectorXd x0,
                                 const OptimSettings& s = {}) {
  const int n = static_cast<int>(x0.size());
  OptimResult res;
  Eigen::VectorXd g(n), g_new(n);
  double fx = f(x0, &g);
  res.trace.push_back(fx);

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd x = std::move(x0);
  bool first_update = true;

  for (int iter = 0; iter < s.max_iter; ++iter) {
    res.iterations = iter + 1;
    if (g.cwiseAbs().maxCoeff() < s.grad_tol) {
      res.converged = true;
      res.message = "gradient below tolerance";
      break;
    }

    Eigen::VectorXd d = -(H * g);
    double slope = g.dot(d);
    if (slope >= 0.0) {  // stale curvature; fall back to steepest descent
      H.setIdentity();
      d = -g;
      slope = g.dot(d);
    }

    double alpha = 1.0;
    double f_new = fx;
    Eigen::VectorXd x_new = x;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + alpha * d;
      f_new = f(x_new, &g_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      res.message = "line search failed";
      break;
    }

    const Eigen::VectorXd step = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = step.dot(y);
    if (sy > 1e-12 * step.norm() * y.norm()) {
      if (first_update) {
        H *= sy / y.squaredNorm();
        first_update = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * y;
      H += (rho * rho * (y.dot(Hy)) + rho) * (step * step.transpose()) -
           rho * (Hy * step.transpose() + step * Hy.transpose());
    }

    const double f_prev = fx;
    x = std::move(x_new);
    fx = f_new;
    g = g_new;
    res.trace.push_back(fx);

    if (std::fabs(f_prev - fx) <=
        s.f_rel_tol * std::max(1.0, std::fabs(f_prev))) {
      res.converged = true;
      res.message = "objective change below tolerance";
      break;
    }
  }
  if (!res.converged && res.message.empty())
    res.message = "max iterations reached";
  res.x = std::move(x);
  res.f = fx;
  return res;
}

// Central-difference Hessian of f from its analytic gradient.
inline Eigen::MatrixXd numerical_hessian(const ObjectiveFn& f,
                                         const Eigen::VectorXd& x,
                                         double rel_step = 1e-4) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd gp(n), gm(n), xp = x, xm = x;
  for (int j = 0; j < n; ++j) {
    const double h = rel_step * std::max(1.0, std::fabs(x[j]));
    xp[j] = x[j] + h;
    xm[j] = x[j] - h;
    f(xp, &gp);
    f(xm, &gm);
    H.col(j) = (gp - gm) / (2.0 * h);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return 0.5 * (H + H.transpose());
}

}  // namespace speedgov
