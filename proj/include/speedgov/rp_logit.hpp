#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "speedgov/core.hpp"
#include "speedgov/design.hpp"
#include "speedgov/halton.hpp"
#include "speedgov/logit.hpp"
#include "speedgov/math/optim.hpp"
#include "speedgov/math/special.hpp"

namespace speedgov {

// Quasirandom normal draws for every user in a design, computed once per fit.
// Column pair (2d, 2d+1) belongs to the user with draw_index d.
class DrawCache {
 public:
  DrawCache(const HaltonPlan& plan, const LogitDesign& design)
      : n_draws_(plan.n_draws) {
    std::int64_t max_index = 0;
    for (const auto& b : design.blocks)
      max_index = std::max(max_index, b.draw_index);
    draws_.resize(n_draws_, 2 * (max_index + 1));
    for (const auto& b : design.blocks)
      draws_.middleCols(2 * b.draw_index, 2) = normal_draws(plan, b.draw_index);
  }

  // Explicit draw matrix (R x 2*n_users); lets tests pin hand-chosen draws.
  DrawCache(int n_draws, Eigen::MatrixXd draws)
      : n_draws_(n_draws), draws_(std::move(draws)) {}

  int n_draws() const { return n_draws_; }

  // R x 2 block for one user.
  auto user(std::int64_t draw_index) const {
    return draws_.middleCols(2 * draw_index, 2);
  }

 private:
  int n_draws_;
  Eigen::MatrixXd draws_;
};

// Parameter layout shared by everything below:
//   theta = [mu_TUB, mu_ECO, sigma_TUB, sigma_ECO, fixed...]
inline std::vector<std::string> rp_param_names(const LogitDesign& d) {
  std::vector<std::string> names = {"mu_TUB", "mu_ECO", "sigma_TUB",
                                    "sigma_ECO"};
  names.insert(names.end(), d.fixed_names.begin(), d.fixed_names.end());
  return names;
}

// Simulated panel log-likelihood: per user, trips share one draw of the mode
// slopes and the draw average is taken with log-sum-exp. Optionally fills the
// analytic gradient. The user sum is pairwise so chunking cannot change it.
inline double simulated_loglik(const LogitDesign& d, const DrawCache& cache,
                               const Eigen::VectorXd& theta,
                               Eigen::VectorXd* grad = nullptr) {
  const int R = cache.n_draws();
  const int pf = static_cast<int>(d.n_fixed());
  const double mu_t = theta[0], mu_e = theta[1];
  const double sig_t = theta[2], sig_e = theta[3];
  const Eigen::VectorXd base = d.X * theta.tail(pf);

  if (grad) grad->setZero(theta.size());

  std::vector<double> ll_users(d.blocks.size());
  std::vector<double> s(R), w(R);
  std::vector<double> a_buf;

  for (std::size_t ub = 0; ub < d.blocks.size(); ++ub) {
    const auto& b = d.blocks[ub];
    const int T = b.end - b.begin;
    const auto E = cache.user(b.draw_index);

    double smax = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < R; ++r) {
      const double bt = mu_t + sig_t * E(r, 0);
      const double be = mu_e + sig_e * E(r, 1);
      double sr = 0.0;
      for (int t = 0; t < T; ++t) {
        const int row = b.begin + t;
        const double lp = base[row] + bt * d.tub[row] + be * d.eco[row];
        sr -= d.y[row] > 0.5 ? log1pexp(-lp) : log1pexp(lp);
      }
      s[r] = sr;
      smax = std::max(smax, sr);
    }
    double sumexp = 0.0;
    for (int r = 0; r < R; ++r) {
      w[r] = std::exp(s[r] - smax);
      sumexp += w[r];
    }
    const double ll_u = smax + std::log(sumexp) - std::log(double(R));
    if (!std::isfinite(ll_u))
      throw EstimationError("non-finite simulated likelihood for user " +
                            b.user_id);
    ll_users[ub] = ll_u;

    if (grad) {
      a_buf.assign(T, 0.0);
      const double inv_sum = 1.0 / sumexp;
      for (int r = 0; r < R; ++r) {
        const double wr = w[r] * inv_sum;
        if (wr < 1e-18) continue;
        const double bt = mu_t + sig_t * E(r, 0);
        const double be = mu_e + sig_e * E(r, 1);
        double resid_tub = 0.0, resid_eco = 0.0;
        for (int t = 0; t < T; ++t) {
          const int row = b.begin + t;
          const double lp = base[row] + bt * d.tub[row] + be * d.eco[row];
          const double resid = d.y[row] - logistic(lp);
          a_buf[t] += wr * resid;
          resid_tub += resid * d.tub[row];
          resid_eco += resid * d.eco[row];
        }
        (*grad)[0] += wr * resid_tub;
        (*grad)[1] += wr * resid_eco;
        (*grad)[2] += wr * E(r, 0) * resid_tub;
        (*grad)[3] += wr * E(r, 1) * resid_eco;
      }
      Eigen::Map<const Eigen::VectorXd> a(a_buf.data(), T);
      grad->tail(pf).noalias() +=
          d.X.middleRows(b.begin, T).transpose() * a;
    }
  }
  return pairwise_sum(ll_users);
}

struct RpLogitSpec {
  std::string outcome = "harsh_accel";
  HaltonPlan draws{};
  DesignOptions design{};
  bool fix_sigma_zero = false;
  double sigma_start = 0.1;
  OptimSettings optim{};
};

struct RpLogitFit {
  std::vector<std::string> param_names;
  Eigen::VectorXd estimates;  // sigmas reported as |sigma|
  Eigen::VectorXd theta_raw;  // as optimized (sigma sign free)
  Eigen::VectorXd se;         // NaN where unavailable
  bool se_available = false;
  double loglik = 0.0;
  int k = 0;
  std::size_t n_trips = 0;
  std::size_t n_users = 0;
  double pseudo_r2 = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string message;
  std::vector<double> ll_trace;

  double estimate(const std::string& name) const {
    for (std::size_t i = 0; i < param_names.size(); ++i)
      if (param_names[i] == name) return estimates[i];
    throw EstimationError("no parameter named " + name);
  }
  double stderr_of(const std::string& name) const {
    for (std::size_t i = 0; i < param_names.size(); ++i)
      if (param_names[i] == name) return se[i];
    throw EstimationError("no parameter named " + name);
  }
};

// Information criteria and McFadden pseudo-R2 against the coin-flip null
// LL0 = N ln(1/2). k counts every free parameter including FE dummies.
inline double pseudo_r2_stat(double loglik, std::size_t n_trips) {
  const double ll0 = static_cast<double>(n_trips) * std::log(0.5);
  return 1.0 - loglik / ll0;
}
inline double aic_stat(int k, double loglik) { return 2.0 * k - 2.0 * loglik; }
inline double bic_stat(int k, double loglik, std::size_t n) {
  return k * std::log(static_cast<double>(n)) - 2.0 * loglik;
}

// Simulated maximum likelihood: quasi-Newton from plain-logit starts, SEs
// from the inverse negative numerical Hessian at the optimum.
inline RpLogitFit fit_rp_logit(const LogitDesign& d, const RpLogitSpec& spec) {
  const int pf = static_cast<int>(d.n_fixed());
  const int p = 4 + pf;
  const DrawCache cache(spec.draws, d);

  // Starting values: plain logit with the mode columns as fixed regressors.
  Eigen::MatrixXd X_start(d.n_rows(), 2 + pf);
  X_start.col(0) = d.tub;
  X_start.col(1) = d.eco;
  X_start.rightCols(pf) = d.X;
  const PlainLogitFit start = fit_plain_logit(X_start, d.y);

  Eigen::VectorXd theta0(p);
  theta0[0] = start.coef[0];
  theta0[1] = start.coef[1];
  theta0[2] = spec.fix_sigma_zero ? 0.0 : spec.sigma_start;
  theta0[3] = spec.fix_sigma_zero ? 0.0 : spec.sigma_start;
  theta0.tail(pf) = start.coef.tail(pf);

  std::vector<int> free_idx;
  for (int j = 0; j < p; ++j)
    if (!(spec.fix_sigma_zero && (j == 2 || j == 3))) free_idx.push_back(j);
  const int pfree = static_cast<int>(free_idx.size());

  Eigen::VectorXd full = theta0;
  auto expand = [&](const Eigen::VectorXd& xr) {
    for (int j = 0; j < pfree; ++j) full[free_idx[j]] = xr[j];
    return full;
  };

  ObjectiveFn neg_ll = [&](const Eigen::VectorXd& xr, Eigen::VectorXd* g) {
    Eigen::VectorXd gfull;
    const double ll =
        simulated_loglik(d, cache, expand(xr), g ? &gfull : nullptr);
    if (g) {
      g->resize(pfree);
      for (int j = 0; j < pfree; ++j) (*g)[j] = -gfull[free_idx[j]];
    }
    return -ll;
  };

  Eigen::VectorXd x0(pfree);
  for (int j = 0; j < pfree; ++j) x0[j] = theta0[free_idx[j]];

  const OptimResult opt = minimize_bfgs(neg_ll, x0, spec.optim);

  RpLogitFit fit;
  fit.param_names = rp_param_names(d);
  fit.theta_raw = expand(opt.x);
  fit.estimates = fit.theta_raw;
  fit.estimates[2] = std::fabs(fit.estimates[2]);
  fit.estimates[3] = std::fabs(fit.estimates[3]);
  fit.loglik = -opt.f;
  fit.converged = opt.converged;
  fit.iterations = opt.iterations;
  fit.message = opt.message;
  fit.ll_trace.reserve(opt.trace.size());
  for (double v : opt.trace) fit.ll_trace.push_back(-v);
  fit.k = pfree;
  fit.n_trips = d.n_rows();
  fit.n_users = d.n_users();
  fit.pseudo_r2 = pseudo_r2_stat(fit.loglik, fit.n_trips);
  fit.aic = aic_stat(fit.k, fit.loglik);
  fit.bic = bic_stat(fit.k, fit.loglik, fit.n_trips);

  fit.se = Eigen::VectorXd::Constant(p, kNaN);
  const Eigen::MatrixXd hess = numerical_hessian(neg_ll, opt.x);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
  if (eig.info() == Eigen::Success && eig.eigenvalues().minCoeff() > 0.0) {
    const Eigen::MatrixXd cov = eig.eigenvectors() *
                                eig.eigenvalues().cwiseInverse().asDiagonal() *
                                eig.eigenvectors().transpose();
    for (int j = 0; j < pfree; ++j)
      fit.se[free_idx[j]] = std::sqrt(cov(j, j));
    fit.se_available = true;
  }
  return fit;
}

struct CounterfactualDelta {
  double p_asis = 0.0;
  double p_cf = 0.0;
  double delta_pp = 0.0;
};

// Sample-average simulated probability as observed versus with every TUB trip
// relabelled to the governed base mode (mode term and its interactions
// zeroed), using the same draws on both sides.
inline CounterfactualDelta counterfactual_delta(const LogitDesign& d,
                                                const HaltonPlan& plan,
                                                const Eigen::VectorXd& theta) {
  const DrawCache cache(plan, d);
  const int R = cache.n_draws();
  const int pf = static_cast<int>(d.n_fixed());
  const double mu_t = theta[0], mu_e = theta[1];
  const double sig_t = theta[2], sig_e = theta[3];
  const Eigen::VectorXd base = d.X * theta.tail(pf);

  // Per-trip contribution of the TUB-linked interaction columns.
  Eigen::VectorXd tub_inter = Eigen::VectorXd::Zero(d.n_rows());
  for (int c : d.tub_linked_cols)
    tub_inter += d.X.col(c) * theta[4 + c];

  double sum_asis = 0.0, sum_cf = 0.0;
  const double inv_r = 1.0 / static_cast<double>(R);
  for (const auto& b : d.blocks) {
    const auto E = cache.user(b.draw_index);
    for (int r = 0; r < R; ++r) {
      const double bt = mu_t + sig_t * E(r, 0);
      const double be = mu_e + sig_e * E(r, 1);
      for (int row = b.begin; row < b.end; ++row) {
        const double lp = base[row] + bt * d.tub[row] + be * d.eco[row];
        sum_asis += logistic(lp) * inv_r;
        const double lp_cf = lp - bt * d.tub[row] - tub_inter[row];
        sum_cf += logistic(lp_cf) * inv_r;
      }
    }
  }
  CounterfactualDelta out;
  const double n = static_cast<double>(d.n_rows());
  out.p_asis = sum_asis / n;
  out.p_cf = sum_cf / n;
  out.delta_pp = 100.0 * (out.p_cf - out.p_asis);
  return out;
}

// Two-sample Wald statistic for one coefficient measured in two fits.
inline double stability_z(double est_a, double se_a, double est_b, double se_b) {
  return (est_a - est_b) / std::sqrt(se_a * se_a + se_b * se_b);
}

struct StabilityRow {
  std::string name;
  double est_a = 0.0, se_a = 0.0;
  double est_b = 0.0, se_b = 0.0;
  double z = 0.0;
  double p = 1.0;
  bool unstable = false;  // p < 0.05
  std::string note;
};

// Parameter-by-parameter equality test across two fits of the same
// specification (e.g. two halves of the pre-ban window).
inline std::vector<StabilityRow> stability_test(const RpLogitFit& a,
                                                const RpLogitFit& b) {
  std::vector<StabilityRow> rows;
  for (std::size_t i = 0; i < a.param_names.size(); ++i) {
    const std::string& name = a.param_names[i];
    StabilityRow row;
    row.name = name;
    auto it = std::find(b.param_names.begin(), b.param_names.end(), name);
    if (it == b.param_names.end()) {
      row.note = "absent from second fit";
      rows.push_back(row);
      continue;
    }
    const std::size_t j = it - b.param_names.begin();
    row.est_a = a.estimates[i];
    row.se_a = a.se[i];
    row.est_b = b.estimates[j];
    row.se_b = b.se[j];
    if (!std::isfinite(row.se_a) || !std::isfinite(row.se_b)) {
      row.note = "missing standard error";
      rows.push_back(row);
      continue;
    }
    row.z = stability_z(row.est_a, row.se_a, row.est_b, row.se_b);
    row.p = normal_two_sided_p(row.z);
    row.unstable = row.p < 0.05;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace speedgov
