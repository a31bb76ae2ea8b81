#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "speedgov/core.hpp"
#include "speedgov/math/special.hpp"
#include "speedgov/panel.hpp"

namespace speedgov {

// Integer-coded factor with its level names.
struct Factor {
  std::string name;
  std::vector<int> ids;  // per observation
  std::vector<std::string> levels;
  int n_levels() const { return static_cast<int>(levels.size()); }
};

inline Factor encode_factor(const std::string& name,
                            const std::vector<std::string>& keys) {
  Factor f;
  f.name = name;
  std::map<std::string, int> index;
  f.ids.reserve(keys.size());
  for (const auto& k : keys) {
    auto [it, inserted] = index.emplace(k, static_cast<int>(index.size()));
    if (inserted) f.levels.push_back(k);
    f.ids.push_back(it->second);
  }
  return f;
}

struct AbsorbResult {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  long dof_absorbed = 0;
  int sweeps = 0;
  bool dof_conservative = false;  // true when >2 factors (upper bound)
};

namespace detail {

// Connected components of the bipartite graph between the first two factors;
// each extra component beyond the first is a redundant level (a separate
// intercept already counted in factor one).
inline int mobility_groups(const Factor& a, const Factor& b) {
  const int na = a.n_levels(), nb = b.n_levels();
  std::vector<int> parent(na + nb);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < a.ids.size(); ++i) {
    const int ra = find(a.ids[i]);
    const int rb = find(na + b.ids[i]);
    if (ra != rb) parent[ra] = rb;
  }
  std::set<int> roots;
  for (int x = 0; x < na + nb; ++x) roots.insert(find(x));
  return static_cast<int>(roots.size());
}

inline void demean_one_factor(Eigen::MatrixXd& m, const Factor& f,
                              double& max_update) {
  const int levels = f.n_levels();
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(levels, m.cols());
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(levels);
  for (int i = 0; i < m.rows(); ++i) {
    sums.row(f.ids[i]) += m.row(i);
    counts[f.ids[i]] += 1.0;
  }
  for (int l = 0; l < levels; ++l) sums.row(l) /= counts[l];
  for (int i = 0; i < m.rows(); ++i) {
    m.row(i) -= sums.row(f.ids[i]);
  }
  max_update = std::max(max_update, sums.cwiseAbs().maxCoeff());
}

}  // namespace detail

// Within-transformation by alternating projections over the factor list,
// equivalent to regressing out the full dummy set. Iterates until the largest
// per-cell update drops below tol.
inline AbsorbResult absorb_fe(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const std::vector<Factor>& factors,
                              double tol = 1e-8, int max_sweeps = 10000) {
  AbsorbResult res;
  const int n = static_cast<int>(y.size());
  Eigen::MatrixXd m(n, X.cols() + 1);
  m.col(0) = y;
  if (X.cols() > 0) m.rightCols(X.cols()) = X;

  if (!factors.empty()) {
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      double max_update = 0.0;
      for (const auto& f : factors) detail::demean_one_factor(m, f, max_update);
      res.sweeps = sweep + 1;
      if (max_update < tol) break;
      if (sweep + 1 == max_sweeps)
        throw EstimationError(
            "fixed-effect absorption did not converge after " +
            std::to_string(max_sweeps) + " sweeps (last update " +
            std::to_string(max_update) + ")");
    }
  }

  // Absorbed dof: all levels of the first factor, second factor net of
  // mobility-group redundancy, remaining factors net of one level each
  // (an upper bound, flagged).
  if (factors.size() >= 1) res.dof_absorbed += factors[0].n_levels();
  if (factors.size() >= 2) {
    const int groups = detail::mobility_groups(factors[0], factors[1]);
    res.dof_absorbed += factors[1].n_levels() - groups;
  }
  for (std::size_t k = 2; k < factors.size(); ++k) {
    res.dof_absorbed += factors[k].n_levels() - 1;
    res.dof_conservative = true;
  }

  res.y = m.col(0);
  res.X = m.rightCols(X.cols());
  return res;
}

enum class ClusterMode { City, Month, TwoWay };

inline ClusterMode parse_cluster_mode(const std::string& s) {
  if (s == "city") return ClusterMode::City;
  if (s == "month") return ClusterMode::Month;
  if (s == "two-way" || s == "two_way" || s == "twoway") return ClusterMode::TwoWay;
  throw EstimationError("unknown cluster mode: " + s);
}

// CRV1 sandwich: c * (X'X)^-1 [sum_g X_g' e_g e_g' X_g] (X'X)^-1 with
// c = (G/(G-1)) * ((N-1)/(N-K)); K counts explicit regressors plus absorbed
// dof.
inline Eigen::MatrixXd cluster_cov(const Eigen::MatrixXd& X,
                                   const Eigen::VectorXd& resid,
                                   const std::vector<int>& cluster_ids,
                                   int n_clusters, long k_total) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (n_clusters < 2) throw EstimationError("need at least 2 clusters");
  Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw EstimationError("singular X'X in cluster covariance");

  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(n_clusters, p);
  for (int i = 0; i < n; ++i) scores.row(cluster_ids[i]) += resid[i] * X.row(i);
  const Eigen::MatrixXd meat = scores.transpose() * scores;

  const double g = static_cast<double>(n_clusters);
  const double c = (g / (g - 1.0)) * ((n - 1.0) / (n - static_cast<double>(k_total)));
  const Eigen::MatrixXd bread = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  return c * bread * meat * bread;
}

// Two-way covariance by inclusion-exclusion with each component carrying its
// own CRV1 factor; clamped to PSD if the difference dips below zero.
inline Eigen::MatrixXd two_way_cluster_cov(const Eigen::MatrixXd& X,
                                           const Eigen::VectorXd& resid,
                                           const std::vector<int>& ids_a,
                                           int n_a,
                                           const std::vector<int>& ids_b,
                                           int n_b, long k_total) {
  std::vector<int> inter_ids(ids_a.size());
  std::map<std::pair<int, int>, int> inter_index;
  for (std::size_t i = 0; i < ids_a.size(); ++i) {
    auto [it, inserted] = inter_index.emplace(
        std::make_pair(ids_a[i], ids_b[i]), static_cast<int>(inter_index.size()));
    inter_ids[i] = it->second;
  }
  const Eigen::MatrixXd v = cluster_cov(X, resid, ids_a, n_a, k_total) +
                            cluster_cov(X, resid, ids_b, n_b, k_total) -
                            cluster_cov(X, resid, inter_ids,
                                        static_cast<int>(inter_index.size()),
                                        k_total);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(v);
  if (eig.eigenvalues().minCoeff() >= 0.0) return v;
  const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

struct FeSpec {
  std::string outcome = "harsh_accel";
  std::vector<std::string> controls = {"night", "weekend", "same_route",
                                       "log_consec_days"};
  bool absorb_user = true;
  bool absorb_city = true;
  bool absorb_month = true;
  ClusterMode cluster = ClusterMode::City;
};

struct DidFit {
  double beta = 0.0;
  double se = 0.0;
  double p = 1.0;
  double ci_low = 0.0, ci_high = 0.0;
  double r2_overall = 0.0, r2_within = 0.0, r2_adjusted = 0.0;
  std::size_t n_obs = 0, n_users = 0, n_cities = 0, n_months = 0;
  std::size_t n_clusters = 0;
  double tau_bar = 0.0;
  double avg_city_delta_pp = 0.0;  // beta * tau_bar * 100
  std::vector<std::string> control_names;
  Eigen::VectorXd control_coefs;
  bool dof_conservative = false;
  long dof_absorbed = 0;
};

namespace detail {

inline double control_value(const PanelRow& r, const std::string& name) {
  if (name == "night") return r.night;
  if (name == "weekend") return r.weekend;
  if (name == "same_route") return r.same_route;
  if (name == "log_consec_days") return r.log_consec_days;
  if (name == "log_experience") return r.log_experience;
  if (name == "tub") return r.tub;
  if (name == "eco") return r.eco;
  throw EstimationError("unknown control: " + name);
}

inline std::string month_of_year(const std::string& month_key) {
  const auto pos = month_key.find('-');
  return pos == std::string::npos ? month_key : month_key.substr(pos + 1);
}

struct AbsorbedOls {
  Eigen::VectorXd beta;
  Eigen::VectorXd resid;
  Eigen::MatrixXd cov;
  long k_total = 0;
  long dof_absorbed = 0;
  bool dof_conservative = false;
  std::size_t n_clusters = 0;
  double r2_overall = 0.0, r2_within = 0.0, r2_adjusted = 0.0;
};

// Shared absorbed-OLS core: demean, solve, cluster, R2 bookkeeping.
inline AbsorbedOls absorbed_ols(const Eigen::MatrixXd& X,
                                const Eigen::VectorXd& y,
                                const std::vector<Factor>& factors,
                                const std::vector<Factor>& cluster_factors) {
  AbsorbedOls out;
  const AbsorbResult ab = absorb_fe(X, y, factors);
  out.dof_absorbed = ab.dof_absorbed;
  out.dof_conservative = ab.dof_conservative;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(ab.X);
  qr.setThreshold(1e-10);
  if (qr.rank() < ab.X.cols())
    throw EstimationError(
        "treatment absorbed: regressor collinear after fixed-effect "
        "absorption");
  out.beta = qr.solve(ab.y);
  out.resid = ab.y - ab.X * out.beta;
  out.k_total = static_cast<long>(X.cols()) + ab.dof_absorbed;

  const int n = static_cast<int>(y.size());
  if (cluster_factors.size() == 1) {
    out.n_clusters = cluster_factors[0].n_levels();
    out.cov = cluster_cov(ab.X, out.resid, cluster_factors[0].ids,
                          cluster_factors[0].n_levels(), out.k_total);
  } else if (cluster_factors.size() == 2) {
    out.n_clusters = std::min(cluster_factors[0].n_levels(),
                              cluster_factors[1].n_levels());
    out.cov = two_way_cluster_cov(ab.X, out.resid, cluster_factors[0].ids,
                                  cluster_factors[0].n_levels(),
                                  cluster_factors[1].ids,
                                  cluster_factors[1].n_levels(), out.k_total);
  } else {
    throw EstimationError("cluster spec must have 1 or 2 dimensions");
  }

  const double ssr = out.resid.squaredNorm();
  const double mean_y = y.mean();
  const double tss = (y.array() - mean_y).square().sum();
  const double tss_within = ab.y.squaredNorm();
  out.r2_overall = tss > 0 ? 1.0 - ssr / tss : 0.0;
  out.r2_within = tss_within > 0 ? 1.0 - ssr / tss_within : 0.0;
  const double denom = static_cast<double>(n) - static_cast<double>(out.k_total);
  out.r2_adjusted =
      denom > 0 ? 1.0 - (1.0 - out.r2_overall) * (n - 1.0) / denom : kNaN;
  return out;
}

inline void require_dosed(const std::vector<PanelRow>& rows) {
  for (const auto& r : rows)
    if (!std::isfinite(r.dose))
      throw EstimationError("row " + r.trip_id +
                            " has no dose; join city doses first");
}

inline std::vector<Factor> build_absorb_factors(const std::vector<PanelRow>& rows,
                                                const FeSpec& spec) {
  std::vector<std::string> users, cities, months;
  users.reserve(rows.size());
  for (const auto& r : rows) {
    users.push_back(r.user_id);
    cities.push_back(r.city_id);
    months.push_back(month_of_year(r.month_key));
  }
  std::vector<Factor> factors;
  if (spec.absorb_user) factors.push_back(encode_factor("user", users));
  if (spec.absorb_city) factors.push_back(encode_factor("city", cities));
  if (spec.absorb_month) factors.push_back(encode_factor("month", months));
  if (factors.empty()) throw EstimationError("no factors to absorb");
  return factors;
}

inline std::vector<Factor> build_cluster_factors(
    const std::vector<PanelRow>& rows, ClusterMode mode) {
  std::vector<std::string> cities, months;
  cities.reserve(rows.size());
  for (const auto& r : rows) {
    cities.push_back(r.city_id);
    months.push_back(month_of_year(r.month_key));
  }
  std::vector<Factor> out;
  if (mode == ClusterMode::City || mode == ClusterMode::TwoWay)
    out.push_back(encode_factor("city", cities));
  if (mode == ClusterMode::Month || mode == ClusterMode::TwoWay)
    out.push_back(encode_factor("month", months));
  return out;
}

}  // namespace detail

// Pooled continuous-treatment DiD: outcome on Post x dose plus controls with
// user, city and month-of-year effects absorbed; cluster-robust inference.
inline DidFit fit_did(const FeSpec& spec, const std::vector<PanelRow>& rows) {
  if (rows.empty()) throw EstimationError("empty panel");
  detail::require_dosed(rows);

  const int n = static_cast<int>(rows.size());
  const int p = 1 + static_cast<int>(spec.controls.size());
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const PanelRow& r = rows[i];
    y[i] = r.outcome(spec.outcome);
    X(i, 0) = r.post * r.dose;
    for (std::size_t c = 0; c < spec.controls.size(); ++c)
      X(i, 1 + c) = detail::control_value(r, spec.controls[c]);
  }

  const auto factors = detail::build_absorb_factors(rows, spec);
  const auto clusters = detail::build_cluster_factors(rows, spec.cluster);
  const auto ols = detail::absorbed_ols(X, y, factors, clusters);

  DidFit fit;
  fit.beta = ols.beta[0];
  fit.se = std::sqrt(ols.cov(0, 0));
  const double df = static_cast<double>(ols.n_clusters) - 1.0;
  fit.p = t_two_sided_p(fit.beta / fit.se, df);
  const double tcrit = t_quantile(0.975, df);
  fit.ci_low = fit.beta - tcrit * fit.se;
  fit.ci_high = fit.beta + tcrit * fit.se;
  fit.r2_overall = ols.r2_overall;
  fit.r2_within = ols.r2_within;
  fit.r2_adjusted = ols.r2_adjusted;
  fit.n_obs = rows.size();
  std::set<std::string> users, cities, months;
  for (const auto& r : rows) {
    users.insert(r.user_id);
    cities.insert(r.city_id);
    months.insert(detail::month_of_year(r.month_key));
  }
  fit.n_users = users.size();
  fit.n_cities = cities.size();
  fit.n_months = months.size();
  fit.n_clusters = ols.n_clusters;
  fit.tau_bar = mean_dose(rows);
  fit.avg_city_delta_pp = fit.beta * fit.tau_bar * 100.0;
  fit.control_names = spec.controls;
  fit.control_coefs = ols.beta.tail(spec.controls.size());
  fit.dof_conservative = ols.dof_conservative;
  fit.dof_absorbed = ols.dof_absorbed;
  return fit;
}

struct EventStudyCoef {
  std::string month_key;
  double coef = 0.0;
  double se = 0.0;
  double p = 1.0;
  bool reference = false;
};

struct EventStudyFit {
  std::string reference_month;
  std::vector<EventStudyCoef> coefs;  // sorted by month key
  double pretrend_alpha = 0.05 / 4.0;
  std::size_t n_obs = 0;
  std::size_t n_clusters = 0;
  std::vector<std::string> notes;
};

// Month-by-month dose interactions relative to a reference month.
inline EventStudyFit fit_event_study(const FeSpec& spec,
                                     const std::vector<PanelRow>& rows,
                                     const std::string& reference_month) {
  if (rows.empty()) throw EstimationError("empty panel");
  detail::require_dosed(rows);

  std::set<std::string> month_set;
  for (const auto& r : rows) month_set.insert(r.month_key);
  if (!month_set.count(reference_month))
    throw EstimationError("reference month " + reference_month +
                          " absent from panel");

  std::vector<std::string> event_months;
  for (const auto& m : month_set)
    if (m != reference_month) event_months.push_back(m);

  const int n = static_cast<int>(rows.size());
  const int p =
      static_cast<int>(event_months.size() + spec.controls.size());
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, p);
  Eigen::VectorXd y(n);
  std::map<std::string, int> month_col;
  for (std::size_t j = 0; j < event_months.size(); ++j)
    month_col[event_months[j]] = static_cast<int>(j);
  for (int i = 0; i < n; ++i) {
    const PanelRow& r = rows[i];
    y[i] = r.outcome(spec.outcome);
    auto it = month_col.find(r.month_key);
    if (it != month_col.end()) X(i, it->second) = r.dose;
    for (std::size_t c = 0; c < spec.controls.size(); ++c)
      X(i, event_months.size() + c) = detail::control_value(r, spec.controls[c]);
  }

  const auto factors = detail::build_absorb_factors(rows, spec);
  const auto clusters = detail::build_cluster_factors(rows, spec.cluster);
  const auto ols = detail::absorbed_ols(X, y, factors, clusters);

  EventStudyFit fit;
  fit.reference_month = reference_month;
  fit.n_obs = rows.size();
  fit.n_clusters = ols.n_clusters;
  const double df = static_cast<double>(ols.n_clusters) - 1.0;
  for (const auto& m : month_set) {
    EventStudyCoef c;
    c.month_key = m;
    if (m == reference_month) {
      c.reference = true;  // identically zero by construction
    } else {
      const int j = month_col.at(m);
      c.coef = ols.beta[j];
      c.se = std::sqrt(ols.cov(j, j));
      c.p = t_two_sided_p(c.coef / c.se, df);
    }
    fit.coefs.push_back(c);
  }
  return fit;
}

// City-month aggregate regressions -----------------------------------------

// Placebo DiD on the aggregate panel: fictitious post month, city + month FE,
// city-specific polynomial trends (reference city's trend omitted).
inline DidFit fit_placebo(const std::vector<CityMonthCell>& cells,
                          const std::string& fake_post_month, int trend_order) {
  if (cells.empty()) throw EstimationError("empty aggregate panel");
  for (const auto& c : cells)
    if (!std::isfinite(c.dose))
      throw EstimationError("aggregate cell without dose: " + c.city_id);

  std::set<std::string> month_set, city_set;
  for (const auto& c : cells) {
    month_set.insert(c.month_key);
    city_set.insert(c.city_id);
  }
  std::map<std::string, double> month_t;
  {
    double t = 0.0;
    for (const auto& m : month_set) month_t[m] = t++;
  }

  const int n = static_cast<int>(cells.size());
  std::vector<std::string> cities, months;
  for (const auto& c : cells) {
    cities.push_back(c.city_id);
    months.push_back(c.month_key);
  }
  const Factor city_f = encode_factor("city", cities);
  const Factor month_f = encode_factor("month", months);

  const int n_trend_cities = city_f.n_levels() - 1;  // reference city omitted
  const int p = 1 + trend_order * n_trend_cities;
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const auto& c = cells[i];
    y[i] = c.mean_outcome;
    const int post = c.month_key >= fake_post_month ? 1 : 0;
    X(i, 0) = post * c.dose;
    const double t = month_t.at(c.month_key);
    if (city_f.ids[i] > 0) {
      double tp = 1.0;
      for (int q = 1; q <= trend_order; ++q) {
        tp *= t;
        X(i, 1 + (q - 1) * n_trend_cities + (city_f.ids[i] - 1)) = tp;
      }
    }
  }

  const std::vector<Factor> factors = {city_f, month_f};
  const std::vector<Factor> clusters = {city_f};
  const auto ols = detail::absorbed_ols(X, y, factors, clusters);

  DidFit fit;
  fit.beta = ols.beta[0];
  fit.se = std::sqrt(ols.cov(0, 0));
  const double df = static_cast<double>(ols.n_clusters) - 1.0;
  fit.p = t_two_sided_p(fit.beta / fit.se, df);
  const double tcrit = t_quantile(0.975, df);
  fit.ci_low = fit.beta - tcrit * fit.se;
  fit.ci_high = fit.beta + tcrit * fit.se;
  fit.r2_overall = ols.r2_overall;
  fit.r2_within = ols.r2_within;
  fit.r2_adjusted = ols.r2_adjusted;
  fit.n_obs = cells.size();
  fit.n_cities = city_set.size();
  fit.n_months = month_set.size();
  fit.n_clusters = ols.n_clusters;
  double dose_sum = 0.0;
  for (const auto& c : cells) dose_sum += c.dose;
  fit.tau_bar = dose_sum / n;
  fit.avg_city_delta_pp = fit.beta * fit.tau_bar * 100.0;
  fit.dof_absorbed = ols.dof_absorbed;
  return fit;
}

struct CityDidFit {
  double slope = 0.0;
  double se = 0.0;
  double p = 1.0;
  std::size_t n_cities = 0;
};

namespace detail {

struct CityChange {
  std::string city_id;
  double change = 0.0;
  double dose = 0.0;
};

// Pre-to-post change per city: unweighted mean over window months minus the
// post-month mean. Cities missing either side are skipped.
inline std::vector<CityChange> city_changes(
    const std::vector<CityMonthCell>& cells,
    const std::vector<std::string>& pre_months, const std::string& post_month) {
  std::map<std::string, std::pair<double, int>> pre;  // sum, count
  std::map<std::string, double> post;
  std::map<std::string, double> dose;
  for (const auto& c : cells) {
    dose[c.city_id] = c.dose;
    if (c.month_key == post_month) post[c.city_id] = c.mean_outcome;
    for (const auto& m : pre_months)
      if (c.month_key == m) {
        pre[c.city_id].first += c.mean_outcome;
        pre[c.city_id].second += 1;
      }
  }
  std::vector<CityChange> out;
  for (const auto& [city, acc] : pre) {
    auto it = post.find(city);
    if (it == post.end() || acc.second == 0) continue;
    CityChange ch;
    ch.city_id = city;
    ch.change = it->second - acc.first / acc.second;
    ch.dose = dose.at(city);
    if (std::isfinite(ch.dose)) out.push_back(ch);
  }
  return out;
}

}  // namespace detail

// City-level continuous DiD: OLS of the pre-to-post change on the dose with
// an intercept; HC1 standard error on the slope.
inline CityDidFit fit_city_continuous_did(
    const std::vector<CityMonthCell>& cells,
    const std::vector<std::string>& pre_months, const std::string& post_month) {
  const auto changes = detail::city_changes(cells, pre_months, post_month);
  const int n = static_cast<int>(changes.size());
  if (n < 3) throw EstimationError("need >= 3 cities with pre and post data");

  double dose_mean = 0.0;
  for (const auto& c : changes) dose_mean += c.dose;
  dose_mean /= n;
  double sxx = 0.0;
  for (const auto& c : changes) sxx += (c.dose - dose_mean) * (c.dose - dose_mean);
  if (sxx <= 0.0)
    throw EstimationError("dose has zero variance across cities");

  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = changes[i].dose;
    y[i] = changes[i].change;
  }
  const Eigen::MatrixXd xtx_inv =
      (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(2, 2));
  const Eigen::VectorXd beta = xtx_inv * (X.transpose() * y);
  const Eigen::VectorXd resid = y - X * beta;
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(2, 2);
  for (int i = 0; i < n; ++i)
    meat += resid[i] * resid[i] * X.row(i).transpose() * X.row(i);
  const double hc1 = static_cast<double>(n) / (n - 2.0);
  const Eigen::MatrixXd cov = hc1 * xtx_inv * meat * xtx_inv;

  CityDidFit fit;
  fit.slope = beta[1];
  fit.se = std::sqrt(cov(1, 1));
  fit.p = t_two_sided_p(fit.slope / fit.se, n - 2.0);
  fit.n_cities = n;
  return fit;
}

struct TwoByTwoFit {
  double att = 0.0;
  double se = 0.0;
  double dose_median = 0.0;
  std::size_t n_high = 0, n_low = 0;
};

// Median-split 2x2: difference in mean pre-to-post change between high- and
// low-dose city groups; ties go to the low group.
inline TwoByTwoFit fit_2x2_did(const std::vector<CityMonthCell>& cells,
                               const std::vector<std::string>& pre_months,
                               const std::string& post_month) {
  const auto changes = detail::city_changes(cells, pre_months, post_month);
  if (changes.size() < 4)
    throw EstimationError("need >= 4 cities for a 2x2 split");

  std::vector<double> doses;
  for (const auto& c : changes) doses.push_back(c.dose);
  std::sort(doses.begin(), doses.end());
  const std::size_t n = doses.size();
  const double median =
      n % 2 == 1 ? doses[n / 2] : 0.5 * (doses[n / 2 - 1] + doses[n / 2]);

  std::vector<double> high, low;
  for (const auto& c : changes)
    (c.dose > median ? high : low).push_back(c.change);
  if (high.empty() || low.empty())
    throw EstimationError("empty dose group after median split");

  auto mean_var = [](const std::vector<double>& xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    m /= xs.size();
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    v = xs.size() > 1 ? v / (xs.size() - 1.0) : 0.0;
    return std::make_pair(m, v);
  };
  const auto [mh, vh] = mean_var(high);
  const auto [ml, vl] = mean_var(low);

  TwoByTwoFit fit;
  fit.att = mh - ml;
  fit.se = std::sqrt(vh / high.size() + vl / low.size());
  fit.dose_median = median;
  fit.n_high = high.size();
  fit.n_low = low.size();
  return fit;
}

}  // namespace speedgov
