#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "speedgov/core.hpp"
#include "speedgov/fe.hpp"
#include "speedgov/math/special.hpp"
#include "speedgov/panel.hpp"
#include "speedgov/rng.hpp"

namespace speedgov {

struct CorrectionResult {
  std::vector<double> raw;
  std::vector<double> bonferroni;
  std::vector<double> holm;
  std::vector<double> bh;
  std::size_t m = 0;
  double family_alpha = 0.05;
};

// Bonferroni / Holm step-down / Benjamini-Hochberg step-up adjusted p-values,
// all capped at 1 and with the monotonicity each method requires.
inline CorrectionResult correct_pvalues(const std::vector<double>& p,
                                        double family_alpha = 0.05) {
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0))
      throw EstimationError("p-value outside [0,1]");
  const std::size_t m = p.size();
  CorrectionResult out;
  out.raw = p;
  out.m = m;
  out.family_alpha = family_alpha;
  out.bonferroni.resize(m);
  out.holm.resize(m);
  out.bh.resize(m);
  if (m == 0) return out;

  for (std::size_t i = 0; i < m; ++i)
    out.bonferroni[i] = std::min(1.0, p[i] * static_cast<double>(m));

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });

  // Holm: running max of (m-j) * p_(j) down the sorted list.
  double running = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    running = std::max(running, std::min(1.0, (m - j) * p[order[j]]));
    out.holm[order[j]] = running;
  }

  // BH: running min of p_(j) * m / (j+1) up from the largest.
  double running_min = 1.0;
  for (std::size_t j = m; j-- > 0;) {
    running_min =
        std::min(running_min, std::min(1.0, p[order[j]] * m / (j + 1.0)));
    out.bh[order[j]] = running_min;
  }
  return out;
}

struct OsterInput {
  double beta_short = 0.0;
  double beta_full = 0.0;
  double r2_short = 0.0;
  double r2_full = 0.0;
  double r2_max = kNaN;  // defaults to 1.3 * r2_full
  double delta = 1.0;
};

struct OsterResult {
  double beta_star = 0.0;
  double r2_max = 0.0;
};

// Coefficient-stability bound: extrapolates the coefficient movement from the
// short to the full specification out to r2_max.
inline OsterResult oster_bound(const OsterInput& in) {
  if (!(in.r2_full > in.r2_short))
    throw EstimationError("oster bound requires r2_full > r2_short");
  OsterResult out;
  out.r2_max = std::isfinite(in.r2_max) ? in.r2_max : 1.3 * in.r2_full;
  out.beta_star = in.beta_full -
                  in.delta * (in.beta_short - in.beta_full) *
                      (out.r2_max - in.r2_full) / (in.r2_full - in.r2_short);
  return out;
}

struct PermutationResult {
  double observed_slope = 0.0;
  double p = 1.0;
  int n_perm = 0;
  std::size_t n_cities = 0;
};

// Permutation test on the city-level continuous DiD slope: reassigns the dose
// labels across cities, recomputes the slope, and reports the add-one
// two-sided p. Each replicate derives its permutation from (seed, replicate),
// so scheduling cannot change the answer.
inline PermutationResult permutation_test(
    const std::vector<CityMonthCell>& cells,
    const std::vector<std::string>& pre_months, const std::string& post_month,
    int n_perm = 500, std::uint64_t seed = 0) {
  const auto changes = detail::city_changes(cells, pre_months, post_month);
  if (changes.size() < 3) throw EstimationError("need >= 3 cities");
  const std::size_t n = changes.size();

  std::vector<double> dose(n), change(n);
  for (std::size_t i = 0; i < n; ++i) {
    dose[i] = changes[i].dose;
    change[i] = changes[i].change;
  }
  auto slope_of = [&](const std::vector<double>& d) {
    double dm = 0.0, cm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dm += d[i];
      cm += change[i];
    }
    dm /= n;
    cm /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sxy += (d[i] - dm) * (change[i] - cm);
      sxx += (d[i] - dm) * (d[i] - dm);
    }
    if (sxx <= 0.0) throw EstimationError("dose has zero variance");
    return sxy / sxx;
  };

  PermutationResult out;
  out.observed_slope = slope_of(dose);
  out.n_perm = n_perm;
  out.n_cities = n;

  const CounterRng rng(seed);
  int n_extreme = 0;
  for (int rep = 0; rep < n_perm; ++rep) {
    std::vector<double> shuffled = dose;
    deterministic_shuffle(shuffled, rng, static_cast<std::uint64_t>(rep) + 1);
    if (std::fabs(slope_of(shuffled)) >= std::fabs(out.observed_slope))
      ++n_extreme;
  }
  out.p = (1.0 + n_extreme) / (1.0 + n_perm);
  return out;
}

struct DoseResponseCorr {
  double pearson_r = 0.0;
  double p = 1.0;
  std::size_t n_cities = 0;
};

// Pearson correlation across cities between the change in TUB share and the
// change in the outcome mean from month_a to month_b.
inline DoseResponseCorr dose_response_corr(const std::vector<PanelRow>& rows,
                                           const std::string& outcome,
                                           const std::string& month_a,
                                           const std::string& month_b) {
  struct Acc {
    double tub_a = 0, n_a = 0, tub_b = 0, n_b = 0;
    double y_a = 0, y_b = 0;
  };
  std::map<std::string, Acc> by_city;
  for (const auto& r : rows) {
    if (r.month_key != month_a && r.month_key != month_b) continue;
    Acc& a = by_city[r.city_id];
    if (r.month_key == month_a) {
      a.tub_a += r.tub;
      a.y_a += r.outcome(outcome);
      a.n_a += 1;
    } else {
      a.tub_b += r.tub;
      a.y_b += r.outcome(outcome);
      a.n_b += 1;
    }
  }
  std::vector<double> dx, dy;
  for (const auto& [city, a] : by_city) {
    if (a.n_a == 0 || a.n_b == 0) continue;
    dx.push_back(a.tub_b / a.n_b - a.tub_a / a.n_a);
    dy.push_back(a.y_b / a.n_b - a.y_a / a.n_a);
  }
  const std::size_t n = dx.size();
  if (n < 3) throw EstimationError("need >= 3 cities in both months");

  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += dx[i];
    my += dy[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (dx[i] - mx) * (dy[i] - my);
    sxx += (dx[i] - mx) * (dx[i] - mx);
    syy += (dy[i] - my) * (dy[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0)
    throw EstimationError("zero variance in dose-response series");

  DoseResponseCorr out;
  out.pearson_r = sxy / std::sqrt(sxx * syy);
  out.n_cities = n;
  const double df = static_cast<double>(n) - 2.0;
  const double denom = 1.0 - out.pearson_r * out.pearson_r;
  if (denom <= 0.0) {
    out.p = 0.0;
  } else {
    const double t = out.pearson_r * std::sqrt(df / denom);
    out.p = t_two_sided_p(t, df);
  }
  return out;
}

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

inline WelchResult welch_t_test(double mean1, double var1, std::size_t n1,
                                double mean2, double var2, std::size_t n2) {
  WelchResult out;
  const double a = var1 / n1, b = var2 / n2;
  out.t = (mean1 - mean2) / std::sqrt(a + b);
  // Satterthwaite degrees of freedom
  out.df = (a + b) * (a + b) /
           (a * a / (n1 - 1.0) + b * b / (n2 - 1.0));
  out.p = t_two_sided_p(out.t, out.df);
  return out;
}

inline double cohens_d(double mean1, double var1, std::size_t n1, double mean2,
                       double var2, std::size_t n2) {
  const double pooled =
      ((n1 - 1.0) * var1 + (n2 - 1.0) * var2) / (n1 + n2 - 2.0);
  return (mean1 - mean2) / std::sqrt(pooled);
}

struct CompositionResult {
  std::size_t n_switchers = 0;
  std::size_t n_controls = 0;
  double switcher_change = 0.0;  // mean within-user post-minus-pre change
  double control_change = 0.0;
  double did = 0.0;
  double welch_t = 0.0;
  double welch_df = 0.0;
  double welch_p = 1.0;
  double cohens_d = 0.0;
  std::string verdict;  // negligible | small | medium+
};

// Outcome used on governed-mode trips inside the composition check; counts by
// default, binary indicators behind the same name scheme.
inline double composition_outcome(const PanelRow& r, const std::string& name) {
  if (name == "harsh_accel_count") return r.harsh_accel_count;
  if (name == "harsh_decel_count") return r.harsh_decel_count;
  return r.outcome(name);
}

// Within-user pre-vs-post comparison on governed-mode (STD/ECO) trips between
// mode switchers and never-TUB controls.
inline CompositionResult composition_check(
    const std::vector<PanelRow>& rows, const std::vector<std::string>& pre_months,
    const std::string& post_month, const std::string& outcome = "harsh_accel_count") {
  auto in_pre = [&](const PanelRow& r) {
    return std::find(pre_months.begin(), pre_months.end(), r.month_key) !=
           pre_months.end();
  };

  struct UserAcc {
    bool tub_pre = false;
    bool tub_ever = false;
    double pre_sum = 0.0;
    std::size_t pre_n = 0;
    double post_sum = 0.0;
    std::size_t post_n = 0;
  };
  std::map<std::string, UserAcc> users;
  for (const auto& r : rows) {
    UserAcc& u = users[r.user_id];
    if (r.tub) {
      u.tub_ever = true;
      if (in_pre(r)) u.tub_pre = true;
      continue;  // pre/post means are restricted to governed-mode trips
    }
    if (in_pre(r)) {
      u.pre_sum += composition_outcome(r, outcome);
      u.pre_n += 1;
    } else if (r.month_key == post_month) {
      u.post_sum += composition_outcome(r, outcome);
      u.post_n += 1;
    }
  }

  std::vector<double> switcher_changes, control_changes;
  for (const auto& [id, u] : users) {
    if (u.pre_n == 0 || u.post_n == 0) continue;
    const double change = u.post_sum / u.post_n - u.pre_sum / u.pre_n;
    if (u.tub_pre) {
      switcher_changes.push_back(change);
    } else if (!u.tub_ever) {
      control_changes.push_back(change);
    }
  }
  if (switcher_changes.empty())
    throw EstimationError("composition check: switcher group is empty");
  if (control_changes.empty())
    throw EstimationError("composition check: control group is empty");

  auto mean_var = [](const std::vector<double>& xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    m /= xs.size();
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    v = xs.size() > 1 ? v / (xs.size() - 1.0) : 0.0;
    return std::make_pair(m, v);
  };
  const auto [ms, vs] = mean_var(switcher_changes);
  const auto [mc, vc] = mean_var(control_changes);

  CompositionResult out;
  out.n_switchers = switcher_changes.size();
  out.n_controls = control_changes.size();
  out.switcher_change = ms;
  out.control_change = mc;
  out.did = ms - mc;
  const WelchResult w = welch_t_test(ms, vs, out.n_switchers, mc, vc, out.n_controls);
  out.welch_t = w.t;
  out.welch_df = w.df;
  out.welch_p = w.p;
  out.cohens_d = cohens_d(ms, vs, out.n_switchers, mc, vc, out.n_controls);
  const double ad = std::fabs(out.cohens_d);
  out.verdict = ad < 0.2 ? "negligible" : (ad < 0.5 ? "small" : "medium+");
  return out;
}

struct ReweightResult {
  double delta_p1_pp = 0.0;
  double tau_p1 = 0.0;
  double tau_uni = 0.0;
  double ratio = 0.0;  // tau_uni / tau_p1
  double delta_reweighted_pp = 0.0;
  double delta_p2_pp = 0.0;
  double residual_pp = 0.0;        // delta_p2 - delta_reweighted
  double reweighted_share = 0.0;   // delta_reweighted / delta_p2
};

// Choice-based-sampling rescaling of the Phase-I prediction to the trip
// universe's treated mass share, and its split of the Phase-I/II gap.
inline ReweightResult reweight_decomposition(double delta_p1_pp, double tau_p1,
                                             double tau_uni, double delta_p2_pp) {
  if (tau_p1 <= 0.0) throw EstimationError("tau_p1 must be positive");
  ReweightResult out;
  out.delta_p1_pp = delta_p1_pp;
  out.tau_p1 = tau_p1;
  out.tau_uni = tau_uni;
  out.ratio = tau_uni / tau_p1;
  out.delta_reweighted_pp = delta_p1_pp * out.ratio;
  out.delta_p2_pp = delta_p2_pp;
  out.residual_pp = delta_p2_pp - out.delta_reweighted_pp;
  out.reweighted_share =
      delta_p2_pp != 0.0 ? out.delta_reweighted_pp / delta_p2_pp : kNaN;
  return out;
}

struct ConcordanceRow {
  std::string outcome;
  std::string subgroup;  // "aggregate" or "<dimension>_<high|low>"
  double phase1_delta_pp = 0.0;
  double phase2_delta_pp = 0.0;
  double ci_low_pp = 0.0;
  double ci_high_pp = 0.0;
  bool inside_ci = false;
};

// Assembles the predict-then-validate table: one row per (outcome, subgroup)
// with the Phase-I prediction against the Phase-II interval, both in
// percentage points at the sample-mean dose.
inline std::vector<ConcordanceRow> concordance_report(
    const std::map<std::string, double>& phase1_delta_pp,
    const std::map<std::pair<std::string, std::string>, DidFit>& phase2_fits) {
  std::vector<ConcordanceRow> rows;
  std::vector<std::string> unmatched;
  for (const auto& [key, fit] : phase2_fits) {
    const auto& [outcome, subgroup] = key;
    auto it = phase1_delta_pp.find(outcome);
    if (it == phase1_delta_pp.end()) {
      unmatched.push_back(outcome);
      continue;
    }
    ConcordanceRow row;
    row.outcome = outcome;
    row.subgroup = subgroup;
    row.phase1_delta_pp = it->second;
    row.phase2_delta_pp = fit.avg_city_delta_pp;
    row.ci_low_pp = fit.ci_low * fit.tau_bar * 100.0;
    row.ci_high_pp = fit.ci_high * fit.tau_bar * 100.0;
    row.inside_ci = row.phase1_delta_pp >= row.ci_low_pp &&
                    row.phase1_delta_pp <= row.ci_high_pp;
    rows.push_back(row);
  }
  for (const auto& [outcome, _] : phase1_delta_pp) {
    bool found = false;
    for (const auto& [key, __] : phase2_fits)
      if (key.first == outcome) { found = true; break; }
    if (!found) unmatched.push_back(outcome);
  }
  if (!unmatched.empty()) {
    std::string msg = "concordance key mismatch:";
    for (const auto& k : unmatched) msg += " " + k;
    throw EstimationError(msg);
  }
  return rows;
}

}  // namespace speedgov
