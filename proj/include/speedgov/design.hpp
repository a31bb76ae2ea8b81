#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "speedgov/core.hpp"
#include "speedgov/panel.hpp"

namespace speedgov {

struct DesignOptions {
  bool mundlak = true;
  bool city_fe = true;
  bool month_fe = true;
};

// Row-major staging of the trip panel for the logit family. Mode columns are
// kept apart from the fixed block because their coefficients vary by draw;
// the fixed block collects interactions, controls, Mundlak means, intercept
// and FE dummies (first level of each factor dropped).
struct LogitDesign {
  Eigen::VectorXd y;
  Eigen::VectorXd tub;
  Eigen::VectorXd eco;
  Eigen::MatrixXd X;
  std::vector<std::string> fixed_names;
  std::vector<int> tub_linked_cols;  // X columns that are identically 0 when tub is 0

  struct Block {
    std::string user_id;
    std::int64_t draw_index = 0;  // position of user_id in sorted user order
    int begin = 0;
    int end = 0;  // half-open row range
  };
  std::vector<Block> blocks;

  std::size_t n_rows() const { return static_cast<std::size_t>(y.size()); }
  std::size_t n_users() const { return blocks.size(); }
  std::size_t n_fixed() const { return fixed_names.size(); }
};

inline LogitDesign build_logit_design(const std::vector<PanelRow>& rows,
                                      const std::vector<MundlakMeans>& mundlak,
                                      const std::string& outcome,
                                      const DesignOptions& opt = {}) {
  if (rows.empty()) throw EstimationError("empty panel");

  std::map<std::string, const MundlakMeans*> mm;
  for (const auto& m : mundlak) mm[m.user_id] = &m;

  // Stable user ordering: draws and the likelihood sum are keyed by the
  // user's rank among sorted ids, so row permutations cannot move them.
  std::set<std::string> users, cities, months;
  for (const auto& r : rows) {
    users.insert(r.user_id);
    cities.insert(r.city_id);
    months.insert(r.month_key);
  }
  std::map<std::string, std::int64_t> user_rank;
  {
    std::int64_t k = 0;
    for (const auto& u : users) user_rank[u] = k++;
  }

  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rows[a].user_id != rows[b].user_id)
      return rows[a].user_id < rows[b].user_id;
    return a < b;
  });

  LogitDesign d;
  const int n = static_cast<int>(rows.size());
  d.y.resize(n);
  d.tub.resize(n);
  d.eco.resize(n);

  d.fixed_names = {"TUB_x_log_experience", "TUB_x_night", "TUB_x_same_route",
                   "ECO_x_log_experience", "night",       "weekend",
                   "same_route",           "log_consec_days",
                   "log_experience"};
  d.tub_linked_cols = {0, 1, 2};
  if (opt.mundlak) {
    for (const char* nm :
         {"mean_tub", "mean_eco", "mean_night", "mean_weekend",
          "mean_same_route", "mean_log_consec_days", "mean_log_experience"})
      d.fixed_names.push_back(nm);
  }
  d.fixed_names.push_back("intercept");

  std::vector<std::string> city_levels(cities.begin(), cities.end());
  std::vector<std::string> month_levels(months.begin(), months.end());
  std::map<std::string, int> city_col, month_col;
  if (opt.city_fe) {
    for (std::size_t i = 1; i < city_levels.size(); ++i) {
      city_col[city_levels[i]] = static_cast<int>(d.fixed_names.size());
      d.fixed_names.push_back("city_" + city_levels[i]);
    }
  }
  if (opt.month_fe) {
    for (std::size_t i = 1; i < month_levels.size(); ++i) {
      month_col[month_levels[i]] = static_cast<int>(d.fixed_names.size());
      d.fixed_names.push_back("month_" + month_levels[i]);
    }
  }

  const int p = static_cast<int>(d.fixed_names.size());
  d.X = Eigen::MatrixXd::Zero(n, p);

  for (int i = 0; i < n; ++i) {
    const PanelRow& r = rows[order[i]];
    d.y[i] = r.outcome(outcome);
    d.tub[i] = r.tub;
    d.eco[i] = r.eco;
    int c = 0;
    d.X(i, c++) = r.tub * r.log_experience;
    d.X(i, c++) = r.tub * r.night;
    d.X(i, c++) = r.tub * r.same_route;
    d.X(i, c++) = r.eco * r.log_experience;
    d.X(i, c++) = r.night;
    d.X(i, c++) = r.weekend;
    d.X(i, c++) = r.same_route;
    d.X(i, c++) = r.log_consec_days;
    d.X(i, c++) = r.log_experience;
    if (opt.mundlak) {
      auto it = mm.find(r.user_id);
      if (it == mm.end())
        throw EstimationError("no Mundlak means for user " + r.user_id);
      const MundlakMeans& m = *it->second;
      d.X(i, c++) = m.mean_tub;
      d.X(i, c++) = m.mean_eco;
      d.X(i, c++) = m.mean_night;
      d.X(i, c++) = m.mean_weekend;
      d.X(i, c++) = m.mean_same_route;
      d.X(i, c++) = m.mean_log_consec_days;
      d.X(i, c++) = m.mean_log_experience;
    }
    d.X(i, c++) = 1.0;  // intercept
    if (opt.city_fe) {
      auto it = city_col.find(r.city_id);
      if (it != city_col.end()) d.X(i, it->second) = 1.0;
    }
    if (opt.month_fe) {
      auto it = month_col.find(r.month_key);
      if (it != month_col.end()) d.X(i, it->second) = 1.0;
    }
  }

  // Contiguous user blocks in the sorted row order.
  int begin = 0;
  for (int i = 1; i <= n; ++i) {
    if (i == n || rows[order[i]].user_id != rows[order[begin]].user_id) {
      LogitDesign::Block b;
      b.user_id = rows[order[begin]].user_id;
      b.draw_index = user_rank[b.user_id];
      b.begin = begin;
      b.end = i;
      d.blocks.push_back(std::move(b));
      begin = i;
    }
  }
  return d;
}

}  // namespace speedgov
