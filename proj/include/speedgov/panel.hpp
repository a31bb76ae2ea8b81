#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "speedgov/core.hpp"
#include "speedgov/csv.hpp"
#include "speedgov/kinematics.hpp"
#include "speedgov/rng.hpp"
#include "speedgov/telemetry.hpp"

namespace speedgov {

// Estimation-ready trip row. STD is the omitted mode; dose is NaN until a
// reference-month dose table is joined.
struct PanelRow {
  std::string trip_id;
  std::string user_id;
  std::string city_id;
  std::string month_key;
  int y_harsh_accel = 0;
  int y_harsh_decel = 0;
  int y_speeding = 0;
  int harsh_accel_count = 0;
  int harsh_decel_count = 0;
  int tub = 0;
  int eco = 0;
  int night = 0;
  int weekend = 0;
  int same_route = 0;
  int urban = 0;  // descriptive only; collinear with city FE in regressions
  double log_consec_days = 0.0;
  double log_experience = 0.0;
  int post = 0;
  double dose = kNaN;

  double outcome(const std::string& name) const {
    if (name == "harsh_accel") return y_harsh_accel;
    if (name == "harsh_decel") return y_harsh_decel;
    if (name == "speeding") return y_speeding;
    throw EstimationError("unknown outcome: " + name);
  }
};

struct MundlakMeans {
  std::string user_id;
  double mean_tub = 0.0;
  double mean_eco = 0.0;
  double mean_night = 0.0;
  double mean_weekend = 0.0;
  double mean_same_route = 0.0;
  double mean_log_consec_days = 0.0;
  double mean_log_experience = 0.0;
};

struct CityDose {
  std::string city_id;
  double tub_share_nov = 0.0;
  std::size_t n_trips_nov = 0;
};

struct PanelOptions {
  double grid_m = 500.0;
  std::string ban_month;                 // "YYYY-MM"; post = 1 on this month
  std::set<std::string> urban_cities;    // metropolitan city ids
};

namespace detail {

struct GridCell {
  std::string city;
  long long gx = 0, gy = 0;
  bool operator<(const GridCell& o) const {
    if (city != o.city) return city < o.city;
    if (gx != o.gx) return gx < o.gx;
    return gy < o.gy;
  }
};

// Local equirectangular projection anchored at each city's mean origin.
// Adequate at city scale; two points in one cell are < grid*sqrt(2) apart.
class CityGrids {
 public:
  CityGrids(const std::vector<RawTripRecord>& trips, double grid_m)
      : grid_m_(grid_m) {
    std::map<std::string, std::pair<double, std::size_t>> lat_acc, lon_acc;
    for (const auto& t : trips) {
      lat_acc[t.city_id].first += t.origin_lat;
      lat_acc[t.city_id].second += 1;
      lon_acc[t.city_id].first += t.origin_lon;
    }
    for (const auto& [city, acc] : lat_acc) {
      anchors_[city] = {acc.first / acc.second,
                        lon_acc[city].first / acc.second};
    }
  }

  GridCell cell(const RawTripRecord& t) const {
    static constexpr double kEarthRadiusM = 6371000.0;
    static constexpr double kDeg2Rad = M_PI / 180.0;
    const auto& [lat0, lon0] = anchors_.at(t.city_id);
    const double x =
        kEarthRadiusM * std::cos(lat0 * kDeg2Rad) * (t.origin_lon - lon0) * kDeg2Rad;
    const double y = kEarthRadiusM * (t.origin_lat - lat0) * kDeg2Rad;
    return GridCell{t.city_id,
                    static_cast<long long>(std::floor(x / grid_m_)),
                    static_cast<long long>(std::floor(y / grid_m_))};
  }

 private:
  double grid_m_;
  std::map<std::string, std::pair<double, double>> anchors_;
};

}  // namespace detail

// Builds one PanelRow per trip: context covariates from the rider's ordered
// history plus the outcomes from `features` (keyed by trip_id). Rider history
// is ordered by UTC instant with trip_id as the tiebreaker.
inline std::vector<PanelRow> build_covariates(
    const std::vector<RawTripRecord>& trips,
    const std::vector<TripFeatures>& features, const PanelOptions& opt) {
  std::unordered_map<std::string, const TripFeatures*> feat;
  feat.reserve(features.size());
  for (const auto& f : features) feat[f.trip_id] = &f;

  std::vector<std::size_t> order(trips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ta = trips[a];
    const auto& tb = trips[b];
    if (ta.user_id != tb.user_id) return ta.user_id < tb.user_id;
    if (ta.start_time.utc_epoch_s != tb.start_time.utc_epoch_s)
      return ta.start_time.utc_epoch_s < tb.start_time.utc_epoch_s;
    return ta.trip_id < tb.trip_id;
  });

  const detail::CityGrids grids(trips, opt.grid_m);

  std::vector<PanelRow> rows(trips.size());
  std::set<detail::GridCell> seen_cells;
  std::set<std::int64_t> seen_days;
  std::size_t history_len = 0;
  std::string current_user;

  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& t = trips[order[k]];
    if (t.user_id != current_user) {
      current_user = t.user_id;
      seen_cells.clear();
      seen_days.clear();
      history_len = 0;
      // Day runs may include later same-user trips on the same day, which is
      // equivalent to a prefix scan because days only move forward.
      for (std::size_t j = k; j < order.size() &&
                              trips[order[j]].user_id == current_user; ++j)
        seen_days.insert(local_day_index(trips[order[j]].start_time));
    }

    PanelRow r;
    r.trip_id = t.trip_id;
    r.user_id = t.user_id;
    r.city_id = t.city_id;
    r.month_key = month_key(t.start_time);
    r.tub = t.mode == Mode::TUB ? 1 : 0;
    r.eco = t.mode == Mode::ECO ? 1 : 0;
    r.night = is_night(t.start_time) ? 1 : 0;
    r.weekend = is_weekend(t.start_time) ? 1 : 0;
    r.urban = opt.urban_cities.count(t.city_id) ? 1 : 0;
    r.post = (!opt.ban_month.empty() && r.month_key == opt.ban_month) ? 1 : 0;

    const auto cell = grids.cell(t);
    r.same_route = seen_cells.count(cell) ? 1 : 0;
    r.log_experience = std::log(1.0 + static_cast<double>(history_len));

    const std::int64_t day = local_day_index(t.start_time);
    std::int64_t run = 0;
    while (seen_days.count(day - run)) ++run;
    r.log_consec_days = std::log(1.0 + static_cast<double>(run));

    auto it = feat.find(t.trip_id);
    if (it == feat.end())
      throw SchemaError("no features for trip " + t.trip_id);
    const TripFeatures& f = *it->second;
    r.y_harsh_accel = f.harsh_accel;
    r.y_harsh_decel = f.harsh_decel;
    r.y_speeding = f.speeding;
    r.harsh_accel_count = f.harsh_accel_count;
    r.harsh_decel_count = f.harsh_decel_count;

    rows[order[k]] = std::move(r);
    seen_cells.insert(cell);
    ++history_len;
  }
  return rows;
}

struct MundlakReport {
  std::vector<MundlakMeans> means;
  std::vector<std::string> dropped_users;  // no qualifying rows
};

// Per-user arithmetic means. With pre_ban_only, only rows with post == 0
// qualify; users whose rows all fall in the post period are dropped.
inline MundlakReport compute_mundlak(const std::vector<PanelRow>& rows,
                                     bool pre_ban_only) {
  std::map<std::string, std::vector<const PanelRow*>> by_user;
  for (const auto& r : rows) by_user[r.user_id].push_back(&r);

  MundlakReport out;
  for (const auto& [user, urows] : by_user) {
    MundlakMeans m;
    m.user_id = user;
    std::size_t n = 0;
    for (const PanelRow* r : urows) {
      if (pre_ban_only && r->post) continue;
      m.mean_tub += r->tub;
      m.mean_eco += r->eco;
      m.mean_night += r->night;
      m.mean_weekend += r->weekend;
      m.mean_same_route += r->same_route;
      m.mean_log_consec_days += r->log_consec_days;
      m.mean_log_experience += r->log_experience;
      ++n;
    }
    if (n == 0) {
      out.dropped_users.push_back(user);
      continue;
    }
    const double inv = 1.0 / static_cast<double>(n);
    m.mean_tub *= inv;
    m.mean_eco *= inv;
    m.mean_night *= inv;
    m.mean_weekend *= inv;
    m.mean_same_route *= inv;
    m.mean_log_consec_days *= inv;
    m.mean_log_experience *= inv;
    out.means.push_back(std::move(m));
  }
  return out;
}

struct CityDoseReport {
  std::vector<CityDose> doses;
  std::vector<std::string> excluded_cities;  // absent from reference month
};

// TUB trip share per city in the reference month. Cities with no trips in
// that month are excluded and reported, not defaulted to zero.
inline CityDoseReport city_dose(const std::vector<PanelRow>& rows,
                                const std::string& reference_month) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // tub, all
  std::set<std::string> all_cities;
  for (const auto& r : rows) {
    all_cities.insert(r.city_id);
    if (r.month_key == reference_month) {
      auto& c = counts[r.city_id];
      c.first += r.tub;
      c.second += 1;
    }
  }
  CityDoseReport out;
  for (const auto& city : all_cities) {
    auto it = counts.find(city);
    if (it == counts.end()) {
      out.excluded_cities.push_back(city);
      continue;
    }
    CityDose d;
    d.city_id = city;
    d.n_trips_nov = it->second.second;
    d.tub_share_nov = static_cast<double>(it->second.first) /
                      static_cast<double>(it->second.second);
    out.doses.push_back(d);
  }
  if (out.doses.empty())
    throw EstimationError("no city has trips in reference month " +
                          reference_month);
  return out;
}

// Attaches the city dose to each row; rows in excluded cities keep dose NaN.
inline void join_dose(std::vector<PanelRow>& rows,
                      const std::vector<CityDose>& doses) {
  std::unordered_map<std::string, double> by_city;
  for (const auto& d : doses) by_city[d.city_id] = d.tub_share_nov;
  for (auto& r : rows) {
    auto it = by_city.find(r.city_id);
    r.dose = it == by_city.end() ? kNaN : it->second;
  }
}

// Trip-weighted mean dose over rows with a joined dose.
inline double mean_dose(const std::vector<PanelRow>& rows) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows)
    if (std::isfinite(r.dose)) {
      sum += r.dose;
      ++n;
    }
  if (n == 0) throw EstimationError("no rows carry a dose");
  return sum / static_cast<double>(n);
}

struct StratifiedSample {
  std::vector<PanelRow> rows;
  double realized_tub_share = 0.0;
  std::vector<std::string> empty_cells;
};

// Draws up to cell_target rows per (mode x month) cell without replacement,
// seeded. Balancing the modes is the point: the result deliberately does not
// preserve the universe's TUB mass share, which is why the realized share is
// reported.
inline StratifiedSample stratified_phase1_sample(
    const std::vector<PanelRow>& rows, std::size_t cell_target,
    std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const char* mode = rows[i].tub ? "TUB" : (rows[i].eco ? "ECO" : "STD");
    cells[std::string(mode) + "|" + rows[i].month_key].push_back(i);
  }
  const CounterRng rng(seed);
  StratifiedSample out;
  for (auto& [key, idx] : cells) {
    if (idx.empty()) {
      out.empty_cells.push_back(key);
      continue;
    }
    const std::uint64_t cell_key =
        fnv1a64(std::span<const char>(key.data(), key.size()));
    deterministic_shuffle(idx, rng, cell_key);
    const std::size_t take = std::min(cell_target, idx.size());
    for (std::size_t k = 0; k < take; ++k) out.rows.push_back(rows[idx[k]]);
  }
  std::size_t tub = 0;
  for (const auto& r : out.rows) tub += r.tub;
  out.realized_tub_share =
      out.rows.empty() ? 0.0
                       : static_cast<double>(tub) / static_cast<double>(out.rows.size());
  return out;
}

enum class SubgroupLabel { Low, High, Unassigned };

struct SubgroupSplit {
  std::map<std::string, SubgroupLabel> labels;
  double median = 0.0;
  std::size_t n_assigned = 0;
};

// Median split on a per-user statistic computed from trips inside
// [window_start, window_end] (month keys, inclusive). Ties go to "low";
// users without window trips are unassigned.
inline SubgroupSplit subgroup_split(const std::vector<PanelRow>& rows,
                                    const std::string& dimension,
                                    const std::string& window_start,
                                    const std::string& window_end) {
  std::map<std::string, std::vector<const PanelRow*>> by_user;
  std::set<std::string> all_users;
  for (const auto& r : rows) {
    all_users.insert(r.user_id);
    if (r.month_key >= window_start && r.month_key <= window_end)
      by_user[r.user_id].push_back(&r);
  }

  std::map<std::string, double> stat;
  for (const auto& [user, urows] : by_user) {
    double s = 0.0;
    if (dimension == "experience") {
      // Experience entering the user's last window trip.
      for (const PanelRow* r : urows) s = std::max(s, r->log_experience);
    } else if (dimension == "night_rate" || dimension == "same_route_rate") {
      for (const PanelRow* r : urows)
        s += dimension == "night_rate" ? r->night : r->same_route;
      s /= static_cast<double>(urows.size());
    } else {
      throw EstimationError("unknown subgroup dimension: " + dimension);
    }
    stat[user] = s;
  }
  if (stat.empty()) throw EstimationError("no users in subgroup window");

  std::vector<double> values;
  values.reserve(stat.size());
  for (const auto& [_, v] : stat) values.push_back(v);
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const double median = n % 2 == 1
                            ? values[n / 2]
                            : 0.5 * (values[n / 2 - 1] + values[n / 2]);

  SubgroupSplit out;
  out.median = median;
  for (const auto& user : all_users) {
    auto it = stat.find(user);
    if (it == stat.end()) {
      out.labels[user] = SubgroupLabel::Unassigned;
    } else {
      out.labels[user] = it->second > median ? SubgroupLabel::High
                                             : SubgroupLabel::Low;
      ++out.n_assigned;
    }
  }
  return out;
}

struct CityMonthCell {
  std::string city_id;
  std::string month_key;
  double mean_outcome = 0.0;
  std::size_t n_trips = 0;
  double dose = kNaN;
};

// Unweighted trip mean per (city, month); feeds the placebo and city-level
// estimators. Cells are emitted in sorted key order.
inline std::vector<CityMonthCell> aggregate_city_month(
    const std::vector<PanelRow>& rows, const std::string& outcome) {
  std::map<std::pair<std::string, std::string>, CityMonthCell> cells;
  for (const auto& r : rows) {
    auto& c = cells[{r.city_id, r.month_key}];
    if (c.n_trips == 0) {
      c.city_id = r.city_id;
      c.month_key = r.month_key;
      c.dose = r.dose;
    }
    c.mean_outcome += r.outcome(outcome);
    c.n_trips += 1;
  }
  std::vector<CityMonthCell> out;
  out.reserve(cells.size());
  for (auto& [_, c] : cells) {
    c.mean_outcome /= static_cast<double>(c.n_trips);
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Panel CSV round trip (CLI artifacts)

inline const std::vector<std::string>& panel_columns() {
  static const std::vector<std::string> cols = {
      "trip_id",       "user_id",          "city_id",
      "month_key",     "harsh_accel",      "harsh_decel",
      "speeding",      "harsh_accel_count", "harsh_decel_count",
      "tub",           "eco",              "night",
      "weekend",       "same_route",       "urban",
      "log_consec_days", "log_experience", "post",
      "dose"};
  return cols;
}

inline std::string serialize_panel(const std::vector<PanelRow>& rows) {
  CsvWriter w(panel_columns());
  for (const auto& r : rows) {
    w.add_row({r.trip_id, r.user_id, r.city_id, r.month_key,
               std::to_string(r.y_harsh_accel), std::to_string(r.y_harsh_decel),
               std::to_string(r.y_speeding), std::to_string(r.harsh_accel_count),
               std::to_string(r.harsh_decel_count), std::to_string(r.tub),
               std::to_string(r.eco), std::to_string(r.night),
               std::to_string(r.weekend), std::to_string(r.same_route),
               std::to_string(r.urban), CsvWriter::fmt_exact(r.log_consec_days),
               CsvWriter::fmt_exact(r.log_experience), std::to_string(r.post),
               std::isfinite(r.dose) ? CsvWriter::fmt_exact(r.dose) : "NA"});
  }
  return w.to_string();
}

inline std::vector<PanelRow> parse_panel(const CsvTable& t) {
  std::vector<PanelRow> rows;
  rows.reserve(t.n_rows());
  auto icol = [&](const std::string& name) { return t.column(name); };
  const std::size_t c_trip = icol("trip_id"), c_user = icol("user_id"),
                    c_city = icol("city_id"), c_month = icol("month_key"),
                    c_ha = icol("harsh_accel"), c_hd = icol("harsh_decel"),
                    c_sp = icol("speeding"), c_hac = icol("harsh_accel_count"),
                    c_hdc = icol("harsh_decel_count"), c_tub = icol("tub"),
                    c_eco = icol("eco"), c_night = icol("night"),
                    c_we = icol("weekend"), c_sr = icol("same_route"),
                    c_urban = icol("urban"), c_lcd = icol("log_consec_days"),
                    c_lexp = icol("log_experience"), c_post = icol("post"),
                    c_dose = icol("dose");
  for (std::size_t i = 0; i < t.n_rows(); ++i) {
    PanelRow r;
    r.trip_id = t.cell(i, c_trip);
    r.user_id = t.cell(i, c_user);
    r.city_id = t.cell(i, c_city);
    r.month_key = t.cell(i, c_month);
    auto geti = [&](std::size_t c) {
      double v;
      if (!parse_double(t.cell(i, c), v))
        throw SchemaError("bad numeric cell '" + t.cell(i, c) + "' in panel row " +
                          std::to_string(i));
      return static_cast<int>(v);
    };
    auto getd = [&](std::size_t c) {
      double v;
      if (!parse_double(t.cell(i, c), v))
        throw SchemaError("bad numeric cell '" + t.cell(i, c) + "' in panel row " +
                          std::to_string(i));
      return v;
    };
    r.y_harsh_accel = geti(c_ha);
    r.y_harsh_decel = geti(c_hd);
    r.y_speeding = geti(c_sp);
    r.harsh_accel_count = geti(c_hac);
    r.harsh_decel_count = geti(c_hdc);
    r.tub = geti(c_tub);
    r.eco = geti(c_eco);
    r.night = geti(c_night);
    r.weekend = geti(c_we);
    r.same_route = geti(c_sr);
    r.urban = geti(c_urban);
    r.log_consec_days = getd(c_lcd);
    r.log_experience = getd(c_lexp);
    r.post = geti(c_post);
    const std::string& dose = t.cell(i, c_dose);
    r.dose = dose == "NA" ? kNaN : getd(c_dose);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace speedgov
