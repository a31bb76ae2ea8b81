#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "speedgov/math/special.hpp"
#include "speedgov/panel.hpp"
#include "speedgov/rng.hpp"
#include "speedgov/telemetry.hpp"

namespace speedgov {

// Ground-truth parameters for the generators. Every estimator in the repo is
// validated against panels produced here, so generation draws come from the
// counter-based generator, never from the Halton stream the estimators use.
struct DgpConfig {
  std::uint64_t seed = 7;
  std::size_t n_users = 1000;
  int min_trips_per_user = 1;
  int max_trips_per_user = 4;
  int n_cities = 6;
  std::vector<std::string> months = {"2023-09", "2023-10", "2023-11"};
  std::string ban_month;  // empty = no post period

  // Mode-slope truth (logit preset)
  double intercept = -1.5;
  double mu_tub = 0.6;
  double mu_eco = -1.0;
  double sigma_tub = 0.75;
  double sigma_eco = 0.5;
  double gamma_tub_logexp = 0.0;
  double gamma_tub_night = 0.0;
  double gamma_tub_same_route = 0.0;
  double gamma_eco_logexp = 0.0;
  double delta_night = 0.2;
  double delta_weekend = 0.1;
  double delta_same_route = -0.1;
  double delta_log_consec_days = 0.05;
  double delta_log_experience = -0.05;
  double p_tub = 0.35;
  double p_eco = 0.15;
  double city_effect_sd = 0.1;
  double month_effect_sd = 0.05;

  // Linear DiD truth (did preset)
  double did_beta = -0.10;
  double base_rate = 0.25;
  double user_sd = 0.05;
  double city_sd = 0.03;
  double month_sd = 0.02;
  // Riders use the platform intermittently: each user is active in a month
  // with this probability, giving the sparse user panel the absorbed-dof
  // correction is calibrated for.
  double month_activity = 0.35;
};

struct SynthPanel {
  std::vector<PanelRow> rows;
  DgpConfig truth;  // echo of the generating configuration
};

namespace detail {

inline std::string user_name(std::size_t u) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "u%06zu", u);
  return buf;
}
inline std::string city_name(int c) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "c%02d", c);
  return buf;
}

}  // namespace detail

// Forward simulation of the rider-heterogeneous logit: user-level normal mode
// slopes around moderator-shifted means, trips sharing the user's draw.
inline SynthPanel generate_logit_panel(const DgpConfig& cfg) {
  const CounterRng rng(cfg.seed);
  SynthPanel out;
  out.truth = cfg;
  const int n_months = static_cast<int>(cfg.months.size());

  std::vector<double> city_eff(cfg.n_cities), month_eff(n_months);
  for (int c = 0; c < cfg.n_cities; ++c)
    city_eff[c] = cfg.city_effect_sd * rng.normal(0xC171ull, c);
  for (int m = 0; m < n_months; ++m)
    month_eff[m] = cfg.month_effect_sd * rng.normal(0x30417ull, m);

  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    const int city = static_cast<int>(rng.below(cfg.n_cities, u, 1));
    const int span = cfg.max_trips_per_user - cfg.min_trips_per_user + 1;
    const int n_trips =
        cfg.min_trips_per_user + static_cast<int>(rng.below(span, u, 2));
    const double e_tub = rng.normal(u, 3);
    const double e_eco = rng.normal(u, 4);

    std::vector<int> trip_month(n_trips);
    for (int t = 0; t < n_trips; ++t)
      trip_month[t] = static_cast<int>(rng.below(n_months, u, 5, t));
    std::sort(trip_month.begin(), trip_month.end());

    double consec_days = 1.0;
    for (int t = 0; t < n_trips; ++t) {
      PanelRow r;
      r.trip_id = detail::user_name(u) + "_t" + std::to_string(t);
      r.user_id = detail::user_name(u);
      r.city_id = detail::city_name(city);
      r.month_key = cfg.months[trip_month[t]];
      r.post = (!cfg.ban_month.empty() && r.month_key == cfg.ban_month) ? 1 : 0;

      const double mode_u = rng.uniform(u, 6, t);
      r.tub = mode_u < cfg.p_tub ? 1 : 0;
      r.eco = (!r.tub && mode_u < cfg.p_tub + cfg.p_eco) ? 1 : 0;
      r.night = rng.bernoulli(0.2, u, 7, t) ? 1 : 0;
      r.weekend = rng.bernoulli(0.3, u, 8, t) ? 1 : 0;
      r.same_route = t > 0 && rng.bernoulli(0.4, u, 9, t) ? 1 : 0;
      r.log_experience = std::log(1.0 + static_cast<double>(t));
      if (t > 0 && rng.bernoulli(0.5, u, 10, t)) consec_days += 1.0;
      else consec_days = 1.0;
      r.log_consec_days = std::log(1.0 + consec_days);

      const double beta_tub = cfg.mu_tub + cfg.gamma_tub_logexp * r.log_experience +
                              cfg.gamma_tub_night * r.night +
                              cfg.gamma_tub_same_route * r.same_route +
                              cfg.sigma_tub * e_tub;
      const double beta_eco = cfg.mu_eco + cfg.gamma_eco_logexp * r.log_experience +
                              cfg.sigma_eco * e_eco;
      const double lp = cfg.intercept + beta_tub * r.tub + beta_eco * r.eco +
                        cfg.delta_night * r.night + cfg.delta_weekend * r.weekend +
                        cfg.delta_same_route * r.same_route +
                        cfg.delta_log_consec_days * r.log_consec_days +
                        cfg.delta_log_experience * r.log_experience +
                        city_eff[city] + month_eff[trip_month[t]];
      r.y_harsh_accel = rng.bernoulli(logistic(lp), u, 11, t) ? 1 : 0;
      r.y_harsh_decel = rng.bernoulli(logistic(lp), u, 12, t) ? 1 : 0;
      r.y_speeding = rng.bernoulli(logistic(lp + 0.5 * r.tub), u, 13, t) ? 1 : 0;
      r.harsh_accel_count = r.y_harsh_accel;
      r.harsh_decel_count = r.y_harsh_decel;
      out.rows.push_back(std::move(r));
    }
  }
  return out;
}

// Forward simulation of the linear DiD: additive user, city and month effects
// plus the dose response in the ban month, Bernoulli outcomes with the mean
// clamped to [0.01, 0.99].
inline SynthPanel generate_did_panel(const DgpConfig& cfg) {
  if (cfg.ban_month.empty())
    throw EstimationError("did preset requires a ban month");
  const CounterRng rng(cfg.seed);
  SynthPanel out;
  out.truth = cfg;
  const int n_months = static_cast<int>(cfg.months.size());

  // Doses on an even grid across cities: the treatment leverage profile is
  // then a property of the configuration, not of the seed.
  std::vector<double> dose(cfg.n_cities), city_eff(cfg.n_cities),
      month_eff(n_months);
  for (int c = 0; c < cfg.n_cities; ++c) {
    dose[c] = cfg.n_cities > 1
                  ? 0.05 + 0.85 * static_cast<double>(c) / (cfg.n_cities - 1)
                  : 0.5;
    city_eff[c] = cfg.city_sd * rng.normal(0xC172ull, c);
  }
  for (int m = 0; m < n_months; ++m)
    month_eff[m] = cfg.month_sd * rng.normal(0x30418ull, m);

  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    const int city = static_cast<int>(u % cfg.n_cities);
    const double u_eff = cfg.user_sd * rng.normal(u, 2);
    for (int m = 0; m < n_months; ++m) {
      if (!rng.bernoulli(cfg.month_activity, u, 14, m)) continue;
      const int span = cfg.max_trips_per_user - cfg.min_trips_per_user + 1;
      const int n_trips =
          cfg.min_trips_per_user + static_cast<int>(rng.below(span, u, 3, m));
      for (int t = 0; t < n_trips; ++t) {
        PanelRow r;
        r.trip_id = detail::user_name(u) + "_m" + std::to_string(m) + "_t" +
                    std::to_string(t);
        r.user_id = detail::user_name(u);
        r.city_id = detail::city_name(city);
        r.month_key = cfg.months[m];
        r.post = r.month_key == cfg.ban_month ? 1 : 0;
        r.dose = dose[city];
        r.tub = r.post ? 0 : (rng.bernoulli(dose[city], u, 4, m, t) ? 1 : 0);
        r.eco = !r.tub && rng.bernoulli(0.1, u, 5, m, t) ? 1 : 0;
        r.night = rng.bernoulli(0.2, u, 6, m, t) ? 1 : 0;
        r.weekend = rng.bernoulli(0.3, u, 7, m, t) ? 1 : 0;
        r.same_route = rng.bernoulli(0.4, u, 8, m, t) ? 1 : 0;
        r.log_experience = std::log(1.0 + m);
        r.log_consec_days = std::log(2.0);

        const double mean = cfg.base_rate + u_eff + city_eff[city] +
                            month_eff[m] + cfg.did_beta * r.post * dose[city];
        const double p = std::clamp(mean, 0.01, 0.99);
        r.y_harsh_accel = rng.bernoulli(p, u, 9, m, t) ? 1 : 0;
        r.y_harsh_decel = rng.bernoulli(p, u, 10, m, t) ? 1 : 0;
        r.y_speeding = rng.bernoulli(p, u, 11, m, t) ? 1 : 0;
        r.harsh_accel_count = r.y_harsh_accel;
        r.harsh_decel_count = r.y_harsh_decel;
        out.rows.push_back(std::move(r));
      }
    }
  }
  return out;
}

// Random-walk speed traces for kinematics property tests and for the
// end-to-end pipeline preset: mean-reverting speeds with mode-specific target,
// volatility and firmware cap. City TUB propensity varies so a reference-month
// dose exists, and TUB disappears in the ban month.
inline std::vector<RawTripRecord> generate_trips(const DgpConfig& cfg) {
  const CounterRng rng(cfg.seed);
  std::vector<RawTripRecord> trips;
  const int n_months = static_cast<int>(cfg.months.size());

  std::vector<double> city_tub(cfg.n_cities);
  for (int c = 0; c < cfg.n_cities; ++c)
    city_tub[c] = 0.15 + 0.7 * rng.uniform(0x7B5ull, c);

  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    const int city = static_cast<int>(rng.below(cfg.n_cities, u, 1));
    for (int m = 0; m < n_months; ++m) {
      const int span = cfg.max_trips_per_user - cfg.min_trips_per_user + 1;
      const int n_trips =
          cfg.min_trips_per_user + static_cast<int>(rng.below(span, u, 2, m));
      const bool banned = cfg.months[m] == cfg.ban_month;
      for (int t = 0; t < n_trips; ++t) {
        RawTripRecord trip;
        trip.trip_id = detail::user_name(u) + "_m" + std::to_string(m) + "_t" +
                       std::to_string(t);
        trip.user_id = detail::user_name(u);
        trip.city_id = detail::city_name(city);

        const bool tub = !banned && rng.bernoulli(city_tub[city], u, 3, m, t);
        const bool eco = !tub && rng.bernoulli(0.15, u, 4, m, t);
        trip.mode = tub ? Mode::TUB : (eco ? Mode::ECO : Mode::STD);

        int year, month;
        std::sscanf(cfg.months[m].c_str(), "%d-%d", &year, &month);
        trip.start_time.year = year;
        trip.start_time.month = month;
        trip.start_time.day = 1 + static_cast<int>(rng.below(28, u, 5, m, t));
        trip.start_time.hour = static_cast<int>(rng.below(24, u, 6, m, t));
        trip.start_time.minute = static_cast<int>(rng.below(60, u, 7, m, t));
        trip.start_time.offset_minutes = 9 * 60;
        trip.start_time.utc_epoch_s =
            days_from_civil(year, month, trip.start_time.day) * 86400 +
            trip.start_time.hour * 3600 + trip.start_time.minute * 60 -
            9 * 3600;

        // Origins cluster in a handful of 500 m cells per user so the
        // same-route covariate has signal.
        const double base_lat = 37.0 + 0.05 * city;
        const double base_lon = 127.0 + 0.05 * city;
        const int cell = static_cast<int>(rng.below(3, u, 8, m, t));
        trip.origin_lat = base_lat + 0.006 * cell +
                          0.0005 * rng.uniform(u, 9, m, t);
        trip.origin_lon = base_lon + 0.006 * cell +
                          0.0005 * rng.uniform(u, 10, m, t);

        const double target = tub ? 21.0 : (eco ? 11.0 : 14.0);
        const double vol = tub ? 7.0 : 3.1;
        const double cap = tub ? 45.0 : (eco ? 20.0 : 25.0);
        const int len = 5 + static_cast<int>(rng.below(20, u, 11, m, t));
        double v = 0.0;
        for (int k = 0; k < len; ++k) {
          const double pull = 0.45 * (target - v);
          const double shock = vol * rng.normal(u, 12, m, t * 64 + k);
          v = std::clamp(v + pull + shock, 0.0, cap);
          trip.speeds_kmh.push_back(std::round(v * 10.0) / 10.0);
        }
        trip.duration_s = static_cast<double>(len) * 10.0;
        double dist = 0.0;
        for (double s : trip.speeds_kmh) dist += s * 10.0 / 3.6;
        trip.distance_m = std::round(dist);
        trips.push_back(std::move(trip));
      }
    }
  }
  return trips;
}

}  // namespace speedgov
