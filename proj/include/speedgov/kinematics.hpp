#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "speedgov/core.hpp"
#include "speedgov/telemetry.hpp"

namespace speedgov {

// Defaults for feature construction. The harsh threshold sits at the 97.5th
// percentile of pooled |acceleration|; the speed cap is the statutory 25 km/h
// ceiling of the governed modes.
struct FeatureParams {
  double threshold_ms2 = 0.5;
  double speed_cap_kmh = 25.0;
  double cruise_band_kmh = 3.0;
  double zero_speed_max_kmh = 0.5;
};

struct TripFeatures {
  std::string trip_id;
  int harsh_accel = 0;
  int harsh_decel = 0;
  int speeding = 0;
  int harsh_accel_count = 0;
  int harsh_decel_count = 0;
  double mean_speed_kmh = 0.0;
  double max_speed_kmh = 0.0;
  double speed_cv = 0.0;
  double cruise_frac = 0.0;
  double zero_frac = 0.0;
};

// Point-to-point accelerations in m/s^2: a_t = (v_{t+1} - v_t) / (dt * 3.6)
// with speeds in km/h and dt in seconds. T waypoints yield T-1 values.
inline std::vector<double> accelerations(const SpeedTrace& trace) {
  std::vector<double> out;
  if (trace.speeds_kmh.size() < 2) return out;
  out.reserve(trace.speeds_kmh.size() - 1);
  const double denom = trace.dt_s * 3.6;
  for (std::size_t t = 0; t + 1 < trace.speeds_kmh.size(); ++t)
    out.push_back((trace.speeds_kmh[t + 1] - trace.speeds_kmh[t]) / denom);
  return out;
}

// All trip-level outcomes from one trace. Harsh events and speeding use
// strict inequalities; the CV uses the population standard deviation.
inline TripFeatures compute_features(const SpeedTrace& trace,
                                     const FeatureParams& p = {}) {
  TripFeatures f;
  const auto& v = trace.speeds_kmh;
  const std::size_t n = v.size();
  if (n == 0) return f;

  double sum = 0.0, max_v = v[0];
  std::size_t cruise = 0, zero = 0;
  for (double s : v) {
    sum += s;
    max_v = std::max(max_v, s);
  }
  f.mean_speed_kmh = sum / static_cast<double>(n);
  f.max_speed_kmh = max_v;

  double ss = 0.0;
  for (double s : v) {
    const double d = s - f.mean_speed_kmh;
    ss += d * d;
    if (std::fabs(d) <= p.cruise_band_kmh) ++cruise;
    if (s <= p.zero_speed_max_kmh) ++zero;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n));
  f.speed_cv = f.mean_speed_kmh > 0.0 ? sd / f.mean_speed_kmh : 0.0;
  f.cruise_frac = static_cast<double>(cruise) / static_cast<double>(n);
  f.zero_frac = static_cast<double>(zero) / static_cast<double>(n);

  for (double a : accelerations(trace)) {
    if (a > p.threshold_ms2) ++f.harsh_accel_count;
    if (a < -p.threshold_ms2) ++f.harsh_decel_count;
  }
  f.harsh_accel = f.harsh_accel_count >= 1 ? 1 : 0;
  f.harsh_decel = f.harsh_decel_count >= 1 ? 1 : 0;
  f.speeding = max_v > p.speed_cap_kmh ? 1 : 0;
  return f;
}

struct ThresholdCalibration {
  double percentile = 97.5;
  double threshold_ms2 = 0.0;
  std::size_t n_pairs = 0;
};

namespace detail {
inline std::vector<double> pooled_abs_accelerations(
    const std::vector<SpeedTrace>& traces) {
  std::vector<double> pooled;
  for (const auto& tr : traces)
    for (double a : accelerations(tr)) pooled.push_back(std::fabs(a));
  return pooled;
}
}  // namespace detail

// Nearest-rank percentile of pooled |a|: the ceil(p/100 * n)-th order
// statistic. Sorting makes the result independent of corpus order.
inline ThresholdCalibration calibrate_threshold(
    const std::vector<SpeedTrace>& traces, double percentile = 97.5) {
  if (percentile <= 0.0 || percentile >= 100.0)
    throw EstimationError("percentile must be in (0,100)");
  std::vector<double> pooled = detail::pooled_abs_accelerations(traces);
  if (pooled.empty()) throw EstimationError("no acceleration pairs");
  std::sort(pooled.begin(), pooled.end());
  const std::size_t n = pooled.size();
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(percentile / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  ThresholdCalibration cal;
  cal.percentile = percentile;
  cal.threshold_ms2 = pooled[rank - 1];
  cal.n_pairs = n;
  return cal;
}

// Share of pooled |a| strictly above each threshold; monotone non-increasing.
inline std::vector<std::pair<double, double>> exceedance_curve(
    const std::vector<SpeedTrace>& traces, const std::vector<double>& thresholds) {
  std::vector<double> pooled = detail::pooled_abs_accelerations(traces);
  if (pooled.empty()) throw EstimationError("no acceleration pairs");
  std::sort(pooled.begin(), pooled.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(thresholds.size());
  for (double thr : thresholds) {
    const auto it = std::upper_bound(pooled.begin(), pooled.end(), thr);
    const double above = static_cast<double>(pooled.end() - it);
    out.emplace_back(thr, above / static_cast<double>(pooled.size()));
  }
  return out;
}

}  // namespace speedgov
