#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "speedgov/core.hpp"

namespace speedgov {

// Calendar timestamp split into the wall-clock fields as written in the input
// plus the UTC offset that was attached to them. Trip ordering uses the UTC
// instant; night/weekend/day-run covariates use the wall-clock fields, i.e.
// the local clock at the trip's origin.
struct Timestamp {
  int year = 0;
  int month = 0;  // 1..12
  int day = 0;    // 1..31
  int hour = 0;
  int minute = 0;
  int second = 0;
  int offset_minutes = 0;  // east of UTC

  std::int64_t utc_epoch_s = 0;  // derived on parse
};

// Days since 1970-01-01 for a civil date (proleptic Gregorian).
inline std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2u) / 5u + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

// 0 = Monday .. 6 = Sunday.
inline int weekday_from_days(std::int64_t days) {
  return static_cast<int>(days >= -4 ? (days + 4) % 7 : (days + 5) % 7 + 6);
}

// Parses "YYYY-MM-DDTHH:MM:SS" followed by "Z", "+HH:MM", "-HH:MM", "+HHMM"
// or "+HH". A missing suffix is treated as UTC.
inline Timestamp parse_timestamp(const std::string& s) {
  Timestamp t;
  int n = 0;
  if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d%n", &t.year, &t.month, &t.day,
                  &t.hour, &t.minute, &t.second, &n) != 6 &&
      std::sscanf(s.c_str(), "%d-%d-%d %d:%d:%d%n", &t.year, &t.month, &t.day,
                  &t.hour, &t.minute, &t.second, &n) != 6) {
    throw SchemaError("unparseable timestamp: '" + s + "'");
  }
  if (t.month < 1 || t.month > 12 || t.day < 1 || t.day > 31 || t.hour > 23 ||
      t.minute > 59 || t.second > 60) {
    throw SchemaError("timestamp field out of range: '" + s + "'");
  }
  const char* p = s.c_str() + n;
  if (*p == 'Z' || *p == 'z' || *p == '\0') {
    t.offset_minutes = 0;
  } else if (*p == '+' || *p == '-') {
    const int sign = (*p == '+') ? 1 : -1;
    int oh = 0, om = 0;
    if (std::sscanf(p + 1, "%2d:%2d", &oh, &om) >= 1) {
      if (std::sscanf(p + 1, "%2d%2d", &oh, &om) == 2 && p[3] != ':') {
        // "+HHMM" form already captured
      }
      t.offset_minutes = sign * (oh * 60 + om);
    } else {
      throw SchemaError("unparseable UTC offset in '" + s + "'");
    }
  } else {
    throw SchemaError("trailing junk in timestamp '" + s + "'");
  }
  const std::int64_t local_s =
      days_from_civil(t.year, t.month, t.day) * 86400 +
      t.hour * 3600 + t.minute * 60 + t.second;
  t.utc_epoch_s = local_s - static_cast<std::int64_t>(t.offset_minutes) * 60;
  return t;
}

// "YYYY-MM" key of the wall-clock month.
inline std::string month_key(const Timestamp& t) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d", t.year, t.month);
  return buf;
}

// Local calendar day index (days since epoch at the trip's wall clock).
inline std::int64_t local_day_index(const Timestamp& t) {
  return days_from_civil(t.year, t.month, t.day);
}

inline bool is_weekend(const Timestamp& t) {
  const int wd = weekday_from_days(local_day_index(t));
  return wd == 5 || wd == 6;  // Sat, Sun
}

// Night window [22:00, 06:00), inclusive lower bound, exclusive upper.
inline bool is_night(const Timestamp& t) {
  return t.hour >= 22 || t.hour < 6;
}

}  // namespace speedgov
