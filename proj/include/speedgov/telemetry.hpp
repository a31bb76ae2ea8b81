#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "speedgov/csv.hpp"
#include "speedgov/datetime.hpp"

namespace speedgov {

enum class Mode { TUB, STD, ECO };

inline Mode parse_mode(const std::string& s) {
  if (s == "TUB") return Mode::TUB;
  if (s == "STD") return Mode::STD;
  if (s == "ECO") return Mode::ECO;
  throw SchemaError("unknown mode '" + s + "' (expected TUB, STD or ECO)");
}

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::TUB: return "TUB";
    case Mode::STD: return "STD";
    case Mode::ECO: return "ECO";
  }
  return "?";
}

// One trip's ordered waypoint speeds. Speeds stay in km/h exactly as read;
// unit conversion happens once, in the kinematics layer.
struct SpeedTrace {
  std::vector<double> speeds_kmh;
  double dt_s = 10.0;
};

struct RawTripRecord {
  std::string trip_id;
  std::string user_id;
  std::string city_id;
  Mode mode = Mode::STD;
  Timestamp start_time;
  double origin_lat = 0.0;
  double origin_lon = 0.0;
  double distance_m = 0.0;
  double duration_s = 0.0;
  std::vector<double> speeds_kmh;

  SpeedTrace trace(double dt_s = 10.0) const { return SpeedTrace{speeds_kmh, dt_s}; }

  int valid_waypoints() const {
    int n = 0;
    for (double v : speeds_kmh)
      if (std::isfinite(v) && v >= 0.0) ++n;
    return n;
  }
};

struct RowError {
  std::size_t row_index;  // 0-based data row (header excluded)
  std::string message;
};

struct LoadResult {
  std::vector<RawTripRecord> trips;
  std::vector<RowError> errors;
};

// Maps logical field names to input column names; identity by default.
using ColumnMap = std::map<std::string, std::string>;

inline std::string mapped(const ColumnMap& schema, const std::string& field) {
  auto it = schema.find(field);
  return it == schema.end() ? field : it->second;
}

// Reads a trips CSV. Malformed rows land in the error report instead of being
// dropped silently; a missing column is a schema error for the whole file.
inline LoadResult load_trips(const std::string& path, const ColumnMap& schema = {}) {
  const CsvTable table = CsvTable::read_file(path);
  static const char* fields[] = {"trip_id",   "user_id",    "city_id",
                                 "mode",      "start_time", "origin_lat",
                                 "origin_lon", "distance_m", "duration_s",
                                 "speeds_kmh"};
  std::map<std::string, std::size_t> col;
  for (const char* f : fields) col[f] = table.column(mapped(schema, f));

  LoadResult out;
  out.trips.reserve(table.n_rows());
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    try {
      RawTripRecord t;
      t.trip_id = table.cell(r, col["trip_id"]);
      t.user_id = table.cell(r, col["user_id"]);
      t.city_id = table.cell(r, col["city_id"]);
      t.mode = parse_mode(table.cell(r, col["mode"]));
      t.start_time = parse_timestamp(table.cell(r, col["start_time"]));
      auto num = [&](const char* f, double& dst) {
        if (!parse_double(table.cell(r, col[f]), dst))
          throw SchemaError(std::string("non-numeric ") + f + " '" +
                            table.cell(r, col[f]) + "'");
      };
      num("origin_lat", t.origin_lat);
      num("origin_lon", t.origin_lon);
      num("distance_m", t.distance_m);
      num("duration_s", t.duration_s);
      if (t.distance_m < 0) throw SchemaError("negative distance_m");
      if (t.duration_s < 0) throw SchemaError("negative duration_s");

      const std::string& speeds = table.cell(r, col["speeds_kmh"]);
      for (const auto& tok : split(speeds, ';')) {
        double v;
        if (!parse_double(tok, v))
          throw SchemaError("bad speed token '" + tok + "'");
        t.speeds_kmh.push_back(v);
      }
      if (t.speeds_kmh.empty()) throw SchemaError("empty speeds list");
      out.trips.push_back(std::move(t));
    } catch (const SchemaError& e) {
      out.errors.push_back({r, e.what()});
    }
  }
  return out;
}

enum class DropReason { TooShort, TooFewPoints };

struct DropReport {
  std::size_t too_short = 0;       // duration below 30 s
  std::size_t too_few_points = 0;  // fewer than 3 finite non-negative waypoints

  std::size_t total() const { return too_short + too_few_points; }
};

struct FilterResult {
  std::vector<RawTripRecord> kept;
  DropReport dropped;
};

inline std::string format_timestamp(const Timestamp& t) {
  char buf[40];
  if (t.offset_minutes == 0) {
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", t.year,
                  t.month, t.day, t.hour, t.minute, t.second);
  } else {
    const int om = t.offset_minutes;
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d%c%02d:%02d",
                  t.year, t.month, t.day, t.hour, t.minute, t.second,
                  om < 0 ? '-' : '+', std::abs(om) / 60, std::abs(om) % 60);
  }
  return buf;
}

// Inverse of load_trips on well-formed records: serialize-then-load preserves
// every field, and serialize(load(serialize(x))) == serialize(x) byte-exact.
inline std::string serialize_trips(const std::vector<RawTripRecord>& trips) {
  CsvWriter w({"trip_id", "user_id", "city_id", "mode", "start_time",
               "origin_lat", "origin_lon", "distance_m", "duration_s",
               "speeds_kmh"});
  for (const auto& t : trips) {
    std::string speeds;
    for (std::size_t i = 0; i < t.speeds_kmh.size(); ++i) {
      if (i) speeds += ';';
      speeds += CsvWriter::fmt_exact(t.speeds_kmh[i]);
    }
    w.add_row({t.trip_id, t.user_id, t.city_id, mode_name(t.mode),
               format_timestamp(t.start_time), CsvWriter::fmt_exact(t.origin_lat),
               CsvWriter::fmt_exact(t.origin_lon), CsvWriter::fmt_exact(t.distance_m),
               CsvWriter::fmt_exact(t.duration_s), speeds});
  }
  return w.to_string();
}

// Keeps trips with duration >= 30 s and >= 3 valid waypoints; boundaries
// inclusive. A non-finite or negative speed invalidates that waypoint only.
inline FilterResult filter_valid(const std::vector<RawTripRecord>& trips) {
  FilterResult out;
  out.kept.reserve(trips.size());
  for (const auto& t : trips) {
    if (t.duration_s < 30.0) {
      ++out.dropped.too_short;
    } else if (t.valid_waypoints() < 3) {
      ++out.dropped.too_few_points;
    } else {
      out.kept.push_back(t);
    }
  }
  return out;
}

}  // namespace speedgov
