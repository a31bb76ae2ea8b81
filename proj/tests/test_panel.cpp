#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "speedgov/panel.hpp"

using namespace speedgov;

namespace {

RawTripRecord make_trip(const std::string& id, const std::string& user,
                        const std::string& city, Mode mode,
                        const std::string& when, double lat, double lon) {
  RawTripRecord t;
  t.trip_id = id;
  t.user_id = user;
  t.city_id = city;
  t.mode = mode;
  t.start_time = parse_timestamp(when);
  t.origin_lat = lat;
  t.origin_lon = lon;
  t.duration_s = 60;
  t.speeds_kmh = {5, 6, 7};
  return t;
}

TripFeatures feat_for(const std::string& id) {
  TripFeatures f;
  f.trip_id = id;
  return f;
}

std::vector<TripFeatures> feats_for(const std::vector<RawTripRecord>& trips) {
  std::vector<TripFeatures> fs;
  for (const auto& t : trips) fs.push_back(feat_for(t.trip_id));
  return fs;
}

PanelRow row(const std::string& user, const std::string& city,
             const std::string& month, int tub, int y = 0) {
  PanelRow r;
  r.trip_id = user + "_" + month + "_" + std::to_string(tub);
  r.user_id = user;
  r.city_id = city;
  r.month_key = month;
  r.tub = tub;
  r.y_harsh_accel = y;
  return r;
}

}  // namespace

TEST_CASE("first trip has no history; repeats flip same_route") {
  std::vector<RawTripRecord> trips = {
      make_trip("a", "u1", "c1", Mode::TUB, "2023-02-01T10:00:00+09:00", 37.50,
                127.00),
      make_trip("b", "u1", "c1", Mode::STD, "2023-02-02T10:00:00+09:00", 37.50,
                127.00),  // same origin, next day
      // another user far away so the city anchor is not the shared origin
      make_trip("z", "u2", "c1", Mode::STD, "2023-02-01T09:00:00+09:00", 37.52,
                127.03),
  };
  const auto rows = build_covariates(trips, feats_for(trips), {});
  CHECK(rows[0].same_route == 0);
  CHECK(rows[0].log_experience == 0.0);
  CHECK_THAT(rows[0].log_consec_days,
             Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
  CHECK(rows[1].same_route == 1);
  CHECK_THAT(rows[1].log_experience,
             Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
  // day run of 2 consecutive days -> ln(1+2)
  CHECK_THAT(rows[1].log_consec_days,
             Catch::Matchers::WithinAbs(std::log(3.0), 1e-12));
}

TEST_CASE("night boundary is inclusive at 22:00, exclusive at 06:00") {
  std::vector<RawTripRecord> trips = {
      make_trip("a", "u", "c", Mode::STD, "2023-05-03T21:59:00+09:00", 37, 127),
      make_trip("b", "u", "c", Mode::STD, "2023-05-03T22:00:00+09:00", 37, 127),
      make_trip("c", "u", "c", Mode::STD, "2023-05-04T05:59:00+09:00", 37, 127),
      make_trip("d", "u", "c", Mode::STD, "2023-05-04T06:00:00+09:00", 37, 127),
  };
  const auto rows = build_covariates(trips, feats_for(trips), {});
  CHECK(rows[0].night == 0);
  CHECK(rows[1].night == 1);
  CHECK(rows[2].night == 1);
  CHECK(rows[3].night == 0);
}

TEST_CASE("weekend and post flags follow the wall clock") {
  PanelOptions opt;
  opt.ban_month = "2023-12";
  std::vector<RawTripRecord> trips = {
      make_trip("a", "u", "c", Mode::STD, "2023-12-02T10:00:00+09:00", 37, 127),
      make_trip("b", "u", "c", Mode::STD, "2023-11-06T10:00:00+09:00", 37, 127),
  };
  const auto rows = build_covariates(trips, feats_for(trips), opt);
  CHECK(rows[0].weekend == 1);  // 2023-12-02 is a Saturday
  CHECK(rows[0].post == 1);
  CHECK(rows[1].weekend == 0);  // Monday
  CHECK(rows[1].post == 0);
}

TEST_CASE("log_experience strictly increases along a user's sequence") {
  std::vector<RawTripRecord> trips;
  for (int i = 0; i < 8; ++i) {
    char when[40];
    std::snprintf(when, sizeof(when), "2023-03-%02dT1%d:00:00+09:00", i + 1,
                  i % 5);
    trips.push_back(make_trip("t" + std::to_string(i), "u", "c", Mode::STD,
                              when, 37 + 0.01 * i, 127));
  }
  const auto rows = build_covariates(trips, feats_for(trips), {});
  for (std::size_t i = 1; i < rows.size(); ++i)
    CHECK(rows[i].log_experience > rows[i - 1].log_experience);
}

TEST_CASE("same_route is monotone in history") {
  // Removing an earlier trip never turns 0 -> 1 later.
  std::vector<RawTripRecord> trips = {
      make_trip("a", "u", "c", Mode::STD, "2023-02-01T10:00:00Z", 37.50, 127.00),
      make_trip("b", "u", "c", Mode::STD, "2023-02-02T10:00:00Z", 37.60, 127.10),
      make_trip("c", "u", "c", Mode::STD, "2023-02-03T10:00:00Z", 37.50, 127.00),
  };
  const auto full = build_covariates(trips, feats_for(trips), {});
  std::vector<RawTripRecord> reduced = {trips[1], trips[2]};
  const auto less = build_covariates(reduced, feats_for(reduced), {});
  // trip c matched trip a's cell; without a it has no match
  CHECK(full[2].same_route == 1);
  CHECK(less[1].same_route == 0);
  for (std::size_t i = 0; i < less.size(); ++i)
    CHECK(less[i].same_route <= full[i + 1].same_route);
}

TEST_CASE("grid cells respect the sqrt(2) diameter bound") {
  // Points in the same cell are < 500*sqrt(2) m apart in projection; points
  // farther apart than that never share a cell.
  std::vector<RawTripRecord> trips;
  const double lat0 = 37.5, lon0 = 127.0;
  for (int i = 0; i < 40; ++i) {
    trips.push_back(make_trip("t" + std::to_string(i), "u" + std::to_string(i),
                              "c", Mode::STD, "2023-02-01T10:00:00Z",
                              lat0 + 0.001 * (i % 7), lon0 + 0.0015 * (i / 7)));
  }
  const detail::CityGrids grids(trips, 500.0);
  constexpr double kR = 6371000.0, kD2R = M_PI / 180.0;
  double mean_lat = 0, mean_lon = 0;
  for (const auto& t : trips) {
    mean_lat += t.origin_lat / trips.size();
    mean_lon += t.origin_lon / trips.size();
  }
  for (const auto& a : trips)
    for (const auto& b : trips) {
      const auto ca = grids.cell(a);
      const auto cb = grids.cell(b);
      const double ax =
          kR * std::cos(mean_lat * kD2R) * (a.origin_lon - mean_lon) * kD2R;
      const double ay = kR * (a.origin_lat - mean_lat) * kD2R;
      const double bx =
          kR * std::cos(mean_lat * kD2R) * (b.origin_lon - mean_lon) * kD2R;
      const double by = kR * (b.origin_lat - mean_lat) * kD2R;
      const double dist = std::hypot(ax - bx, ay - by);
      if (!(ca < cb) && !(cb < ca))  // same cell
        CHECK(dist < 500.0 * std::sqrt(2.0) + 1e-6);
      else if (dist >= 500.0 * std::sqrt(2.0))
        CHECK((ca < cb || cb < ca));
    }
}

TEST_CASE("mundlak means against a brute-force group-by") {
  std::vector<PanelRow> rows;
  rows.push_back(row("u1", "c1", "2023-02", 1));
  rows.push_back(row("u1", "c1", "2023-03", 0));
  rows.push_back(row("u1", "c1", "2023-04", 1));
  rows.push_back(row("u2", "c1", "2023-02", 0));
  rows[0].night = 1;
  rows[2].log_consec_days = 0.7;
  rows[3].log_experience = 1.1;

  const MundlakReport rep = compute_mundlak(rows, false);
  REQUIRE(rep.means.size() == 2);
  const auto& m1 = rep.means[0];
  CHECK(m1.user_id == "u1");
  CHECK_THAT(m1.mean_tub, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
  CHECK_THAT(m1.mean_night, Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));

  // independent group-by
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& r : rows) {
    acc[r.user_id].first += r.tub;
    acc[r.user_id].second += 1;
  }
  for (const auto& m : rep.means)
    CHECK_THAT(m.mean_tub,
               Catch::Matchers::WithinAbs(
                   acc[m.user_id].first / acc[m.user_id].second, 1e-12));

  // single-trip user: means equal the trip covariates
  CHECK(rep.means[1].mean_tub == 0.0);
  CHECK_THAT(rep.means[1].mean_log_experience,
             Catch::Matchers::WithinAbs(1.1, 1e-12));
}

TEST_CASE("mundlak pre-ban restriction drops post-only users") {
  std::vector<PanelRow> rows = {row("u1", "c", "2023-11", 1),
                                row("u2", "c", "2023-12", 1)};
  rows[1].post = 1;
  const MundlakReport rep = compute_mundlak(rows, true);
  REQUIRE(rep.means.size() == 1);
  CHECK(rep.means[0].user_id == "u1");
  REQUIRE(rep.dropped_users.size() == 1);
  CHECK(rep.dropped_users[0] == "u2");
}

TEST_CASE("city_dose computes shares and reports absent cities") {
  std::vector<PanelRow> rows;
  for (int i = 0; i < 7; ++i) rows.push_back(row("u", "c1", "2023-11", 1));
  for (int i = 0; i < 3; ++i) rows.push_back(row("u", "c1", "2023-11", 0));
  rows.push_back(row("u", "c2", "2023-10", 1));  // c2 absent in Nov
  const CityDoseReport rep = city_dose(rows, "2023-11");
  REQUIRE(rep.doses.size() == 1);
  CHECK(rep.doses[0].city_id == "c1");
  CHECK_THAT(rep.doses[0].tub_share_nov, Catch::Matchers::WithinAbs(0.7, 1e-12));
  CHECK(rep.doses[0].n_trips_nov == 10);
  REQUIRE(rep.excluded_cities == std::vector<std::string>{"c2"});

  CHECK_THROWS_AS(city_dose(rows, "2024-01"), EstimationError);
}

TEST_CASE("dose identity: sum of dose * n over cities equals the TUB share") {
  std::vector<PanelRow> rows;
  int total_tub = 0, total = 0;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 5 + c; ++i) {
      const int tub = (i + c) % 2;
      rows.push_back(row("u", "c" + std::to_string(c), "2023-11", tub));
      total_tub += tub;
      ++total;
    }
  const CityDoseReport rep = city_dose(rows, "2023-11");
  double weighted = 0;
  std::size_t n_total = 0;
  for (const auto& d : rep.doses) {
    weighted += d.tub_share_nov * d.n_trips_nov;
    n_total += d.n_trips_nov;
  }
  CHECK_THAT(weighted / n_total,
             Catch::Matchers::WithinAbs(double(total_tub) / total, 1e-12));
}

TEST_CASE("stratified sample balances modes and is reproducible") {
  std::vector<PanelRow> rows;
  for (int m = 2; m <= 4; ++m) {
    const std::string mk = "2023-0" + std::to_string(m);
    for (int i = 0; i < 300; ++i) {
      PanelRow r = row("u" + std::to_string(i), "c", mk, 0);
      r.trip_id = mk + "tub" + std::to_string(i);
      r.tub = 1;
      rows.push_back(r);
    }
    for (int i = 0; i < 400; ++i) {
      PanelRow r = row("u" + std::to_string(i), "c", mk, 0);
      r.trip_id = mk + "std" + std::to_string(i);
      rows.push_back(r);
    }
    for (int i = 0; i < 200; ++i) {
      PanelRow r = row("u" + std::to_string(i), "c", mk, 0);
      r.trip_id = mk + "eco" + std::to_string(i);
      r.eco = 1;
      rows.push_back(r);
    }
  }
  const StratifiedSample s1 = stratified_phase1_sample(rows, 150, 42);
  CHECK(s1.rows.size() == 9 * 150);  // 3 modes x 3 months, all cells abundant
  CHECK_THAT(s1.realized_tub_share,
             Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));

  const StratifiedSample s2 = stratified_phase1_sample(rows, 150, 42);
  REQUIRE(s2.rows.size() == s1.rows.size());
  for (std::size_t i = 0; i < s1.rows.size(); ++i)
    CHECK(s1.rows[i].trip_id == s2.rows[i].trip_id);

  // cap: cell_target above availability takes the whole cell
  const StratifiedSample s3 = stratified_phase1_sample(rows, 10000, 1);
  CHECK(s3.rows.size() == rows.size());
}

TEST_CASE("subgroup split: ties to low, medians match an oracle sort") {
  std::vector<PanelRow> rows;
  for (int u = 0; u < 5; ++u) {
    PanelRow r = row("u" + std::to_string(u), "c", "2023-10", 0);
    r.night = u >= 3 ? 1 : 0;  // night rates: 0,0,0,1,1
    rows.push_back(r);
  }
  const SubgroupSplit split =
      subgroup_split(rows, "night_rate", "2023-09", "2023-11");
  CHECK(split.median == 0.0);
  CHECK(split.labels.at("u0") == SubgroupLabel::Low);  // tie -> low
  CHECK(split.labels.at("u3") == SubgroupLabel::High);

  // all identical -> everyone low
  for (auto& r : rows) r.night = 1;
  const SubgroupSplit all_same =
      subgroup_split(rows, "night_rate", "2023-09", "2023-11");
  for (const auto& [user, label] : all_same.labels)
    CHECK(label == SubgroupLabel::Low);

  // user outside the window is unassigned
  rows.push_back(row("u9", "c", "2023-12", 0));
  const SubgroupSplit with_out =
      subgroup_split(rows, "night_rate", "2023-09", "2023-11");
  CHECK(with_out.labels.at("u9") == SubgroupLabel::Unassigned);
}

TEST_CASE("aggregate_city_month equals a brute-force group-by") {
  std::vector<PanelRow> rows;
  const CounterRng rng(5);
  for (int i = 0; i < 500; ++i) {
    PanelRow r = row("u", "c" + std::to_string(i % 7),
                     "2023-0" + std::to_string(2 + i % 5), 0,
                     rng.bernoulli(0.3, i) ? 1 : 0);
    r.trip_id = "t" + std::to_string(i);
    rows.push_back(r);
  }
  const auto cells = aggregate_city_month(rows, "harsh_accel");

  std::map<std::pair<std::string, std::string>, std::pair<double, int>> oracle;
  for (const auto& r : rows) {
    auto& o = oracle[{r.city_id, r.month_key}];
    o.first += r.y_harsh_accel;
    o.second += 1;
  }
  REQUIRE(cells.size() == oracle.size());
  for (const auto& c : cells) {
    const auto& o = oracle.at({c.city_id, c.month_key});
    CHECK(c.n_trips == static_cast<std::size_t>(o.second));
    CHECK_THAT(c.mean_outcome,
               Catch::Matchers::WithinAbs(o.first / o.second, 1e-12));
  }

  // single-trip cell: mean equals that trip's outcome
  std::vector<PanelRow> one = {row("u", "cx", "2023-02", 0, 1)};
  const auto single = aggregate_city_month(one, "harsh_accel");
  REQUIRE(single.size() == 1);
  CHECK(single[0].mean_outcome == 1.0);
}

TEST_CASE("panel csv round trip") {
  std::vector<PanelRow> rows = {row("u1", "c1", "2023-02", 1, 1),
                                row("u2", "c2", "2023-03", 0, 0)};
  rows[0].dose = 0.54321;
  rows[0].log_experience = std::log(2.0);
  const std::string csv = serialize_panel(rows);
  const auto parsed = parse_panel(CsvTable::read_string(csv));
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].dose == rows[0].dose);
  CHECK(parsed[0].log_experience == rows[0].log_experience);
  CHECK(std::isnan(parsed[1].dose));
  CHECK(serialize_panel(parsed) == csv);
}
