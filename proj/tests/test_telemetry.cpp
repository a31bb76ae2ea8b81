#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "speedgov/telemetry.hpp"

using namespace speedgov;

namespace {

std::string write_temp(const std::string& text) {
  static int counter = 0;
  const auto path = std::filesystem::temp_directory_path() /
                    ("speedgov_telemetry_" + std::to_string(counter++) + ".csv");
  std::ofstream f(path);
  f << text;
  return path.string();
}

const char* kHeader =
    "trip_id,user_id,city_id,mode,start_time,origin_lat,origin_lon,"
    "distance_m,duration_s,speeds_kmh\n";

}  // namespace

TEST_CASE("load_trips maps a plain row") {
  const std::string path = write_temp(
      std::string(kHeader) +
      "t1,u1,c1,TUB,2023-02-01T08:00:00Z,37.50,127.00,1200,300,10;12;14\n");
  const LoadResult res = load_trips(path);
  REQUIRE(res.errors.empty());
  REQUIRE(res.trips.size() == 1);
  const auto& t = res.trips[0];
  CHECK(t.trip_id == "t1");
  CHECK(t.mode == Mode::TUB);
  CHECK(t.speeds_kmh == std::vector<double>{10.0, 12.0, 14.0});
  CHECK(t.start_time.hour == 8);
  CHECK(t.start_time.utc_epoch_s == 1675238400);
}

TEST_CASE("load_trips flags an empty speed token as a row error") {
  const std::string path = write_temp(
      std::string(kHeader) +
      "t1,u1,c1,STD,2023-02-01T08:00:00Z,37.5,127.0,100,60,10;;12\n");
  const LoadResult res = load_trips(path);
  CHECK(res.trips.empty());
  REQUIRE(res.errors.size() == 1);
  CHECK(res.errors[0].row_index == 0);
}

TEST_CASE("load_trips on a header-only file returns nothing") {
  const LoadResult res = load_trips(write_temp(kHeader));
  CHECK(res.trips.empty());
  CHECK(res.errors.empty());
}

TEST_CASE("load_trips rejects a file without a required column") {
  const std::string path =
      write_temp("trip_id,user_id\na,b\n");
  CHECK_THROWS_AS(load_trips(path), SchemaError);
}

TEST_CASE("load_trips respects a column-name map") {
  const std::string path = write_temp(
      "id,rider,town,mode,start_time,origin_lat,origin_lon,distance_m,"
      "duration_s,speeds_kmh\n"
      "t9,u9,c9,ECO,2023-03-05T10:00:00+09:00,37,127,50,45,1;2;3\n");
  const LoadResult res = load_trips(
      path, {{"trip_id", "id"}, {"user_id", "rider"}, {"city_id", "town"}});
  REQUIRE(res.trips.size() == 1);
  CHECK(res.trips[0].user_id == "u9");
  // +09:00 offset: UTC instant is 9 hours earlier than the wall clock
  CHECK(res.trips[0].start_time.utc_epoch_s ==
        days_from_civil(2023, 3, 5) * 86400 + 3600);
}

TEST_CASE("filter_valid applies both thresholds inclusively") {
  RawTripRecord base;
  base.speeds_kmh = {1, 2, 3, 4, 5};
  base.duration_s = 29;
  RawTripRecord ok = base;
  ok.duration_s = 30;
  ok.speeds_kmh = {1, 2, 3};
  RawTripRecord few = base;
  few.duration_s = 60;
  few.speeds_kmh = {1, 2};

  const FilterResult res = filter_valid({base, ok, few});
  REQUIRE(res.kept.size() == 1);
  CHECK(res.kept[0].duration_s == 30);
  CHECK(res.dropped.too_short == 1);
  CHECK(res.dropped.too_few_points == 1);
  CHECK(res.kept.size() + res.dropped.total() == 3);
}

TEST_CASE("non-finite speeds invalidate the waypoint, not the trip") {
  RawTripRecord t;
  t.duration_s = 60;
  t.speeds_kmh = {10, std::nan(""), 12, 14};
  CHECK(t.valid_waypoints() == 3);
  const FilterResult res = filter_valid({t});
  CHECK(res.kept.size() == 1);

  t.speeds_kmh = {10, std::nan(""), 12};
  const FilterResult res2 = filter_valid({t});
  CHECK(res2.kept.empty());
  CHECK(res2.dropped.too_few_points == 1);
}

TEST_CASE("filtering is idempotent") {
  std::vector<RawTripRecord> trips;
  for (int i = 0; i < 50; ++i) {
    RawTripRecord t;
    t.duration_s = 20 + 2 * i;
    const int pts = 1 + i % 6;
    for (int k = 0; k < pts; ++k) t.speeds_kmh.push_back(k);
    trips.push_back(t);
  }
  const FilterResult once = filter_valid(trips);
  const FilterResult twice = filter_valid(once.kept);
  CHECK(twice.kept.size() == once.kept.size());
  CHECK(twice.dropped.total() == 0);
}

TEST_CASE("serialize-load round trip is stable") {
  const std::string csv =
      std::string(kHeader) +
      "t1,u1,c1,TUB,2023-02-01T08:00:00Z,37.5,127.125,1200,300,10;12.5;14\n"
      "t2,u2,c2,ECO,2023-07-15T23:30:00+09:00,35.1,129.04,800.5,120,0;3.3;7\n";
  const std::string path = write_temp(csv);
  const LoadResult first = load_trips(path);
  REQUIRE(first.errors.empty());

  const std::string ser1 = serialize_trips(first.trips);
  const LoadResult second = load_trips(write_temp(ser1));
  REQUIRE(second.errors.empty());
  const std::string ser2 = serialize_trips(second.trips);
  CHECK(ser1 == ser2);

  REQUIRE(second.trips.size() == first.trips.size());
  for (std::size_t i = 0; i < first.trips.size(); ++i) {
    CHECK(second.trips[i].speeds_kmh == first.trips[i].speeds_kmh);
    CHECK(second.trips[i].start_time.utc_epoch_s ==
          first.trips[i].start_time.utc_epoch_s);
    CHECK(second.trips[i].start_time.offset_minutes ==
          first.trips[i].start_time.offset_minutes);
  }
}
