#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "beamlink/error.hpp"
#include "beamlink/fingerprint.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace beamlink;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

BeamRecord record(BeamId id, double range, double zenith_deg, float intensity, const std::string& object,
                  const std::string& cls = "WallSurface", const std::string& campaign = "c",
                  const std::string& sensor = "s") {
  BeamRecord r;
  r.beam.beam_id = id;
  r.beam.direction = {0, 1, 0};
  r.beam.range = range;
  r.beam.intensity = intensity;
  r.beam.campaign_id = campaign;
  r.beam.sensor_id = sensor;
  r.enrichment = Enrichment{object + "/s", object, cls, std::nullopt, zenith_deg * kDeg, 0.0, 0.0, 0.0};
  return r;
}

// Fingerprint on the default grid with the given Q3 per zenith bin.
Fingerprint with_q3(const std::string& object, const std::vector<double>& q3) {
  Fingerprint fp;
  fp.key = {"c", "s", object};
  fp.grid = BinGrid::standard();
  fp.class_name = "C";
  for (const double q : q3) {
    Descriptor d;
    d.count = 10;
    d.q1 = d.median = d.mean = q;
    d.q3 = q;
    fp.cells.push_back(d);
  }
  return fp;
}

double oracle_q3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double pos = 0.75 * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (pos - static_cast<double>(i)) * (v[i + 1] - v[i]);
}

std::vector<BeamRecord> random_records(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> range(0.0, 40.0);
  std::uniform_real_distribution<double> zen(0.0, 95.0);
  std::uniform_real_distribution<double> inten(0.0, 255.0);
  std::uniform_int_distribution<int> obj(0, 6);
  std::vector<BeamRecord> out;
  for (std::size_t k = 0; k < n; ++k) {
    const int o = obj(rng);
    auto r = record(k, range(rng), std::min(90.0, zen(rng)), static_cast<float>(inten(rng)),
                    "o" + std::to_string(o), o % 2 ? "A" : "B", k % 3 ? "c1" : "c2");
    if (k % 17 == 0) r.enrichment.reset();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

TEST_CASE("default grid") {
  const BinGrid g = BinGrid::standard();
  CHECK(g.range_bins() == 1);
  CHECK(g.range_edges == std::vector<double>{0.0, 15.0});
  CHECK(g.zenith_bins() == 4);
  CHECK(g.zenith_bin(0.0) == 0u);
  CHECK(g.zenith_bin(19.999 * kDeg) == 0u);
  CHECK(g.zenith_bin(20 * kDeg) == 1u);
  CHECK(g.zenith_bin(60 * kDeg) == 3u);
  CHECK_FALSE(g.zenith_bin(90 * kDeg));
  CHECK_FALSE(g.range_bin(15.0));
  CHECK(g.range_bin(14.999) == 0u);
  CHECK(BinGrid::standard(15.0, 45.0).range_bins() == 3);

  BinGrid bad = g;
  bad.zenith_edges = {0.0, 0.5, 0.5};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = g;
  bad.zenith_edges.back() = 2.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = g;
  bad.range_edges = {-1.0, 5.0};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("single populated cell") {
  std::vector<BeamRecord> recs;
  for (BeamId i = 0; i < 6; ++i) recs.push_back(record(i, 5.0, 10.0, 10.0f * static_cast<float>(i + 1), "o"));
  const auto set = extract_fingerprints(recs, BinGrid::standard());
  REQUIRE(set.fingerprints.size() == 1);
  const Fingerprint& fp = set.fingerprints.begin()->second;
  CHECK(fp.cell(0, 0).count == 6);
  for (std::size_t j = 1; j < 4; ++j) CHECK(fp.cell(0, j).count == 0);
  CHECK(fp.cell(0, 0).q3 == doctest::Approx(47.5));
  CHECK(fp.missing_bins(0, 5) == std::vector<std::size_t>{1, 2, 3});
}

TEST_CASE("half-open zenith boundary") {
  std::vector<BeamRecord> recs = {record(0, 5.0, 20.0, 1.0f, "o"), record(1, 5.0, 90.0, 1.0f, "o"),
                                  record(2, 15.0, 10.0, 1.0f, "o")};
  const auto set = extract_fingerprints(recs, BinGrid::standard());
  CHECK(set.counted == 1);
  CHECK(set.dropped == 2);
  CHECK(set.fingerprints.begin()->second.cell(0, 1).count == 1);
}

TEST_CASE("partition and quantile oracle") {
  std::mt19937_64 rng(17);
  const auto recs = random_records(rng, 20000);
  const BinGrid grid = BinGrid::standard(10.0, 30.0);
  FingerprintFilter filter;
  filter.campaigns = std::set<std::string>{"c1"};
  filter.zenith = Window{0.0, 80 * kDeg};

  const auto set = extract_fingerprints(recs, grid, filter, 1);
  CHECK(set.counted + set.dropped == recs.size());

  std::map<std::pair<std::string, std::size_t>, std::vector<double>> expect;
  std::size_t accepted = 0;
  for (const auto& r : recs) {
    if (!r.enrichment || r.beam.campaign_id != "c1" || r.enrichment->zenith >= 80 * kDeg) continue;
    const auto i = grid.range_bin(r.beam.range);
    const auto j = grid.zenith_bin(r.enrichment->zenith);
    if (!i || !j) continue;
    ++accepted;
    expect[{r.enrichment->object_id, *i * 4 + *j}].push_back(r.beam.intensity);
  }
  CHECK(set.counted == accepted);

  std::size_t cells_total = 0;
  for (const auto& [key, fp] : set.fingerprints) {
    CHECK(key.campaign_id == "c1");
    for (std::size_t c = 0; c < fp.cells.size(); ++c) {
      const Descriptor& d = fp.cells[c];
      cells_total += d.count;
      const auto it = expect.find({key.object_id, c});
      if (it == expect.end()) {
        CHECK(d.count == 0);
        continue;
      }
      CHECK(d.count == it->second.size());
      CHECK(d.q3 == doctest::Approx(oracle_q3(it->second)).epsilon(1e-12));
      CHECK(d.q1 <= d.median);
      CHECK(d.median <= d.q3);
    }
  }
  CHECK(cells_total == set.counted);

  const auto parallel = extract_fingerprints(recs, grid, filter, 4);
  CHECK(parallel.counted == set.counted);
  bool same = true;
  for (const auto& [key, fp] : set.fingerprints) {
    const Fingerprint& other = parallel.fingerprints.at(key);
    for (std::size_t c = 0; c < fp.cells.size(); ++c)
      same = same && fp.cells[c].q3 == other.cells[c].q3 && fp.cells[c].mean == other.cells[c].mean &&
             fp.cells[c].count == other.cells[c].count;
  }
  CHECK(same);
}

TEST_CASE("filter") {
  FingerprintFilter f;
  f.objects = std::set<std::string>{};
  CHECK_THROWS_AS(f.validate(), Error);
  f = {};
  f.range = Window{5.0, 5.0};
  CHECK_THROWS_AS(f.validate(), Error);

  f = {};
  f.functions = std::set<std::string>{"residential"};
  auto r = record(0, 5.0, 10.0, 1.0f, "o");
  CHECK_FALSE(f.accepts(r));
  r.enrichment->function = "residential";
  CHECK(f.accepts(r));
  f.classes = std::set<std::string>{"RoofSurface"};
  CHECK_FALSE(f.accepts(r));
}

TEST_CASE("distance examples") {
  const auto a = with_q3("a", {1, 2, 3, 4});
  const auto b = with_q3("b", {4, 3, 2, 1});
  CHECK(dist_q3(a, a, 0) == 0.0);
  CHECK(std::abs(dist_q3(a, b, 0) - std::sqrt(5.0)) < 1e-12);
  CHECK(dist_q3(with_q3("x", {10, 10, 10, 10}), with_q3("y", {14, 14, 14, 14}), 0) == doctest::Approx(4.0));
}

TEST_CASE("coverage is enforced") {
  auto a = with_q3("a", {1, 2, 3, 4});
  const auto b = with_q3("b", {4, 3, 2, 1});
  a.cells[2].count = 3;
  try {
    dist_q3(a, b, 0);
    FAIL("expected coverage error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::coverage);
    CHECK(std::string(e.what()).find("c/s/a") != std::string::npos);
    CHECK(std::string(e.what()).find("[40deg, 60deg)") != std::string::npos);
  }
  CHECK_NOTHROW(dist_q3(a, b, 0, 3));
  a.cells[2].count = 0;
  CHECK_THROWS_AS(dist_q3(a, b, 0, 0), Error);
  CHECK_THROWS_AS(dist_q3(a, b, 1), Error);
}

TEST_CASE("distance is a metric and homogeneous") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> q(0.0, 255.0);
  auto random_fp = [&](const std::string& id) { return with_q3(id, {q(rng), q(rng), q(rng), q(rng)}); };
  for (int t = 0; t < 2000; ++t) {
    const auto a = random_fp("a"), b = random_fp("b"), c = random_fp("c");
    const double ab = dist_q3(a, b, 0), ba = dist_q3(b, a, 0);
    CHECK(ab >= 0.0);
    CHECK(ab == ba);
    CHECK(ab <= dist_q3(a, c, 0) + dist_q3(c, b, 0) + 1e-12);
  }

  std::mt19937_64 rng2(4);
  auto recs = random_records(rng2, 5000);
  auto scaled = recs;
  for (auto& r : scaled) r.beam.intensity = r.beam.intensity * 0.5f;
  const BinGrid grid = BinGrid::standard(40.0, 40.0);
  const auto fa = extract_fingerprints(recs, grid).fingerprints;
  const auto fb = extract_fingerprints(scaled, grid).fingerprints;
  const auto k0 = fa.begin()->first;
  for (const auto& [k, fp] : fa) {
    if (k == k0) continue;
    const double d = dist_q3(fa.at(k0), fp, 0);
    CHECK(dist_q3(fb.at(k0), fb.at(k), 0) == doctest::Approx(0.5 * d).epsilon(1e-12));
  }
}

TEST_CASE("group distances") {
  std::map<FingerprintKey, Fingerprint> fps;
  for (const auto& fp : {with_q3("x", {1, 2, 3, 4}), with_q3("y", {4, 3, 2, 1}), with_q3("z", {1, 2, 3, 4})})
    fps.emplace(fp.key, fp);
  const FingerprintKey x{"c", "s", "x"}, y{"c", "s", "y"}, z{"c", "s", "z"};

  CHECK(mean_group_distance({x, y}, {x, y}, fps, 0) == doctest::Approx(std::sqrt(5.0)));
  CHECK(mean_group_distance({x, z}, {x, z}, fps, 0) == 0.0);
  CHECK(mean_group_distance({x}, {y, z}, fps, 0) == mean_group_distance({y, z}, {x}, fps, 0));
  try {
    mean_group_distance({x}, {x}, fps, 0);
    FAIL("expected empty pair error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::empty_pairs);
  }
  CHECK_THROWS_AS(mean_group_distance({x}, {{"c", "s", "nope"}}, fps, 0), Error);

  // The same object seen by two sensors never pairs with itself.
  auto x2 = fps.at(x);
  x2.key.sensor_id = "s2";
  fps.emplace(x2.key, x2);
  CHECK_THROWS_AS(mean_group_distance({x}, {x2.key}, fps, 0), Error);
}

TEST_CASE("group matrix") {
  std::map<FingerprintKey, Fingerprint> one;
  for (const auto& fp : {with_q3("x", {5, 6, 7, 8}), with_q3("y", {5, 6, 7, 8})}) one.emplace(fp.key, fp);
  auto m = group_distance_matrix(Grouping::by_class, one, 0);
  REQUIRE(m.labels.size() == 1);
  CHECK(m.at(0, 0) == 0.0);

  std::map<FingerprintKey, Fingerprint> fps;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> q(0.0, 100.0);
  for (int i = 0; i < 12; ++i) {
    auto fp = with_q3("o" + std::to_string(i), {q(rng), q(rng), q(rng), q(rng)});
    fp.class_name = "K" + std::to_string(i % 4);
    if (i % 2) fp.function = "F" + std::to_string(i % 3);
    fps.emplace(fp.key, fp);
  }
  auto lonely = with_q3("lonely", {1, 1, 1, 1});
  lonely.class_name = "Single";
  fps.emplace(lonely.key, lonely);
  auto partial = with_q3("partial", {1, 1, 1, 1});
  partial.cells[3].count = 0;
  fps.emplace(partial.key, partial);

  m = group_distance_matrix(Grouping::by_class, fps, 0);
  CHECK(m.labels == std::vector<std::string>{"K0", "K1", "K2", "K3", "Single"});
  REQUIRE(m.excluded.size() == 1);
  CHECK(m.excluded[0].object_id == "partial");
  const std::size_t n = m.labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == 4 && j == 4) {
        CHECK_FALSE(m.at(i, j));
        continue;
      }
      REQUIRE(m.at(i, j));
      CHECK(*m.at(i, j) >= 0.0);
      CHECK(*m.at(i, j) == *m.at(j, i));
    }
  }
  const auto f = group_distance_matrix(Grouping::by_function, fps, 0);
  CHECK(f.labels.size() == 3);
  CHECK(render_matrix(m).find("Single (1)") != std::string::npos);

  std::ostringstream csv;
  write_matrix_csv(csv, m);
  CHECK(csv.str().rfind("group,K0,K1,K2,K3,Single\n", 0) == 0);
}

TEST_CASE("fingerprints round-trip through csv") {
  std::mt19937_64 rng(2);
  auto recs = random_records(rng, 3000);
  recs[5].enrichment->function = "with, comma";
  const auto fps = extract_fingerprints(recs, BinGrid::standard(10.0, 30.0)).fingerprints;
  std::stringstream ss;
  write_fingerprints_csv(ss, fps);
  const auto back = read_fingerprints_csv(ss);
  REQUIRE(back.size() == fps.size());
  for (const auto& [k, fp] : fps) {
    const Fingerprint& b = back.at(k);
    CHECK(b.grid == fp.grid);
    CHECK(b.class_name == fp.class_name);
    CHECK(b.function == fp.function);
    for (std::size_t c = 0; c < fp.cells.size(); ++c) {
      CHECK(b.cells[c].count == fp.cells[c].count);
      CHECK(b.cells[c].q3 == fp.cells[c].q3);
      CHECK(b.cells[c].std == fp.cells[c].std);
    }
  }
  std::istringstream bad("campaign_id,oops\n");
  CHECK_THROWS_AS(read_fingerprints_csv(bad), Error);
  CHECK(render_fingerprints(fps, 1).find("range bin [10 m, 20 m)") != std::string::npos);
}

TEST_CASE("feature matrix export") {
  std::vector<BeamRecord> none;
  auto t = export_feature_matrix(none, {"intensity", "sensor"});
  CHECK(t.header == std::vector<std::string>{"beam_id", "intensity"});
  CHECK(t.rows.empty());

  std::vector<BeamRecord> recs = {record(9, 5.0, 30.0, 12.5f, "o", "C", "c1", "lidar_b"),
                                  record(3, 7.0, 10.0, 40.0f, "o", "C", "c1", "lidar_a")};
  recs[0].enrichment.reset();
  t = export_feature_matrix(recs, {"intensity", "range", "zenith", "azimuth", "campaign", "sensor"});
  CHECK(t.header == std::vector<std::string>{"beam_id", "intensity", "range", "zenith", "azimuth",
                                             "campaign=c1", "sensor=lidar_a", "sensor=lidar_b"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][0] == 3.0);
  CHECK(t.rows[0][1] == 40.0);
  CHECK(t.rows[0][3] == doctest::Approx(10 * kDeg));
  CHECK(t.rows[1][0] == 9.0);
  CHECK_FALSE(t.rows[1][3]);
  for (const auto& row : t.rows) CHECK(*row[6] + *row[7] == 1.0);

  std::ostringstream os;
  write_feature_csv(os, t);
  CHECK(os.str() ==
        "beam_id,intensity,range,zenith,azimuth,campaign=c1,sensor=lidar_a,sensor=lidar_b\n"
        "3,40,7,0.17453292519943295,0,1,1,0\n"
        "9,12.5,5,,,1,0,1\n");

  CHECK_THROWS_AS(export_feature_matrix(recs, {"colour"}), Error);
}

TEST_CASE("lambertian object fingerprint decreases with zenith") {
  beamlink::testing::Pipeline run = beamlink::testing::run_pipeline(class_separation_scene());
  const auto fps = extract_fingerprints(run.records, BinGrid::standard()).fingerprints;
  const Fingerprint& fp = fps.at({"sim", "front_center", "panel_1"});
  REQUIRE(fp.covered(0, kDefaultMinCount));
  for (std::size_t j = 1; j < 4; ++j) CHECK(fp.cell(0, j).q3 < fp.cell(0, j - 1).q3);
}

TEST_CASE("material classes separate") {
  const auto run = beamlink::testing::run_pipeline(class_separation_scene());
  const auto fps = extract_fingerprints(run.records, BinGrid::standard()).fingerprints;
  const auto m = group_distance_matrix(Grouping::by_class, fps, 0);
  REQUIRE(m.labels.size() == 3);
  CHECK(m.excluded.empty());
  double intra = 0, inter = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      REQUIRE(m.at(i, j));
      if (i == j) {
        intra += *m.at(i, j) / 3.0;
      } else {
        inter += *m.at(i, j) / 6.0;
        CHECK(*m.at(i, i) < *m.at(i, j));
      }
    }
  }
  CHECK(inter > 5.0 * intra);
}
