#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "beamlink/association.hpp"
#include "beamlink/error.hpp"
#include "beamlink/scan_sim.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace beamlink;
using beamlink::testing::rectangle;

namespace {

constexpr double kPi = std::numbers::pi;

// Single horizontal channel firing along ±x and ±y.
SensorModel cross_sensor() {
  SensorModel s;
  s.channels = 1;
  s.vertical_fov_min_deg = 0.0;
  s.vertical_fov_max_deg = 0.0;
  s.angular_step_h_deg = 90.0;
  return s;
}

Trajectory single_pose(const Mat3& rot = {}, const Vec3& at = {}) {
  return Trajectory({Pose{at, rot, 0}});
}

Scene wall_scene(double y, double reflectance, const Vec3& normal = {0, -1, 0}) {
  Scene scene;
  scene.materials["m"] = {"m", reflectance};
  scene.surfaces.push_back(rectangle("wall", {0, y, 0}, normal, 3.0, 10.0, "wall", "WallSurface", "m"));
  return scene;
}

}  // namespace

TEST_CASE("lambertian intensity of a wall") {
  auto beams = simulate_scan(wall_scene(2.0, 0.9), cross_sensor(), single_pose(), {});
  REQUIRE(beams.size() == 1);
  CHECK(beams[0].beam.intensity == doctest::Approx(90.0).epsilon(1e-6));
  CHECK(beams[0].beam.range == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(beams[0].surface_id == "wall");

  // Single beam along sensor +x, turned to 60° off the wall normal.
  SensorModel one = cross_sensor();
  one.angular_step_h_deg = 360.0;
  beams = simulate_scan(wall_scene(2.0, 0.9), one, single_pose(Mat3::rotation_z(kPi / 6)), {});
  REQUIRE(beams.size() == 1);
  CHECK(beams[0].beam.intensity == doctest::Approx(45.0).epsilon(1e-6));
  CHECK(beams[0].beam.range == doctest::Approx(4.0).epsilon(1e-12));

  SensorModel falloff = cross_sensor();
  falloff.range_falloff_exponent = 2.0;
  beams = simulate_scan(wall_scene(2.0, 0.9), falloff, single_pose(), {});
  REQUIRE(beams.size() == 1);
  CHECK(beams[0].beam.intensity == doctest::Approx(22.5).epsilon(1e-6));

  SensorModel hot = cross_sensor();
  hot.intensity_scale = 1000.0;
  beams = simulate_scan(wall_scene(2.0, 0.9), hot, single_pose(), {});
  REQUIRE(beams.size() == 1);
  CHECK(beams[0].beam.intensity == 255.0f);
}

TEST_CASE("back faces neither return nor occlude") {
  CHECK(simulate_scan(wall_scene(2.0, 0.9, {0, 1, 0}), cross_sensor(), single_pose(), {}).empty());

  Scene scene = wall_scene(4.0, 0.5);
  scene.surfaces.push_back(rectangle("back", {0, 1, 0}, {0, 1, 0}, 3.0, 10.0));
  scene.surfaces.push_back(rectangle("front", {0, 3, 0}, {0, -1, 0}, 3.0, 10.0));
  const auto beams = simulate_scan(scene, cross_sensor(), single_pose(), {});
  REQUIRE(beams.size() == 1);
  CHECK(beams[0].surface_id == "front");
  CHECK(beams[0].beam.range == doctest::Approx(3.0));
  CHECK(beams[0].beam.intensity == doctest::Approx(50.0).epsilon(1e-6));
}

TEST_CASE("max range") {
  SensorModel s = cross_sensor();
  s.max_range = 1.5;
  CHECK(simulate_scan(wall_scene(2.0, 0.9), s, single_pose(), {}).empty());
}

TEST_CASE("intensity increases with reflectance") {
  double last = -1.0;
  for (const double rho : {0.043, 0.2, 0.53, 0.9}) {
    const auto b = simulate_scan(wall_scene(3.0, rho), cross_sensor(), single_pose(), {});
    REQUIRE(b.size() == 1);
    CHECK(b[0].beam.intensity > last);
    last = b[0].beam.intensity;
  }
}

TEST_CASE("scene and sensor validation") {
  Scene scene = wall_scene(2.0, 0.5);
  scene.materials["m"].reflectance = 1.5;
  CHECK_THROWS_AS(scene.validate(), Error);
  scene = wall_scene(2.0, 0.5);
  scene.materials.clear();
  CHECK_THROWS_AS(scene.validate(), Error);

  SensorModel s;
  s.angular_step_h_deg = 0.0;
  CHECK_THROWS_AS(s.validate(), Error);
  s = {};
  s.channels = 0;
  CHECK_THROWS_AS(s.validate(), Error);
  s = {};
  s.max_range = -1;
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("trajectory interpolation") {
  CHECK_THROWS_AS(Trajectory({Pose{{}, {}, 10}, Pose{{}, {}, 10}}), Error);
  Mat3 bad;
  bad(0, 0) = 2.0;
  CHECK_THROWS_AS(Trajectory({Pose{{}, bad, 0}}), Error);

  const Trajectory t({Pose{{0, 0, 0}, Mat3::rotation_z(0.0), 0},
                      Pose{{10, 0, 0}, Mat3::rotation_z(1.0), 1'000'000'000}});
  const Pose mid = t.pose_at(250'000'000);
  CHECK(mid.position.x == doctest::Approx(2.5));
  const Mat3 expect = Mat3::rotation_z(0.25);
  for (int i = 0; i < 9; ++i) CHECK(mid.rotation.m[i] == doctest::Approx(expect.m[i]).epsilon(1e-12));
  CHECK(t.pose_at(-5).position.x == 0.0);
  CHECK(t.pose_at(2'000'000'000).position.x == 10.0);

  const Trajectory r = t.resample(100'000'000);
  CHECK(r.poses().size() == 11);
  CHECK(r.poses()[5].position.x == doctest::Approx(5.0));
}

TEST_CASE("simulation is deterministic and independent of worker count") {
  Preset p = class_separation_scene();
  p.sensor.noise_std = 2.0;
  p.sensor.range_noise_std = 0.01;
  p.trajectory = Trajectory({p.trajectory.poses().begin(), p.trajectory.poses().begin() + 6});
  ScanOptions o;
  o.seed = 42;
  o.workers = 1;
  const auto a = simulate_scan(p.scene, p.sensor, p.trajectory, o);
  o.workers = 3;
  const auto b = simulate_scan(p.scene, p.sensor, p.trajectory, o);
  REQUIRE(a.size() == b.size());
  REQUIRE(!a.empty());
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i) same = same && a[i].beam == b[i].beam;
  CHECK(same);

  o.seed = 43;
  const auto c = simulate_scan(p.scene, p.sensor, p.trajectory, o);
  bool differs = false;
  for (std::size_t i = 0; i < std::min(a.size(), c.size()); ++i)
    differs = differs || a[i].beam.intensity != c[i].beam.intensity;
  CHECK(differs);
}

TEST_CASE("beam ids and timestamps follow firing order") {
  Preset p = class_separation_scene();
  p.trajectory = Trajectory({p.trajectory.poses().begin(), p.trajectory.poses().begin() + 4});
  ScanOptions o;
  o.first_beam_id = 1000;
  const auto beams = simulate_scan(p.scene, p.sensor, p.trajectory, o);
  REQUIRE(beams.size() > 100);
  CHECK(beams.front().beam.beam_id == 1000);
  for (std::size_t i = 1; i < beams.size(); ++i) {
    CHECK(beams[i].beam.beam_id == beams[i - 1].beam.beam_id + 1);
    CHECK(beams[i].beam.timestamp_ns >= beams[i - 1].beam.timestamp_ns);
  }
  for (const auto& b : beams) {
    CHECK(b.beam.sensor_id == "front_center");
    CHECK(b.beam.campaign_id == "sim");
    CHECK_FALSE(beam_defect(b.beam));
  }
}

TEST_CASE("noise-free returns lie on their ground-truth surface") {
  Preset p = city_scene();
  p.trajectory = Trajectory({p.trajectory.poses()[3]});
  const auto beams = simulate_scan(p.scene, p.sensor, p.trajectory, {});
  REQUIRE(beams.size() > 5000);
  std::map<std::string, const Surface*> by_id;
  for (const auto& s : p.scene.surfaces) by_id[s.id()] = &s;
  double worst = 0.0;
  bool inside = true;
  bool front = true;
  for (const auto& b : beams) {
    const Surface& s = *by_id.at(b.surface_id);
    const Vec3 hit = b.beam.origin + b.beam.direction * b.beam.range;
    worst = std::max(worst, std::abs(s.plane_distance(hit)));
    inside = inside && s.contains_projection(hit, 1e-9);
    front = front && dot(b.beam.direction, s.normal()) < 0.0;
  }
  CHECK(worst < 1e-9);
  CHECK(inside);
  CHECK(front);
}

TEST_CASE("noise-free simulation associates back to the true surface") {
  const Preset p = city_scene();
  const auto sim = simulate_scan(p.scene, p.sensor, p.trajectory, {});
  std::vector<Beam> beams;
  for (const auto& s : sim) beams.push_back(s.beam);
  const auto index = SurfaceIndex::build(p.scene.surfaces);

  AssociationConfig first_hit;
  first_hit.ordering = CandidateOrdering::max_signed_distance;
  const auto near = associate_batch(beams, index, first_hit, 2);
  REQUIRE(near.summary.associated == beams.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < beams.size(); ++i) correct += near.associations[i].surface_id == sim[i].surface_id;
  CHECK(correct == beams.size());

  // Default ordering confirms the farthest intersection in the segment. A
  // beam grazing a convex corner can pass through the solid and meet the
  // ground behind it; the true surface is then the nearer candidate.
  const auto far = associate_batch(beams, index, {}, 2);
  REQUIRE(far.summary.associated == beams.size());
  AssociationConfig all;
  all.max_associations_per_beam = 16;
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < beams.size(); ++i) {
    const Association& a = far.associations[i];
    if (a.surface_id == sim[i].surface_id) continue;
    ++mismatches;
    const auto cands = associate_beam(beams[i], index, all);
    const auto truth = std::find_if(cands.begin(), cands.end(),
                                    [&](const Association& c) { return c.surface_id == sim[i].surface_id; });
    REQUIRE(truth != cands.end());
    CHECK(truth->signed_dist > a.signed_dist);
    CHECK(std::abs(truth->signed_dist) < 1e-9);
  }
  MESSAGE("default-ordering mismatches: " << mismatches << " of " << beams.size());
  CHECK(mismatches * 10000 < beams.size());
}

TEST_CASE("city preset geometry") {
  const Preset p = city_scene();
  CHECK(p.scene.surfaces.size() >= 50);
  CHECK_NOTHROW(p.scene.validate());
  // House faces point away from the house interior.
  std::map<std::string, std::pair<Vec3, int>> centers;
  for (const auto& s : p.scene.surfaces) {
    if (s.object_id().rfind("house_", 0) != 0) continue;
    auto& [sum, n] = centers[s.object_id()];
    sum = sum + s.centroid();
    ++n;
  }
  CHECK(centers.size() == 8);
  for (const auto& s : p.scene.surfaces) {
    const auto it = centers.find(s.object_id());
    if (it == centers.end()) continue;
    const Vec3 c = it->second.first / it->second.second;
    CHECK(dot(s.centroid() - c, s.normal()) > 0.0);
  }
}

TEST_CASE("spectralon preset follows a cosine law") {
  const Preset p = spectralon_scene();
  REQUIRE(p.scene.surfaces.size() == 4);
  CHECK(p.trajectory.poses().size() == 27);
  const auto beams = simulate_scan(p.scene, p.sensor, p.trajectory, {});
  std::map<std::string, const Surface*> by_id;
  for (const auto& s : p.scene.surfaces) by_id[s.id()] = &s;

  std::map<std::string, std::vector<std::pair<double, double>>> samples;
  for (const auto& b : beams) {
    const double c = -dot(b.beam.direction, by_id.at(b.surface_id)->normal());
    samples[b.surface_id].push_back({c, b.beam.intensity});
  }
  REQUIRE(samples.size() == 4);
  for (int i = 0; i < 4; ++i) {
    const auto& pts = samples.at("strip_" + std::to_string(i));
    double sxy = 0, sxx = 0, mean = 0;
    for (const auto& [x, y] : pts) {
      sxy += x * y;
      sxx += x * x;
      mean += y;
    }
    mean /= static_cast<double>(pts.size());
    const double i0 = sxy / sxx;
    double res = 0, tot = 0;
    for (const auto& [x, y] : pts) {
      res += (y - i0 * x) * (y - i0 * x);
      tot += (y - mean) * (y - mean);
    }
    CHECK(1.0 - res / tot >= 0.99);
    CHECK(std::abs(i0 - 100.0 * kSpectralonReflectances[i]) / (100.0 * kSpectralonReflectances[i]) < 0.02);
  }
}
