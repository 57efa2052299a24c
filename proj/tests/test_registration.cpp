#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "beamlink/error.hpp"
#include "beamlink/registration.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace beamlink;
using beamlink::testing::structured_cloud;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

PointCloud transformed(const std::vector<Vec3>& pts, const RigidTransform& t, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, noise);
  PointCloud c;
  for (const auto& p : pts) c.points.push_back(t.apply(p) + (noise > 0 ? Vec3{g(rng), g(rng), g(rng)} : Vec3{}));
  return c;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::io;
}

}  // namespace

TEST_CASE("k-d tree matches brute force") {
  std::mt19937_64 rng(1);
  std::vector<Vec3> pts;
  for (int i = 0; i < 3000; ++i) pts.push_back(beamlink::testing::random_point(rng, -5, 5));
  pts.push_back(pts[10]);  // duplicate: lower index wins
  const KdTree tree(pts);
  for (int q = 0; q < 2000; ++q) {
    const Vec3 p = q == 0 ? pts[10] : beamlink::testing::random_point(rng, -6, 6);
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double d = squared_norm(pts[i] - p);
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    const auto [idx, d2] = tree.nearest(p);
    CHECK(idx == best);
    CHECK(d2 == bd);
  }
}

TEST_CASE("rigid solve and transform algebra") {
  std::mt19937_64 rng(2);
  const auto pts = structured_cloud(rng, 60);
  const RigidTransform t{Mat3::rotation(normalized(Vec3{1, 2, 3}), 0.4), {0.5, -1, 2}};
  std::vector<Vec3> moved;
  for (const auto& p : pts) moved.push_back(t.apply(p));
  const RigidTransform s = solve_rigid(pts, moved);
  for (int i = 0; i < 9; ++i) CHECK(std::abs(s.rotation.m[i] - t.rotation.m[i]) < 1e-12);
  CHECK(distance(s.translation, t.translation) < 1e-12);
  CHECK(s.rotation.determinant() == doctest::Approx(1.0));

  const RigidTransform id = t.compose(t.inverse());
  CHECK(orthonormality_error(id.rotation) < 1e-12);
  CHECK(norm(id.translation) < 1e-12);
  CHECK(t.angle() == doctest::Approx(0.4));

  // Mirrored data must still produce a proper rotation.
  std::vector<Vec3> mirrored;
  for (const auto& p : pts) mirrored.push_back({-p.x, p.y, p.z});
  const RigidTransform m = solve_rigid(pts, mirrored);
  CHECK(m.rotation.determinant() == doctest::Approx(1.0));
  CHECK_NOTHROW(m.validate());
}

TEST_CASE("identical clouds") {
  std::mt19937_64 rng(3);
  const PointCloud c{structured_cloud(rng, 2000), {}};
  const auto r = icp_point_to_point(c, c);
  CHECK(r.fitness == 1.0);
  CHECK(r.rmse == 0.0);
  CHECK(r.iterations == 1);
  CHECK(r.converged);
  const auto s = score_alignment(c, c, {}, 1.0);
  CHECK(s.fitness == 1.0);
  CHECK(s.rmse == 0.0);
}

TEST_CASE("pure translation") {
  std::mt19937_64 rng(4);
  const auto pts = structured_cloud(rng, 5000);
  const PointCloud source{pts, {}};
  const PointCloud target = transformed(pts, {{}, {0.1, 0, 0}}, 0.0, rng);
  const auto r = icp_point_to_point(source, target);
  CHECK(r.converged);
  CHECK(distance(r.transform.translation, {0.1, 0, 0}) < 1e-3);
  CHECK(r.rmse < 1e-3);
}

TEST_CASE("rotation and translation with noise") {
  std::mt19937_64 rng(5);
  const auto pts = structured_cloud(rng, 10000);
  const RigidTransform truth{Mat3::rotation_z(5 * kDeg), {0.3, 0.0, 0.0}};
  const PointCloud source{pts, {}};
  const PointCloud target = transformed(pts, truth, 0.01, rng);
  RegistrationParams params;
  params.workers = 2;
  const auto r = icp_point_to_point(source, target, {}, params);
  CHECK(distance(r.transform.translation, truth.translation) < 0.01);
  CHECK(r.transform.inverse().compose(truth).angle() < 0.1 * kDeg);
  CHECK(r.fitness >= 0.99);
  CHECK_NOTHROW(r.transform.validate());
  for (std::size_t i = 1; i < r.rmse_history.size(); ++i) CHECK(r.rmse_history[i] <= r.rmse_history[i - 1] + 1e-12);

  params.workers = 1;
  const auto serial = icp_point_to_point(source, target, {}, params);
  CHECK(serial.transform.rotation == r.transform.rotation);
  CHECK(serial.transform.translation == r.transform.translation);
}

TEST_CASE("fitness is relative to the target size") {
  std::mt19937_64 rng(6);
  const auto pts = structured_cloud(rng, 200);
  const PointCloud source{{pts.begin(), pts.begin() + 100}, {}};
  const PointCloud target{pts, {}};
  CHECK(score_alignment(source, target, {}, 1.0).fitness == 0.5);
  CHECK(icp_point_to_point(source, target).fitness == 0.5);
}

TEST_CASE("scoring without inliers") {
  std::mt19937_64 rng(7);
  const auto pts = structured_cloud(rng, 300);
  const PointCloud far = transformed(pts, {{}, {100, 0, 0}}, 0.0, rng);
  const auto s = score_alignment(PointCloud{pts, {}}, far, {}, 1.0);
  CHECK(s.fitness == 0.0);
  CHECK_FALSE(s.rmse);
  CHECK(kind_of([&] { score_alignment(PointCloud{pts, {}}, PointCloud{}, {}, 1.0); }) == ErrorKind::invalid_argument);
  CHECK(kind_of([&] { icp_point_to_point(PointCloud{pts, {}}, far); }) == ErrorKind::singular);
}

TEST_CASE("degenerate source geometry") {
  PointCloud line;
  for (int i = 0; i < 50; ++i) line.points.push_back({0.1 * i, 0.2 * i, 0.0});
  PointCloud target = line;
  target.points.push_back({0, 1, 0});
  CHECK(kind_of([&] { icp_point_to_point(line, target); }) == ErrorKind::singular);
  PointCloud point{{{1, 1, 1}, {1, 1, 1}, {1, 1, 1}}, {}};
  CHECK(kind_of([&] { icp_point_to_point(point, target); }) == ErrorKind::singular);
  CHECK(kind_of([&] { icp_point_to_point(PointCloud{}, target); }) == ErrorKind::invalid_argument);
  RigidTransform bad;
  bad.rotation(0, 0) = 3.0;
  std::mt19937_64 rng(8);
  const PointCloud ok{structured_cloud(rng, 50), {}};
  CHECK(kind_of([&] { icp_point_to_point(ok, ok, bad); }) == ErrorKind::invalid_argument);
}

TEST_CASE("xyz round trip") {
  std::mt19937_64 rng(9);
  PointCloud c{structured_cloud(rng, 100), {}};
  c.points.push_back({1e-300, -0.0, 123456789.123456789});
  std::stringstream ss;
  write_xyz(ss, c);
  const PointCloud back = read_xyz(ss);
  CHECK(back.points == c.points);

  std::istringstream commented("# header\n1 2 3\n\n  4 5 6 # trailing\n");
  CHECK(read_xyz(commented).points == std::vector<Vec3>{{1, 2, 3}, {4, 5, 6}});
  std::istringstream bad("1 2\n");
  CHECK(kind_of([&] { read_xyz(bad); }) == ErrorKind::corrupt);
  std::istringstream junk("1 2 x\n");
  CHECK(kind_of([&] { read_xyz(junk); }) == ErrorKind::corrupt);
}
