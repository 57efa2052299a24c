#include <cmath>
#include <numbers>
#include <random>

#include "beamlink/error.hpp"
#include "beamlink/geometry.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace beamlink;
using beamlink::testing::rectangle;
using beamlink::testing::square;

namespace {

constexpr double kPi = std::numbers::pi;

void check_vec(const Vec3& a, const Vec3& b, double tol = 1e-12) {
  CHECK(std::abs(a.x - b.x) <= tol);
  CHECK(std::abs(a.y - b.y) <= tol);
  CHECK(std::abs(a.z - b.z) <= tol);
}

// Brute-force polygon/segment distance: sample each triangle of the polygon on
// a barycentric grid of at most `pitch` spacing.
double sampled_distance(const Surface& s, const Vec3& p0, const Vec3& p1, double pitch) {
  double best = std::numeric_limits<double>::infinity();
  const auto& v = s.vertices();
  for (std::size_t k = 1; k + 1 < v.size(); ++k) {
    const Vec3 a = v[0], b = v[k], c = v[k + 1];
    const double longest = std::max({distance(a, b), distance(b, c), distance(c, a)});
    const int n = std::max(1, static_cast<int>(std::ceil(longest / pitch)));
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; i + j <= n; ++j) {
        const Vec3 p = a + (b - a) * (double(i) / n) + (c - a) * (double(j) / n);
        best = std::min(best, distance(p, closest_point_on_segment(p, p0, p1)));
      }
    }
  }
  return best;
}

// Möller–Trumbore ray/triangle intersection restricted to t in [tmin, tmax].
std::optional<Vec3> moller_trumbore(const Vec3& o, const Vec3& d, double tmin, double tmax,
                                    const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 pvec = cross(d, e2);
  const double det = dot(e1, pvec);
  if (std::abs(det) < 1e-14) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 tvec = o - a;
  const double u = dot(tvec, pvec) * inv;
  if (u < 0 || u > 1) return std::nullopt;
  const Vec3 qvec = cross(tvec, e1);
  const double w = dot(d, qvec) * inv;
  if (w < 0 || u + w > 1) return std::nullopt;
  const double t = dot(e2, qvec) * inv;
  if (t < tmin || t > tmax) return std::nullopt;
  return o + d * t;
}

}  // namespace

TEST_CASE("reflection point") {
  CHECK(reflection_point(Ray({0, 0, 0}, {1, 0, 0}, 5)) == Vec3{5, 0, 0});
  CHECK(reflection_point(Ray({1, 2, 3}, {0, 0, 1}, 2.5)) == Vec3{1, 2, 5.5});
  CHECK(reflection_point(Ray({1, 2, 3}, {0, 1, 0}, 0)) == Vec3{1, 2, 3});
}

TEST_CASE("ray validation") {
  CHECK_THROWS_AS(Ray({0, 0, 0}, {1, 1, 0}, 1), Error);
  CHECK_THROWS_AS(Ray({0, 0, 0}, {1, 0, 0}, -1), Error);
  CHECK_THROWS_AS(Ray({0, 0, 0}, {1, 0, 0}, std::nan("")), Error);
}

TEST_CASE("segment from ray") {
  GeomParams params;
  CHECK(params.segment_length == 1.0);
  CHECK(params.assoc_radius == 0.05);
  const Segment s = segment_from_ray(Ray({0, 0, 0}, {1, 0, 0}, 5), params);
  CHECK(s.center() == Vec3{5, 0, 0});
  CHECK(s.half_length() == 0.5);
  CHECK(s.start() == Vec3{4.5, 0, 0});
  CHECK(s.end() == Vec3{5.5, 0, 0});

  const Segment z = segment_from_ray(Ray({1, 1, 1}, {1, 0, 0}, 0), params);
  CHECK(z.start() == Vec3{0.5, 1, 1});
  CHECK(z.end() == Vec3{1.5, 1, 1});
}

TEST_CASE("surface construction") {
  const Surface s = Surface::create("f", {{0, 0, 0}, {2, 0, 0}, {2, 2, 0}, {0, 2, 0}}, "o", "Ground");
  check_vec(s.normal(), {0, 0, 1});
  check_vec(s.centroid(), {1, 1, 0});
  CHECK(s.area() == doctest::Approx(4.0));
  CHECK(s.convex());

  SUBCASE("non-planar") {
    CHECK_THROWS_AS(Surface::create("x", {{0, 0, 0}, {1, 0, 0}, {1, 1, 0.01}, {0, 1, 0}}, "o", "c"),
                    Error);
  }
  SUBCASE("self-intersecting bow tie") {
    CHECK_THROWS_AS(Surface::create("x", {{0, 0, 0}, {1, 1, 0}, {1, 0, 0}, {0, 1, 0}}, "o", "c"),
                    Error);
  }
  SUBCASE("degenerate") {
    CHECK_THROWS_AS(Surface::create("x", {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, "o", "c"), Error);
    CHECK_THROWS_AS(Surface::create("x", {{0, 0, 0}, {1, 0, 0}}, "o", "c"), Error);
  }
  SUBCASE("concave polygon is ear-clipped") {
    // L-shape, area 3.
    const Surface l = Surface::create(
        "l", {{0, 0, 0}, {2, 0, 0}, {2, 1, 0}, {1, 1, 0}, {1, 2, 0}, {0, 2, 0}}, "o", "c");
    CHECK_FALSE(l.convex());
    CHECK(l.triangles().size() == 4);
    double area = 0;
    for (const auto& t : l.triangles())
      area += 0.5 * norm(cross(l.vertices()[t[1]] - l.vertices()[t[0]],
                               l.vertices()[t[2]] - l.vertices()[t[0]]));
    CHECK(area == doctest::Approx(3.0));
    CHECK(l.contains_projection({0.5, 1.5, 0}));
    CHECK_FALSE(l.contains_projection({1.5, 1.5, 0}));
    CHECK(l.distance_to_point({1.5, 1.5, 0}) == doctest::Approx(0.5));
  }
}

TEST_CASE("spherocylinder candidate: facing and culling") {
  const Segment seg({5, 0, 0}, {1, 0, 0}, 0.5);
  const Surface front = square("front", {5, 0, 0}, {-1, 0, 0}, 0.5);
  const Surface back = square("back", {5, 0, 0}, {1, 0, 0}, 0.5);
  CHECK(spherocylinder_candidate(seg, front, {1, 0, 0}, 0.05));
  CHECK_FALSE(spherocylinder_candidate(seg, back, {1, 0, 0}, 0.05));
}

TEST_CASE("spherocylinder candidate: lateral offset against sampling oracle") {
  const Segment seg({5, 0, 0}, {1, 0, 0}, 0.5);
  // Square parallel to the beam, its plane offset sideways from the segment axis.
  const Surface far = rectangle("far", {5, 0.06, 0}, {0, -1, 0}, 0.2, 0.2);
  const Surface near = rectangle("near", {5, 0.04, 0}, {0, -1, 0}, 0.2, 0.2);
  const double far_oracle = sampled_distance(far, seg.start(), seg.end(), 0.001);
  const double near_oracle = sampled_distance(near, seg.start(), seg.end(), 0.001);
  CHECK(far_oracle == doctest::Approx(0.06).epsilon(1e-9));
  CHECK(near_oracle == doctest::Approx(0.04).epsilon(1e-9));
  CHECK_FALSE(spherocylinder_candidate(seg, far, {1, 0, 0}, 0.05));
  CHECK(spherocylinder_candidate(seg, near, {1, 0, 0}, 0.05));

  // Facing square whose near edge sits 6 cm / 4 cm from the axis.
  const Surface edge_far = rectangle("ef", {5, 0.26, 0}, {-1, 0, 0}, 0.2, 0.2);
  const Surface edge_near = rectangle("en", {5, 0.24, 0}, {-1, 0, 0}, 0.2, 0.2);
  CHECK(sampled_distance(edge_far, seg.start(), seg.end(), 0.001) == doctest::Approx(0.06));
  CHECK_FALSE(spherocylinder_candidate(seg, edge_far, {1, 0, 0}, 0.05));
  CHECK(spherocylinder_candidate(seg, edge_near, {1, 0, 0}, 0.05));

  // Beyond the segment end: the hemispherical cap decides.
  const Surface cap = square("cap", {5.54, 0, 0}, {-1, 0, 0}, 0.2);
  const Surface past_cap = square("pc", {5.56, 0, 0}, {-1, 0, 0}, 0.2);
  CHECK(spherocylinder_candidate(seg, cap, {1, 0, 0}, 0.05));
  CHECK_FALSE(spherocylinder_candidate(seg, past_cap, {1, 0, 0}, 0.05));
}

TEST_CASE("spherocylinder candidate agrees with dense sampling on random pairs") {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> offset(0.0, 0.25);
  std::uniform_real_distribution<double> size(0.05, 0.2);
  const double radius = 0.05;
  int positives = 0;
  int band = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec3 dir = testing::random_unit(rng);
    const Vec3 center = testing::random_point(rng, -10, 10);
    const Segment seg(center, dir, 0.5);
    const Vec3 pc = center + dir * ((offset(rng) - 0.125) * 6.0) +
                    testing::random_unit(rng) * offset(rng);
    const Surface tri = testing::random_triangle("t", rng, pc, size(rng));
    const double oracle = sampled_distance(tri, seg.start(), seg.end(), 0.001);
    const double exact = tri.distance_to_segment(seg.start(), seg.end());
    // The sampled minimum can only over-estimate, by at most about one pitch.
    CHECK(exact <= oracle + 1e-12);
    CHECK(oracle - exact <= 1.5e-3);
    const bool oracle_hit = oracle <= radius && -dot(dir, tri.normal()) >= 0.0;
    const bool hit = spherocylinder_candidate(seg, tri, dir, radius);
    if (hit != oracle_hit) {
      ++band;
      CHECK(std::abs(oracle - radius) < 2e-3);
    }
    positives += hit;
  }
  CHECK(positives > 100);
  CHECK(band < 20);
}

TEST_CASE("segment/surface intersection") {
  const Segment seg({5, 0, 0}, {1, 0, 0}, 0.5);
  const Surface at5 = square("a", {5, 0, 0}, {-1, 0, 0}, 0.5);
  const Surface at6 = square("b", {6, 0, 0}, {-1, 0, 0}, 0.5);
  const auto hit = segment_surface_intersection(seg, at5);
  REQUIRE(hit);
  check_vec(*hit, {5, 0, 0});
  CHECK_FALSE(segment_surface_intersection(seg, at6));

  SUBCASE("parallel segment in the plane yields none") {
    const Surface in_plane = rectangle("p", {5, 0, 0}, {0, 0, 1}, 1, 1);
    CHECK_FALSE(segment_surface_intersection(seg, in_plane));
  }
  SUBCASE("back-facing planes still intersect geometrically") {
    const Surface flipped = square("f", {5, 0, 0}, {1, 0, 0}, 0.5);
    CHECK(segment_surface_intersection(seg, flipped));
  }
}

TEST_CASE("segment/surface intersection matches Möller–Trumbore on oblique triangles") {
  std::mt19937_64 rng(7);
  int hits = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const Vec3 center = testing::random_point(rng, -3, 3);
    const Surface tri = testing::random_triangle("t", rng, center, 0.6);
    const Vec3 dir = testing::random_unit(rng);
    const Vec3 seg_center = center + testing::random_unit(rng) * 0.4;
    const Segment seg(seg_center, dir, 0.5);
    const auto& v = tri.vertices();
    const auto oracle = moller_trumbore(seg.center(), dir, -0.5, 0.5, v[0], v[1], v[2]);
    const auto got = segment_surface_intersection(seg, tri);
    if (std::abs(dot(dir, tri.normal())) < 1e-6) continue;
    if (oracle.has_value() != got.has_value()) {
      // Only tolerated for grazing hits on an edge.
      const Vec3 p = oracle ? *oracle : *got;
      CHECK(distance(p, closest_point_on_triangle(p, v[0], v[1], v[2])) < 1e-8);
      continue;
    }
    if (!got) continue;
    ++hits;
    CHECK(distance(*got, *oracle) <= 1e-9);
    CHECK(std::abs(tri.plane_distance(*got)) <= 1e-9);
  }
  CHECK(hits > 100);
}

TEST_CASE("signed distance") {
  CHECK(signed_distance({5, 0, 0}, {5.4, 0, 0}, {1, 0, 0}) == doctest::Approx(-0.4));
  CHECK(signed_distance({5, 0, 0}, {5, 0, 0}, {1, 0, 0}) == 0.0);
  CHECK(signed_distance({5, 0, 0}, {4.7, 0, 0}, {1, 0, 0}) == doctest::Approx(0.3));

  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Vec3 a = testing::random_point(rng, -5, 5), b = testing::random_point(rng, -5, 5);
    const Vec3 d = testing::random_unit(rng);
    CHECK(signed_distance(a, b, d) == -signed_distance(b, a, d));
  }
}

TEST_CASE("zenith angle") {
  CHECK(zenith_angle({1, 0, 0}, {-1, 0, 0}) == 0.0);
  const double h = std::sqrt(2.0) / 2.0;
  CHECK(zenith_angle({1, 0, 0}, {-h, h, 0}) == doctest::Approx(kPi / 4));
  CHECK(zenith_angle({1, 0, 0}, {0, 1, 0}) == doctest::Approx(kPi / 2));
  // Rounding slightly beyond the valid domain stays inside [0, π/2].
  CHECK(zenith_angle({1, 0, 0}, {-1.0000000000000002, 0, 0}) == 0.0);
  CHECK(zenith_angle({1, 0, 0}, {1e-12, 1, 0}) <= kPi / 2);
}

TEST_CASE("local frame") {
  SUBCASE("horizontal floor") {
    const Surface floor = rectangle("f", {3, 3, 0}, {0, 0, 1}, 4, 4);
    const LocalFrame f = local_frame(floor, {0, 0, 2});
    check_vec(f.u, {1, 0, 0});
    check_vec(f.v, {0, 1, 0});
    check_vec(f.n, {0, 0, 1});
    check_vec(f.origin, {0, 0, 0});
  }
  SUBCASE("vertical wall facing -y") {
    const Surface wall = Surface::create("w", {{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1}}, "o", "c");
    check_vec(wall.normal(), {0, -1, 0});
    const LocalFrame f = local_frame(wall, {0.5, -3, 0.5});
    // a = z; u = a − (a·n)n = z; v = n × u = (−1, 0, 0).
    check_vec(f.u, {0, 0, 1});
    check_vec(f.v, {-1, 0, 0});
    check_vec(f.origin, {0.5, 0, 0.5});
    CHECK(std::abs(dot(f.u, f.v)) < 1e-15);
  }
  SUBCASE("orthonormal and right-handed for arbitrary normals") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 500; ++i) {
      Vec3 n = testing::random_unit(rng);
      if (i % 50 == 0) n = normalized(Vec3{1e-8, -2e-8, 1});  // near-vertical branch
      const Surface s = rectangle("s", testing::random_point(rng, -20, 20), n, 1, 1);
      const LocalFrame f = local_frame(s, testing::random_point(rng, -20, 20));
      CHECK(std::abs(dot(f.u, f.v)) + std::abs(dot(f.u, f.n)) + std::abs(dot(f.v, f.n)) <= 3e-9);
      CHECK(norm(cross(f.u, f.v) - f.n) <= 1e-9);
      CHECK(std::abs(s.plane_distance(f.origin)) <= 1e-9);
    }
  }
  SUBCASE("frame is reproducible for a fixed sensor") {
    const Surface s = rectangle("s", {1, 2, 3}, {0.3, -0.8, 0.2}, 1, 1);
    const LocalFrame a = local_frame(s, {7, -1, 2});
    const LocalFrame b = local_frame(s, {7, -1, 2});
    CHECK(a.u == b.u);
    CHECK(a.v == b.v);
    CHECK(a.origin == b.origin);
  }
}

TEST_CASE("azimuth angle") {
  const Surface floor = rectangle("f", {3, 3, 0}, {0, 0, 1}, 4, 4);
  const LocalFrame f = local_frame(floor, {0, 0, 2});
  CHECK(azimuth_angle(f.origin + f.u, f).angle == 0.0);
  CHECK(azimuth_angle(f.origin + f.v, f).angle == doctest::Approx(kPi / 2));
  CHECK(azimuth_angle(f.origin - f.u, f).angle == doctest::Approx(kPi));
  CHECK(azimuth_angle(f.origin - f.v, f).angle == doctest::Approx(3 * kPi / 2));
  const Azimuth degenerate = azimuth_angle(f.origin, f);
  CHECK(degenerate.degenerate);
  CHECK(degenerate.angle == 0.0);

  // Points just below the +u axis wrap to just under 2π, never to 2π itself.
  const Azimuth wrap = azimuth_angle(f.origin + f.u - f.v * 1e-300, f);
  CHECK(wrap.angle >= 0.0);
  CHECK(wrap.angle < 2 * kPi);
}

TEST_CASE("angles stay in range for candidate intersections") {
  std::mt19937_64 rng(5);
  int checked = 0;
  for (int i = 0; i < 3000; ++i) {
    const Surface tri = testing::random_triangle("t", rng, testing::random_point(rng, -2, 2), 1.0);
    const Vec3 origin = testing::random_point(rng, -8, 8);
    const Vec3 target = tri.centroid() + testing::random_unit(rng) * 0.2;
    const Vec3 dir = normalized(target - origin);
    const Ray ray(origin, dir, distance(origin, target));
    const Segment seg = segment_from_ray(ray, GeomParams{});
    if (!spherocylinder_candidate(seg, tri, dir, 0.05)) continue;
    const auto p = segment_surface_intersection(seg, tri);
    if (!p) continue;
    ++checked;
    const double zen = zenith_angle(dir, tri.normal());
    CHECK(zen >= 0.0);
    CHECK(zen <= kPi / 2);
    const Azimuth az = azimuth_angle(*p, local_frame(tri, origin));
    CHECK(az.angle >= 0.0);
    CHECK(az.angle < 2 * kPi);
    CHECK(std::abs(az.normal_offset) <= 1e-6);
  }
  CHECK(checked > 200);
}
