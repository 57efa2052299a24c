#include "beamlink/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "beamlink/error.hpp"

namespace beamlink {

namespace {

using Point2 = std::array<double, 2>;

double cross2(const Point2& o, const Point2& a, const Point2& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

double point_segment_distance2(const Point2& p, const Point2& a, const Point2& b) {
  const double dx = b[0] - a[0];
  const double dy = b[1] - a[1];
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2, 0.0, 1.0);
  const double ex = a[0] + t * dx - p[0];
  const double ey = a[1] + t * dy - p[1];
  return std::sqrt(ex * ex + ey * ey);
}

bool on_segment2(const Point2& p, const Point2& a, const Point2& b) {
  return std::min(a[0], b[0]) <= p[0] && p[0] <= std::max(a[0], b[0]) &&
         std::min(a[1], b[1]) <= p[1] && p[1] <= std::max(a[1], b[1]);
}

// Closed segment intersection, including touching and collinear overlap.
bool segments_touch2(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const double d1 = cross2(c, d, a);
  const double d2 = cross2(c, d, b);
  const double d3 = cross2(a, b, c);
  const double d4 = cross2(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  if (d1 == 0 && on_segment2(a, c, d)) return true;
  if (d2 == 0 && on_segment2(b, c, d)) return true;
  if (d3 == 0 && on_segment2(c, a, b)) return true;
  if (d4 == 0 && on_segment2(d, a, b)) return true;
  return false;
}

bool point_in_triangle2(const Point2& p, const Point2& a, const Point2& b, const Point2& c) {
  return cross2(a, b, p) >= 0 && cross2(b, c, p) >= 0 && cross2(c, a, p) >= 0;
}

// Ear clipping over a counter-clockwise simple polygon.
std::vector<std::array<std::uint32_t, 3>> ear_clip(const std::vector<Point2>& pts) {
  std::vector<std::array<std::uint32_t, 3>> tris;
  std::vector<std::uint32_t> ring(pts.size());
  for (std::uint32_t i = 0; i < ring.size(); ++i) ring[i] = i;

  while (ring.size() > 3) {
    const std::size_t n = ring.size();
    bool clipped = false;
    std::size_t best = 0;
    double best_turn = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const auto ip = ring[(i + n - 1) % n];
      const auto ic = ring[i];
      const auto in = ring[(i + 1) % n];
      const double turn = cross2(pts[ip], pts[ic], pts[in]);
      if (turn > best_turn) {
        best_turn = turn;
        best = i;
      }
      if (turn <= 0) continue;
      bool blocked = false;
      for (std::size_t k = 0; k < n && !blocked; ++k) {
        const auto ik = ring[k];
        if (ik == ip || ik == ic || ik == in) continue;
        if (pts[ik] == pts[ip] || pts[ik] == pts[ic] || pts[ik] == pts[in]) continue;
        blocked = point_in_triangle2(pts[ik], pts[ip], pts[ic], pts[in]);
      }
      if (blocked) continue;
      tris.push_back({ip, ic, in});
      ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(i));
      clipped = true;
      break;
    }
    if (!clipped) {
      // Numerically stuck (near-collinear chains); clip the most convex corner.
      const std::size_t i = best;
      tris.push_back({ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]});
      ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(i));
    }
  }
  tris.push_back({ring[0], ring[1], ring[2]});
  return tris;
}

}  // namespace

Ray::Ray(const Vec3& origin, const Vec3& direction, double range)
    : origin_(origin), direction_(direction), range_(range) {
  if (!is_finite(origin)) throw Error(ErrorKind::invalid_argument, "ray origin is not finite");
  if (!is_unit(direction, kUnitTolerance))
    throw Error(ErrorKind::invalid_argument, "ray direction is not a unit vector");
  if (!std::isfinite(range) || range < 0.0)
    throw Error(ErrorKind::invalid_argument, "ray range must be finite and >= 0");
}

Segment::Segment(const Vec3& center, const Vec3& direction, double half_length)
    : center_(center), direction_(direction), half_length_(half_length) {
  if (!is_finite(center)) throw Error(ErrorKind::invalid_argument, "segment center is not finite");
  if (!is_unit(direction, kUnitTolerance))
    throw Error(ErrorKind::invalid_argument, "segment direction is not a unit vector");
  if (!(half_length > 0.0) || !std::isfinite(half_length))
    throw Error(ErrorKind::invalid_argument, "segment half length must be > 0");
}

Aabb Segment::bounds() const {
  Aabb box;
  box.expand(start());
  box.expand(end());
  return box;
}

void GeomParams::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(epsilon)) throw Error(ErrorKind::invalid_config, "epsilon must be > 0");
  if (!positive(assoc_radius)) throw Error(ErrorKind::invalid_config, "assoc_radius must be > 0");
  if (!positive(segment_length))
    throw Error(ErrorKind::invalid_config, "segment_length must be > 0");
}

std::pair<Vec3, Vec3> tangent_basis(const Vec3& normal, double epsilon) {
  const Vec3 reference = std::sqrt(normal.x * normal.x + normal.y * normal.y) < epsilon
                             ? Vec3{1, 0, 0}
                             : Vec3{0, 0, 1};
  const Vec3 u = normalized(reference - dot(reference, normal) * normal);
  return {u, cross(normal, u)};
}

Surface Surface::create(std::string id, std::vector<Vec3> vertices, std::string object_id,
                        std::string class_name, std::optional<std::string> function,
                        std::optional<std::string> material) {
  auto fail = [&id](const std::string& why) {
    return Error(ErrorKind::invalid_argument, "surface '" + id + "': " + why);
  };
  if (id.empty()) throw fail("empty id");
  if (vertices.size() < 3) throw fail("needs at least 3 vertices");
  for (const auto& p : vertices)
    if (!is_finite(p)) throw fail("non-finite vertex");

  Surface s;
  Vec3 sum;
  for (const auto& p : vertices) sum += p;
  s.centroid_ = sum / static_cast<double>(vertices.size());

  Vec3 area_vector;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const Vec3& a = vertices[i];
    const Vec3& b = vertices[(i + 1) % vertices.size()];
    area_vector += cross(a - s.centroid_, b - s.centroid_);
  }
  const double twice_area = norm(area_vector);
  if (!(twice_area > 1e-12)) throw fail("degenerate polygon (zero area)");
  s.normal_ = area_vector / twice_area;
  s.area_ = 0.5 * twice_area;

  for (const auto& p : vertices) {
    if (std::abs(dot(p - s.centroid_, s.normal_)) > kPlanarityTolerance)
      throw fail("vertices are not coplanar");
  }

  std::tie(s.basis_u_, s.basis_v_) = tangent_basis(s.normal_, 1e-6);
  s.vertices_ = std::move(vertices);
  s.planar_.reserve(s.vertices_.size());
  for (const auto& p : s.vertices_) s.planar_.push_back(s.to_plane(p));

  const std::size_t n = s.planar_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = s.planar_[i];
    const auto& b = s.planar_[(i + 1) % n];
    if (a == b) throw fail("repeated consecutive vertex");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      const auto& a = s.planar_[i];
      const auto& b = s.planar_[(i + 1) % n];
      const auto& c = s.planar_[j];
      const auto& d = s.planar_[(j + 1) % n];
      if (adjacent) {
        // Adjacent edges share one vertex; they may only overlap if they fold back.
        const Point2& shared = (j == i + 1) ? b : a;
        const Point2& p = (j == i + 1) ? a : b;
        const Point2& q = (j == i + 1) ? d : c;
        const double turn = cross2(shared, p, q);
        const double along =
            (p[0] - shared[0]) * (q[0] - shared[0]) + (p[1] - shared[1]) * (q[1] - shared[1]);
        if (turn == 0.0 && along > 0.0) throw fail("polygon folds back on itself");
        continue;
      }
      if (segments_touch2(a, b, c, d)) throw fail("polygon is self-intersecting");
    }
  }

  bool convex = true;
  for (std::size_t i = 0; i < n && convex; ++i)
    convex = cross2(s.planar_[i], s.planar_[(i + 1) % n], s.planar_[(i + 2) % n]) >= 0.0;
  s.convex_ = convex;
  if (convex) {
    for (std::uint32_t i = 1; i + 1 < n; ++i) s.triangles_.push_back({0, i, i + 1});
  } else {
    s.triangles_ = ear_clip(s.planar_);
  }

  for (const auto& p : s.vertices_) s.bounds_.expand(p);
  s.id_ = std::move(id);
  s.object_id_ = std::move(object_id);
  s.class_name_ = std::move(class_name);
  s.function_ = std::move(function);
  s.material_ = std::move(material);
  return s;
}

std::array<double, 2> Surface::to_plane(const Vec3& p) const {
  const Vec3 d = p - centroid_;
  return {dot(d, basis_u_), dot(d, basis_v_)};
}

bool Surface::contains_projection(const Vec3& p, double tolerance) const {
  const Point2 q = to_plane(p);
  const std::size_t n = planar_.size();
  if (tolerance > 0.0) {
    for (std::size_t i = 0; i < n; ++i)
      if (point_segment_distance2(q, planar_[i], planar_[(i + 1) % n]) <= tolerance) return true;
  }
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = planar_[i];
    const auto& b = planar_[j];
    if ((a[1] > q[1]) != (b[1] > q[1])) {
      const double x = (b[0] - a[0]) * (q[1] - a[1]) / (b[1] - a[1]) + a[0];
      if (q[0] < x) inside = !inside;
    }
  }
  return inside;
}

double Surface::distance_to_point(const Vec3& p) const {
  const double h = plane_distance(p);
  if (contains_projection(p, 0.0)) return std::abs(h);
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 c = closest_point_on_segment(p, vertices_[i], vertices_[(i + 1) % n]);
    best = std::min(best, distance(p, c));
  }
  return best;
}

double Surface::distance_to_segment(const Vec3& a, const Vec3& b) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : triangles_) {
    best = std::min(best,
                    triangle_segment_distance(vertices_[t[0]], vertices_[t[1]], vertices_[t[2]], a, b));
    if (best == 0.0) break;
  }
  return best;
}

Vec3 closest_point_on_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = squared_norm(ab);
  if (len2 == 0.0) return a;
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return a + ab * t;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = dot(ab, ap);
  const double d2 = dot(ac, ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp);
  const double d4 = dot(ac, bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));

  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp);
  const double d6 = dot(ac, cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));

  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

double segment_segment_distance(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2) {
  constexpr double kTiny = 1e-300;
  const Vec3 d1 = q1 - p1;
  const Vec3 d2 = q2 - p2;
  const Vec3 r = p1 - p2;
  const double a = dot(d1, d1);
  const double e = dot(d2, d2);
  const double f = dot(d2, r);
  double s = 0.0;
  double t = 0.0;
  if (a <= kTiny && e <= kTiny) {
    return norm(r);
  }
  if (a <= kTiny) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = dot(d1, r);
    if (e <= kTiny) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = dot(d1, d2);
      const double denom = a * e - b * b;
      s = denom > 0.0 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return distance(p1 + d1 * s, p2 + d2 * t);
}

double triangle_segment_distance(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& s0,
                                 const Vec3& s1) {
  double best = std::numeric_limits<double>::infinity();
  const Vec3 n = cross(b - a, c - a);
  const double h0 = dot(s0 - a, n);
  const double h1 = dot(s1 - a, n);
  if (((h0 <= 0.0 && h1 >= 0.0) || (h0 >= 0.0 && h1 <= 0.0)) && h0 != h1) {
    // The segment crosses the plane; the crossing point is a candidate.
    const Vec3 p = s0 + (s1 - s0) * (h0 / (h0 - h1));
    best = distance(p, closest_point_on_triangle(p, a, b, c));
    if (best <= 1e-15) return 0.0;
  }
  best = std::min(best, distance(s0, closest_point_on_triangle(s0, a, b, c)));
  best = std::min(best, distance(s1, closest_point_on_triangle(s1, a, b, c)));
  best = std::min(best, segment_segment_distance(s0, s1, a, b));
  best = std::min(best, segment_segment_distance(s0, s1, b, c));
  best = std::min(best, segment_segment_distance(s0, s1, c, a));
  return best;
}

Vec3 reflection_point(const Ray& ray) { return ray.origin() + ray.range() * ray.direction(); }

Segment segment_from_ray(const Ray& ray, const GeomParams& params) {
  return Segment(reflection_point(ray), ray.direction(), 0.5 * params.segment_length);
}

bool spherocylinder_candidate(const Segment& segment, const Surface& surface, const Vec3& beam_dir,
                              double radius) {
  if (-dot(beam_dir, surface.normal()) < 0.0) return false;
  if (!surface.bounds().inflated(radius).intersects(segment.bounds())) return false;
  return surface.distance_to_segment(segment.start(), segment.end()) <= radius;
}

std::optional<Vec3> segment_surface_intersection(const Segment& segment, const Surface& surface,
                                                 double epsilon) {
  const Vec3& d = segment.direction();
  const Vec3& n = surface.normal();
  const double denom = dot(d, n);
  if (std::abs(denom) < epsilon) return std::nullopt;
  const double t = dot(surface.centroid() - segment.center(), n) / denom;
  if (!(std::abs(t) <= segment.half_length())) return std::nullopt;
  Vec3 p = segment.center() + d * t;
  p -= n * surface.plane_distance(p);
  if (!surface.contains_projection(p)) return std::nullopt;
  return p;
}

double signed_distance(const Vec3& measured, const Vec3& intersection, const Vec3& direction) {
  return dot(measured - intersection, direction);
}

double zenith_angle(const Vec3& direction, const Vec3& normal) {
  const double c = std::clamp(-dot(direction, normal), -1.0, 1.0);
  return std::min(std::acos(c), std::numbers::pi / 2);
}

LocalFrame local_frame(const Surface& surface, const Vec3& sensor_origin, double epsilon) {
  const Vec3& n = surface.normal();
  const auto [u, v] = tangent_basis(n, epsilon);
  const double offset = dot(sensor_origin - surface.centroid(), n);
  return {u, v, n, sensor_origin - n * offset};
}

Azimuth azimuth_angle(const Vec3& intersection, const LocalFrame& frame) {
  const Vec3 rel = intersection - frame.origin;
  const double pu = dot(frame.u, rel);
  const double pv = dot(frame.v, rel);
  Azimuth out;
  out.normal_offset = dot(frame.n, rel);
  if (std::hypot(pu, pv) < 1e-12) {
    out.degenerate = true;
    return out;
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  out.angle = std::fmod(two_pi + std::atan2(pv, pu), two_pi);
  return out;
}

}  // namespace beamlink
