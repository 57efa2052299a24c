// Beam/surface geometry: reflection points, uncertainty segments, the
// spherocylinder candidate test, segment/polygon intersection and the
// per-surface tangent frame used for azimuth angles.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "beamlink/aabb.hpp"
#include "beamlink/vec3.hpp"

namespace beamlink {

/// Tolerance used when checking unit vectors.
inline constexpr double kUnitTolerance = 1e-9;
/// Maximum vertex distance from the fitted plane of a surface.
inline constexpr double kPlanarityTolerance = 1e-6;
/// Points within this distance of a polygon edge count as inside.
inline constexpr double kBoundaryTolerance = 1e-9;

/// Sensor origin, unit direction and measured range of a single pulse.
class Ray {
 public:
  /// Throws Error(invalid_argument) unless direction is unit and range is finite and >= 0.
  Ray(const Vec3& origin, const Vec3& direction, double range);

  const Vec3& origin() const { return origin_; }
  const Vec3& direction() const { return direction_; }
  double range() const { return range_; }

 private:
  Vec3 origin_;
  Vec3 direction_;
  double range_;
};

/// Closed segment `center + t * direction`, t in [-half_length, half_length].
class Segment {
 public:
  Segment(const Vec3& center, const Vec3& direction, double half_length);

  const Vec3& center() const { return center_; }
  const Vec3& direction() const { return direction_; }
  double half_length() const { return half_length_; }
  Vec3 start() const { return center_ - direction_ * half_length_; }
  Vec3 end() const { return center_ + direction_ * half_length_; }
  Aabb bounds() const;

 private:
  Vec3 center_;
  Vec3 direction_;
  double half_length_;
};

struct GeomParams {
  double epsilon = 1e-6;         // near-vertical normal / parallel threshold
  double assoc_radius = 0.05;    // spherocylinder radius, m
  double segment_length = 1.0;   // uncertainty segment length, m

  /// Throws Error(invalid_config) on non-positive or non-finite values.
  void validate() const;
};

/// Orthonormal tangent frame {u, v, n} with origin on the surface plane.
struct LocalFrame {
  Vec3 u;
  Vec3 v;
  Vec3 n;
  Vec3 origin;
};

/// Planar simple polygon with derived normal (right-hand rule over the vertex
/// order), centroid and triangulation. Immutable once created.
class Surface {
 public:
  static Surface create(std::string id, std::vector<Vec3> vertices, std::string object_id,
                        std::string class_name, std::optional<std::string> function = {},
                        std::optional<std::string> material = {});

  const std::string& id() const { return id_; }
  const std::vector<Vec3>& vertices() const { return vertices_; }
  const Vec3& normal() const { return normal_; }
  const Vec3& centroid() const { return centroid_; }
  const std::string& object_id() const { return object_id_; }
  const std::string& class_name() const { return class_name_; }
  const std::optional<std::string>& function() const { return function_; }
  const std::optional<std::string>& material() const { return material_; }
  const Aabb& bounds() const { return bounds_; }
  const std::vector<std::array<std::uint32_t, 3>>& triangles() const { return triangles_; }
  bool convex() const { return convex_; }
  double area() const { return area_; }

  /// Signed distance of p from the surface plane (positive on the normal side).
  double plane_distance(const Vec3& p) const { return dot(p - centroid_, normal_); }

  /// Whether the orthogonal projection of p onto the plane lies inside the
  /// polygon or within `tolerance` of its boundary.
  bool contains_projection(const Vec3& p, double tolerance = kBoundaryTolerance) const;

  /// Shortest distance from p to the polygon region.
  double distance_to_point(const Vec3& p) const;

  /// Shortest distance between the polygon region and the closed segment [a, b].
  double distance_to_segment(const Vec3& a, const Vec3& b) const;

 private:
  Surface() = default;

  std::array<double, 2> to_plane(const Vec3& p) const;

  std::string id_;
  std::vector<Vec3> vertices_;
  Vec3 normal_;
  Vec3 centroid_;
  std::string object_id_;
  std::string class_name_;
  std::optional<std::string> function_;
  std::optional<std::string> material_;
  Aabb bounds_;
  std::vector<std::array<std::uint32_t, 3>> triangles_;
  std::vector<std::array<double, 2>> planar_;  // vertices in the (u, v) plane basis
  Vec3 basis_u_;
  Vec3 basis_v_;
  bool convex_ = false;
  double area_ = 0.0;
};

// Primitive distance helpers, exposed for testing.
Vec3 closest_point_on_segment(const Vec3& p, const Vec3& a, const Vec3& b);
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);
double segment_segment_distance(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2);
double triangle_segment_distance(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& s0,
                                 const Vec3& s1);

/// Tangent basis (u, v) for a unit normal: the reference axis is x when the
/// normal is within `epsilon` of vertical, z otherwise; u is its Gram-Schmidt
/// projection onto the plane and v = n × u.
std::pair<Vec3, Vec3> tangent_basis(const Vec3& normal, double epsilon);

/// p_m = o + r·d
Vec3 reflection_point(const Ray& ray);

Segment segment_from_ray(const Ray& ray, const GeomParams& params);

/// True iff some point of the polygon lies within `radius` of the segment and
/// the surface faces the beam (−d·n ≥ 0).
bool spherocylinder_candidate(const Segment& segment, const Surface& surface, const Vec3& beam_dir,
                              double radius);

/// Intersection of the segment with the polygon. Segments with
/// |d·n| < epsilon are treated as parallel and never intersect.
std::optional<Vec3> segment_surface_intersection(const Segment& segment, const Surface& surface,
                                                 double epsilon = 1e-6);

/// (p_m − p_i)·d; positive when p_i lies before p_m along the beam.
double signed_distance(const Vec3& measured, const Vec3& intersection, const Vec3& direction);

/// arccos(−d·n), in [0, π/2].
double zenith_angle(const Vec3& direction, const Vec3& normal);

LocalFrame local_frame(const Surface& surface, const Vec3& sensor_origin, double epsilon = 1e-6);

struct Azimuth {
  double angle = 0.0;      // [0, 2π)
  double normal_offset = 0.0;  // n-component of the point in the frame
  bool degenerate = false;     // point coincides with the frame origin
};

Azimuth azimuth_angle(const Vec3& intersection, const LocalFrame& frame);

}  // namespace beamlink
