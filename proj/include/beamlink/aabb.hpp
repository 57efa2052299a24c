#pragma once

#include <limits>

#include "beamlink/vec3.hpp"

namespace beamlink {

/// Axis-aligned box. A default-constructed box is empty (min > max).
struct Aabb {
  Vec3 min{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           std::numeric_limits<double>::infinity()};
  Vec3 max{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity()};

  bool empty() const { return min.x > max.x || min.y > max.y || min.z > max.z; }

  void expand(const Vec3& p) {
    min = component_min(min, p);
    max = component_max(max, p);
  }

  void expand(const Aabb& b) {
    if (b.empty()) return;
    min = component_min(min, b.min);
    max = component_max(max, b.max);
  }

  Aabb inflated(double r) const {
    if (empty()) return *this;
    return {min - Vec3{r, r, r}, max + Vec3{r, r, r}};
  }

  bool contains(const Vec3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
           p.z <= max.z;
  }

  bool intersects(const Aabb& b) const {
    return !empty() && !b.empty() && min.x <= b.max.x && b.min.x <= max.x && min.y <= b.max.y &&
           b.min.y <= max.y && min.z <= b.max.z && b.min.z <= max.z;
  }

  Vec3 center() const { return (min + max) * 0.5; }

  int longest_axis() const {
    const Vec3 e = max - min;
    if (e.x >= e.y && e.x >= e.z) return 0;
    return e.y >= e.z ? 1 : 2;
  }

  /// Closed-segment vs box overlap (slab test).
  bool intersects_segment(const Vec3& a, const Vec3& b) const;

  friend bool operator==(const Aabb&, const Aabb&) = default;
};

inline bool Aabb::intersects_segment(const Vec3& a, const Vec3& b) const {
  if (empty()) return false;
  double t0 = 0.0;
  double t1 = 1.0;
  const Vec3 d = b - a;
  for (int axis = 0; axis < 3; ++axis) {
    const double lo = min[axis];
    const double hi = max[axis];
    const double o = a[axis];
    const double dir = d[axis];
    if (dir == 0.0) {
      if (o < lo || o > hi) return false;
      continue;
    }
    double ta = (lo - o) / dir;
    double tb = (hi - o) / dir;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace beamlink
