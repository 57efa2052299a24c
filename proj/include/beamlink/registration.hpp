// Point-to-point ICP and alignment scoring.
#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <vector>

#include "beamlink/vec3.hpp"

namespace beamlink {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<std::uint64_t> ids;  // empty, or one per point

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  /// Throws Error(invalid_argument) on non-finite coordinates or an id count mismatch.
  void validate() const;
};

struct RigidTransform {
  Mat3 rotation;
  Vec3 translation;

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  /// (this ∘ other)(p) = this(other(p))
  RigidTransform compose(const RigidTransform& other) const;
  RigidTransform inverse() const;
  /// Rotation angle in radians.
  double angle() const;
  /// Throws Error(invalid_argument) unless RᵀR = I and det R = 1 to 1e-9.
  void validate() const;
};

/// Static 3-D k-d tree for nearest-neighbour queries.
class KdTree {
 public:
  explicit KdTree(const std::vector<Vec3>& points);

  /// Index of the nearest point and its squared distance. Ties go to the
  /// lower index. The tree must be non-empty.
  std::pair<std::size_t, double> nearest(const Vec3& q) const;
  std::size_t size() const { return points_.size(); }

 private:
  void build(std::size_t lo, std::size_t hi, int depth);
  void search(std::size_t lo, std::size_t hi, int depth, const Vec3& q, std::size_t& best, double& best_d2) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;  // implicit tree: median of each range is the node
};

struct RegistrationParams {
  int max_iterations = 50;
  double inlier_threshold = 1.0;  // m
  double convergence_tol = 1e-9;  // change in rmse, m
  unsigned workers = 1;
};

struct RegistrationResult {
  RigidTransform transform;
  double fitness = 0.0;  // inliers / target points, capped at 1
  double rmse = 0.0;     // over inlier pairs, m
  int iterations = 0;
  bool converged = false;
  std::vector<double> rmse_history;  // initial alignment first, then after each iteration
};

/// Source points are matched to their nearest target point; pairs within the
/// inlier threshold drive a reflection-corrected SVD solve. Throws
/// Error(invalid_argument) for empty clouds or bad parameters and
/// Error(singular) for collinear/coincident source points or when no pair is
/// within the threshold.
RegistrationResult icp_point_to_point(const PointCloud& source, const PointCloud& target,
                                      const RigidTransform& init = {}, const RegistrationParams& params = {});

struct AlignmentScore {
  double fitness = 0.0;
  std::optional<double> rmse;  // absent without inliers
  std::size_t inliers = 0;
};

/// Throws Error(invalid_argument) for an empty target.
AlignmentScore score_alignment(const PointCloud& source, const PointCloud& target,
                               const RigidTransform& transform, double inlier_threshold);

/// Least-squares rigid transform mapping `from` onto `to` (paired by index).
/// Throws Error(singular) for fewer than three non-collinear points.
RigidTransform solve_rigid(const std::vector<Vec3>& from, const std::vector<Vec3>& to);

/// Whitespace-separated x y z per line; '#' starts a comment. Throws Error(corrupt).
PointCloud read_xyz(std::istream& in);
void write_xyz(std::ostream& out, const PointCloud& cloud);

}  // namespace beamlink
