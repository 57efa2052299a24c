#include "beamlink/registration.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "beamlink/error.hpp"
#include "beamlink/text.hpp"

namespace beamlink {

void PointCloud::validate() const {
  if (!ids.empty() && ids.size() != points.size())
    throw Error(ErrorKind::invalid_argument, "point cloud has " + std::to_string(ids.size()) + " ids for " +
                                                 std::to_string(points.size()) + " points");
  for (std::size_t i = 0; i < points.size(); ++i)
    if (!is_finite(points[i]))
      throw Error(ErrorKind::invalid_argument, "point " + std::to_string(i) + " is not finite");
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  return {rotation * other.rotation, rotation * other.translation + translation};
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation.transposed();
  return {rt, rt * translation * -1.0};
}

double RigidTransform::angle() const {
  const double c = (rotation(0, 0) + rotation(1, 1) + rotation(2, 2) - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

void RigidTransform::validate() const {
  if (orthonormality_error(rotation) > 1e-9 || std::abs(rotation.determinant() - 1.0) > 1e-9)
    throw Error(ErrorKind::invalid_argument, "transform rotation is not orthonormal with det +1");
  if (!is_finite(translation)) throw Error(ErrorKind::invalid_argument, "transform translation is not finite");
}

KdTree::KdTree(const std::vector<Vec3>& points) : points_(points), order_(points.size()) {
  std::iota(order_.begin(), order_.end(), 0);
  build(0, order_.size(), 0);
}

void KdTree::build(std::size_t lo, std::size_t hi, int depth) {
  if (hi - lo <= 1) return;
  const int axis = depth % 3;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t a, std::size_t b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  build(lo, mid, depth + 1);
  build(mid + 1, hi, depth + 1);
}

void KdTree::search(std::size_t lo, std::size_t hi, int depth, const Vec3& q, std::size_t& best,
                    double& best_d2) const {
  if (lo >= hi) return;
  const std::size_t mid = lo + (hi - lo) / 2;
  const std::size_t idx = order_[mid];
  const double d2 = squared_norm(points_[idx] - q);
  if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
    best = idx;
    best_d2 = d2;
  }
  const int axis = depth % 3;
  const double diff = q[axis] - points_[idx][axis];
  const bool left_first = diff < 0;
  if (left_first) {
    search(lo, mid, depth + 1, q, best, best_d2);
    if (diff * diff <= best_d2) search(mid + 1, hi, depth + 1, q, best, best_d2);
  } else {
    search(mid + 1, hi, depth + 1, q, best, best_d2);
    if (diff * diff <= best_d2) search(lo, mid, depth + 1, q, best, best_d2);
  }
}

std::pair<std::size_t, double> KdTree::nearest(const Vec3& q) const {
  if (points_.empty()) throw Error(ErrorKind::invalid_argument, "nearest-neighbour query on an empty tree");
  std::size_t best = points_.size();
  double best_d2 = std::numeric_limits<double>::infinity();
  search(0, order_.size(), 0, q, best, best_d2);
  return {best, best_d2};
}

namespace {

Eigen::Vector3d to_eigen(const Vec3& v) { return {v.x, v.y, v.z}; }

// Ratio of the second to the first singular value of the centered points.
double spread_ratio(const std::vector<Vec3>& pts) {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : pts) mean += to_eigen(p);
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector3d d = to_eigen(p) - mean;
    cov += d * d.transpose();
  }
  const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::Matrix3d>(cov).singularValues();
  if (!(sv(0) > 0.0)) return 0.0;
  return std::sqrt(sv(1) / sv(0));
}

constexpr double kCollinearRatio = 1e-6;

struct Correspondences {
  std::vector<Vec3> from, to;
  double sum_sq = 0.0;
};

Correspondences correspond(const std::vector<Vec3>& source, const KdTree& tree, const std::vector<Vec3>& target,
                           const RigidTransform& t, double threshold, unsigned workers) {
  const std::size_t n = source.size();
  std::vector<Vec3> moved(n);
  std::vector<std::size_t> match(n);
  std::vector<double> d2(n);
  auto run = [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      moved[i] = t.apply(source[i]);
      std::tie(match[i], d2[i]) = tree.nearest(moved[i]);
    }
  };
  workers = static_cast<unsigned>(std::clamp<std::size_t>(n / 2048, 1, std::max(1u, workers)));
  if (workers == 1) {
    run(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t per = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back(run, std::min(n, w * per), std::min(n, (w + 1) * per));
    for (auto& th : pool) th.join();
  }
  Correspondences c;
  const double t2 = threshold * threshold;
  for (std::size_t i = 0; i < n; ++i) {
    if (d2[i] > t2) continue;
    c.from.push_back(moved[i]);
    c.to.push_back(target[match[i]]);
    c.sum_sq += d2[i];
  }
  return c;
}

void check_params(const RegistrationParams& p) {
  if (p.max_iterations < 1) throw Error(ErrorKind::invalid_argument, "max_iterations must be >= 1");
  if (!(p.inlier_threshold > 0.0)) throw Error(ErrorKind::invalid_argument, "inlier threshold must be > 0");
  if (!(p.convergence_tol >= 0.0)) throw Error(ErrorKind::invalid_argument, "convergence tolerance must be >= 0");
}

}  // namespace

RigidTransform solve_rigid(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  if (from.size() != to.size()) throw Error(ErrorKind::invalid_argument, "point pair lists differ in length");
  if (from.size() < 3 || spread_ratio(from) < kCollinearRatio)
    throw Error(ErrorKind::singular, "rigid solve needs at least three non-collinear points");

  Eigen::Vector3d cf = Eigen::Vector3d::Zero(), ct = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) {
    cf += to_eigen(from[i]);
    ct += to_eigen(to[i]);
  }
  cf /= static_cast<double>(from.size());
  ct /= static_cast<double>(to.size());
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) h += (to_eigen(from[i]) - cf) * (to_eigen(to[i]) - ct).transpose();

  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) d(2, 2) = -1.0;
  const Eigen::Matrix3d r = svd.matrixV() * d * svd.matrixU().transpose();
  const Eigen::Vector3d t = ct - r * cf;

  RigidTransform out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.rotation(i, j) = r(i, j);
  out.translation = {t(0), t(1), t(2)};
  return out;
}

RegistrationResult icp_point_to_point(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                                      const RegistrationParams& params) {
  check_params(params);
  if (source.empty() || target.empty()) throw Error(ErrorKind::invalid_argument, "ICP needs non-empty clouds");
  source.validate();
  target.validate();
  init.validate();
  if (source.size() < 3 || spread_ratio(source.points) < kCollinearRatio)
    throw Error(ErrorKind::singular, "source points are collinear or coincident");

  const KdTree tree(target.points);
  const double n_target = static_cast<double>(target.size());
  RegistrationResult res;
  res.transform = init;

  auto score = [&](const Correspondences& c) {
    res.fitness = std::min(1.0, static_cast<double>(c.from.size()) / n_target);
    res.rmse = c.from.empty() ? 0.0 : std::sqrt(c.sum_sq / static_cast<double>(c.from.size()));
    res.rmse_history.push_back(res.rmse);
  };

  Correspondences c =
      correspond(source.points, tree, target.points, res.transform, params.inlier_threshold, params.workers);
  score(c);
  for (int it = 1; it <= params.max_iterations; ++it) {
    if (c.from.empty()) throw Error(ErrorKind::singular, "no correspondences within the inlier threshold");
    // Zero residual on every point: the current transform is already optimal.
    const RigidTransform step =
        c.sum_sq == 0.0 && c.from.size() == source.size() ? RigidTransform{} : solve_rigid(c.from, c.to);
    res.transform = step.compose(res.transform);
    const double previous = res.rmse;
    c = correspond(source.points, tree, target.points, res.transform, params.inlier_threshold, params.workers);
    score(c);
    res.iterations = it;
    if (std::abs(previous - res.rmse) < params.convergence_tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

AlignmentScore score_alignment(const PointCloud& source, const PointCloud& target, const RigidTransform& transform,
                               double inlier_threshold) {
  if (target.empty()) throw Error(ErrorKind::invalid_argument, "cannot score against an empty target");
  if (!(inlier_threshold > 0.0)) throw Error(ErrorKind::invalid_argument, "inlier threshold must be > 0");
  const KdTree tree(target.points);
  const Correspondences c = correspond(source.points, tree, target.points, transform, inlier_threshold, 1);
  AlignmentScore s;
  s.inliers = c.from.size();
  s.fitness = std::min(1.0, static_cast<double>(s.inliers) / static_cast<double>(target.size()));
  if (s.inliers) s.rmse = std::sqrt(c.sum_sq / static_cast<double>(s.inliers));
  return s;
}

PointCloud read_xyz(std::istream& in) {
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() != 3)
      throw Error(ErrorKind::corrupt, "xyz line " + std::to_string(line_no) + ": expected 3 values");
    const std::string what = "coordinate on line " + std::to_string(line_no);
    cloud.points.push_back(
        {text::parse_double(tok[0], what), text::parse_double(tok[1], what), text::parse_double(tok[2], what)});
  }
  return cloud;
}

void write_xyz(std::ostream& out, const PointCloud& cloud) {
  for (const auto& p : cloud.points)
    out << text::format_double(p.x) << ' ' << text::format_double(p.y) << ' ' << text::format_double(p.z) << '\n';
}

}  // namespace beamlink
