#include "beamlink/scan_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>

#include "beamlink/error.hpp"

namespace beamlink {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Quat {
  double w, x, y, z;
};

Quat to_quat(const Mat3& r) {
  const double trace = r(0, 0) + r(1, 1) + r(2, 2);
  Quat q{};
  if (trace > 0) {
    const double s = 0.5 / std::sqrt(trace + 1.0);
    q = {0.25 / s, (r(2, 1) - r(1, 2)) * s, (r(0, 2) - r(2, 0)) * s, (r(1, 0) - r(0, 1)) * s};
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2));
    q = {(r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s};
  } else if (r(1, 1) > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2));
    q = {(r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1));
    q = {(r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s};
  }
  return q;
}

Mat3 to_matrix(const Quat& q) {
  const double n = std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
  const double w = q.w / n, x = q.x / n, y = q.y / n, z = q.z / n;
  return Mat3{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
               2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
               2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}};
}

Quat slerp(Quat a, Quat b, double t) {
  double c = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
  if (c < 0) {
    b = {-b.w, -b.x, -b.y, -b.z};
    c = -c;
  }
  double wa = 1.0 - t;
  double wb = t;
  if (c < 0.9995) {
    const double theta = std::acos(c);
    const double s = std::sin(theta);
    wa = std::sin((1.0 - t) * theta) / s;
    wb = std::sin(t * theta) / s;
  }
  return {wa * a.w + wb * b.w, wa * a.x + wb * b.x, wa * a.y + wb * b.y, wa * a.z + wb * b.z};
}

Surface panel(const std::string& id, const Vec3& center, const Vec3& normal, double half_w,
              double half_h, const std::string& object, const std::string& cls,
              const std::string& material, std::optional<std::string> function = {}) {
  const Vec3 n = normalized(normal);
  const auto [u, v] = tangent_basis(n, 1e-6);
  return Surface::create(id,
                         {center - u * half_w - v * half_h, center + u * half_w - v * half_h,
                          center + u * half_w + v * half_h, center - u * half_w + v * half_h},
                         object, cls, std::move(function), material);
}

Surface ground_tile(const std::string& id, double x0, double x1, double y0, double y1,
                    const std::string& cls, const std::string& material) {
  return Surface::create(id, {{x0, y0, 0}, {x1, y0, 0}, {x1, y1, 0}, {x0, y1, 0}}, id, cls,
                         std::nullopt, material);
}

// Pentagonal prism with the ridge along x; all face normals point outward.
void add_house(std::vector<Surface>& out, const std::string& name, double x0, double x1, double y0,
               double y1, double eave, double ridge) {
  const double ym = 0.5 * (y0 + y1);
  auto face = [&](const std::string& part, std::vector<Vec3> v, const std::string& cls,
                  const std::string& material) {
    out.push_back(Surface::create(name + "/" + part, std::move(v), name, cls, std::nullopt, material));
  };
  face("wall_s", {{x0, y0, 0}, {x1, y0, 0}, {x1, y0, eave}, {x0, y0, eave}}, "WallSurface", "plaster");
  face("wall_n", {{x1, y1, 0}, {x0, y1, 0}, {x0, y1, eave}, {x1, y1, eave}}, "WallSurface", "plaster");
  face("gable_w", {{x0, y1, 0}, {x0, y0, 0}, {x0, y0, eave}, {x0, ym, ridge}, {x0, y1, eave}},
       "WallSurface", "brick");
  face("gable_e", {{x1, y0, 0}, {x1, y1, 0}, {x1, y1, eave}, {x1, ym, ridge}, {x1, y0, eave}},
       "WallSurface", "brick");
  face("roof_s", {{x0, y0, eave}, {x1, y0, eave}, {x1, ym, ridge}, {x0, ym, ridge}}, "RoofSurface",
       "roof_tile");
  face("roof_n", {{x1, y1, eave}, {x0, y1, eave}, {x0, ym, ridge}, {x1, ym, ridge}}, "RoofSurface",
       "roof_tile");
}

}  // namespace

void Scene::validate() const {
  for (const auto& [name, m] : materials) {
    if (!(m.reflectance >= 0.0 && m.reflectance <= 1.0))
      throw Error(ErrorKind::invalid_argument, "material '" + name + "' reflectance outside [0, 1]");
  }
  if (!(default_reflectance >= 0.0 && default_reflectance <= 1.0))
    throw Error(ErrorKind::invalid_argument, "default reflectance outside [0, 1]");
  for (const auto& s : surfaces) {
    if (s.material() && !materials.count(*s.material()))
      throw Error(ErrorKind::unknown_reference,
                  "surface '" + s.id() + "' references unknown material '" + *s.material() + "'");
  }
}

double Scene::reflectance_of(const Surface& surface) const {
  if (!surface.material()) return default_reflectance;
  return materials.at(*surface.material()).reflectance;
}

void SensorModel::validate() const {
  auto bad = [](const std::string& why) { return Error(ErrorKind::invalid_config, "sensor: " + why); };
  if (sensor_id.empty()) throw bad("empty sensor id");
  if (channels < 1) throw bad("channels must be >= 1");
  if (!(vertical_fov_min_deg < vertical_fov_max_deg) && channels > 1)
    throw bad("vertical fov min must be < max");
  if (!(angular_step_h_deg > 0.0 && angular_step_h_deg <= 360.0))
    throw bad("angular step must be in (0, 360]");
  if (!(max_range > 0.0)) throw bad("max range must be > 0");
  if (!(rotation_rate_hz > 0.0)) throw bad("rotation rate must be > 0");
  if (!(intensity_scale > 0.0)) throw bad("intensity scale must be > 0");
  if (!(range_falloff_exponent >= 0.0)) throw bad("falloff exponent must be >= 0");
  if (!(noise_std >= 0.0) || !(range_noise_std >= 0.0)) throw bad("noise must be >= 0");
}

Trajectory::Trajectory(std::vector<Pose> poses) : poses_(std::move(poses)) {
  for (std::size_t i = 0; i < poses_.size(); ++i) {
    const Pose& p = poses_[i];
    if (!is_finite(p.position)) throw Error(ErrorKind::invalid_argument, "pose position not finite");
    if (orthonormality_error(p.rotation) > 1e-9 || std::abs(p.rotation.determinant() - 1.0) > 1e-9)
      throw Error(ErrorKind::invalid_argument, "pose rotation is not a proper rotation");
    if (i > 0 && !(p.timestamp_ns > poses_[i - 1].timestamp_ns))
      throw Error(ErrorKind::invalid_argument, "pose timestamps must strictly increase");
  }
}

Pose Trajectory::pose_at(std::int64_t t) const {
  if (poses_.empty()) throw Error(ErrorKind::invalid_argument, "empty trajectory");
  if (t <= poses_.front().timestamp_ns) return poses_.front();
  if (t >= poses_.back().timestamp_ns) return poses_.back();
  const auto it = std::upper_bound(poses_.begin(), poses_.end(), t,
                                   [](std::int64_t v, const Pose& p) { return v < p.timestamp_ns; });
  const Pose& b = *it;
  const Pose& a = *(it - 1);
  const double f = static_cast<double>(t - a.timestamp_ns) /
                   static_cast<double>(b.timestamp_ns - a.timestamp_ns);
  Pose out;
  out.timestamp_ns = t;
  out.position = a.position + (b.position - a.position) * f;
  out.rotation = a.rotation == b.rotation ? a.rotation
                                          : to_matrix(slerp(to_quat(a.rotation), to_quat(b.rotation), f));
  return out;
}

Trajectory Trajectory::resample(std::int64_t period_ns) const {
  if (period_ns <= 0) throw Error(ErrorKind::invalid_argument, "resample period must be > 0");
  if (poses_.empty()) return {};
  std::vector<Pose> out;
  for (std::int64_t t = poses_.front().timestamp_ns; t <= poses_.back().timestamp_ns; t += period_ns)
    out.push_back(pose_at(t));
  return Trajectory(std::move(out));
}

std::optional<RayHit> cast_ray(const SurfaceIndex& index, const Vec3& origin, const Vec3& dir,
                               double max_range) {
  std::optional<RayHit> best;
  index.visit_segment(origin, origin + dir * max_range, 0.0, [&](std::uint32_t i) {
    const Surface& s = index.surface(i);
    const double denom = dot(dir, s.normal());
    if (!(denom < 0.0)) return;  // back face or parallel
    const double t = dot(s.centroid() - origin, s.normal()) / denom;
    if (!(t > 0.0 && t <= max_range)) return;
    if (best && t > best->distance) return;
    if (best && t == best->distance && index.surface(best->surface).id() < s.id()) return;
    if (!s.contains_projection(origin + dir * t)) return;
    best = RayHit{i, t};
  });
  return best;
}

std::vector<SimulatedBeam> simulate_scan(const Scene& scene, const SensorModel& sensor,
                                         const Trajectory& trajectory, const ScanOptions& options) {
  scene.validate();
  sensor.validate();
  const SurfaceIndex index = SurfaceIndex::build(scene.surfaces);

  const auto steps = static_cast<int>(std::lround(360.0 / sensor.angular_step_h_deg));
  const double revolution_ns = 1e9 / sensor.rotation_rate_hz;

  std::vector<Vec3> local_dirs;  // azimuth-major, channel-minor
  local_dirs.reserve(static_cast<std::size_t>(steps) * sensor.channels);
  for (int k = 0; k < steps; ++k) {
    const double az = k * sensor.angular_step_h_deg * kDeg;
    for (int c = 0; c < sensor.channels; ++c) {
      const double el =
          sensor.channels == 1
              ? sensor.vertical_fov_min_deg * kDeg
              : (sensor.vertical_fov_min_deg +
                 c * (sensor.vertical_fov_max_deg - sensor.vertical_fov_min_deg) / (sensor.channels - 1)) *
                    kDeg;
      local_dirs.push_back({std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)});
    }
  }

  const auto& poses = trajectory.poses();
  std::vector<std::vector<SimulatedBeam>> per_pose(poses.size());

  auto scan_pose = [&](std::size_t pi) {
    const Pose& pose = poses[pi];
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed),
                      static_cast<std::uint32_t>(options.seed >> 32),
                      static_cast<std::uint32_t>(pi), static_cast<std::uint32_t>(pi >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto& out = per_pose[pi];
    for (std::size_t r = 0; r < local_dirs.size(); ++r) {
      const Vec3 dir = normalized(pose.rotation * local_dirs[r]);
      const auto hit = cast_ray(index, pose.position, dir, sensor.max_range);
      if (!hit) continue;
      const Surface& s = index.surface(hit->surface);
      const double true_range = hit->distance;
      double range = true_range;
      if (sensor.range_noise_std > 0.0) range += sensor.range_noise_std * gauss(rng);
      const double cos_theta = std::clamp(-dot(dir, s.normal()), 0.0, 1.0);
      double intensity = sensor.intensity_scale * scene.reflectance_of(s) * cos_theta *
                         std::pow(1.0 / true_range, sensor.range_falloff_exponent);
      if (sensor.noise_std > 0.0) intensity += sensor.noise_std * gauss(rng);
      if (!(range > 0.0)) continue;

      SimulatedBeam sb;
      sb.beam.origin = pose.position;
      sb.beam.direction = dir;
      sb.beam.range = range;
      sb.beam.intensity = static_cast<float>(std::clamp(intensity, 0.0, 255.0));
      const auto step = static_cast<double>(r / static_cast<std::size_t>(sensor.channels));
      sb.beam.timestamp_ns =
          pose.timestamp_ns + static_cast<std::int64_t>(std::llround(step / steps * revolution_ns));
      sb.beam.sensor_id = sensor.sensor_id;
      sb.beam.campaign_id = options.campaign_id;
      sb.surface_id = s.id();
      out.push_back(std::move(sb));
    }
  };

  unsigned workers = options.workers ? options.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, poses.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < poses.size(); ++i) scan_pose(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < poses.size(); i = next++) scan_pose(i);
      });
    for (auto& t : pool) t.join();
  }

  std::vector<SimulatedBeam> beams;
  std::size_t total = 0;
  for (const auto& p : per_pose) total += p.size();
  beams.reserve(total);
  BeamId id = options.first_beam_id;
  for (auto& p : per_pose) {
    for (auto& b : p) {
      b.beam.beam_id = id++;
      beams.push_back(std::move(b));
    }
  }
  return beams;
}

Preset spectralon_scene(const std::vector<double>& distances_m, const std::vector<double>& angles_deg) {
  Preset p;
  const double width = 0.25;
  const double half_height = 0.6;
  static const char* names[] = {"spectralon_20", "spectralon_90", "spectralon_04", "spectralon_53"};
  for (int i = 0; i < 4; ++i) {
    const double x0 = (i - 2) * width;
    const std::string name = names[i];
    p.scene.materials[name] = Material{name, kSpectralonReflectances[i]};
    // Facing −y: counter-clockwise as seen from the −y side.
    p.scene.surfaces.push_back(Surface::create(
        "strip_" + std::to_string(i),
        {{x0, 0, -half_height}, {x0 + width, 0, -half_height}, {x0 + width, 0, half_height},
         {x0, 0, half_height}},
        name, "CalibrationTarget", std::nullopt, name));
  }

  std::vector<Pose> poses;
  std::int64_t t = 0;
  for (const double d : distances_m) {
    for (const double a : angles_deg) {
      if (!(d > 0.0) || !(a >= 0.0 && a < 90.0))
        throw Error(ErrorKind::invalid_argument, "spectralon sweep needs d > 0 and 0 <= angle < 90");
      Pose pose;
      pose.position = {d * std::sin(a * kDeg), -d * std::cos(a * kDeg), 0.0};
      pose.timestamp_ns = t;
      t += 1'000'000'000;
      poses.push_back(pose);
    }
  }
  p.trajectory = Trajectory(std::move(poses));
  p.sensor.sensor_id = "lab_vlp16";
  return p;
}

Preset city_scene() {
  Preset p;
  auto& m = p.scene.materials;
  m["asphalt"] = {"asphalt", 0.12};
  m["pavement"] = {"pavement", 0.30};
  m["plaster"] = {"plaster", 0.65};
  m["brick"] = {"brick", 0.40};
  m["roof_tile"] = {"roof_tile", 0.25};
  m["sign_sheeting"] = {"sign_sheeting", 0.95};

  auto& s = p.scene.surfaces;
  const double cell = 10.0;
  // Rows in y: south houses, south yard, road, north yard, north houses.
  const double rows[][2] = {{-24, -14}, {-14, -4}, {-4, 4}, {4, 14}, {14, 24}};
  for (int r = 0; r < 5; ++r) {
    for (int i = 0; i < 8; ++i) {
      const double x0 = -40 + i * cell;
      const double x1 = x0 + cell;
      const double y0 = rows[r][0];
      const double y1 = rows[r][1];
      const bool house = (r == 0 && i % 2 == 0) || (r == 4 && i % 2 == 1);
      const std::string tag = std::to_string(r) + "_" + std::to_string(i);
      if (house) {
        add_house(s, "house_" + tag, x0, x1, y0, y1, 6.0 + 0.5 * (i % 3), 9.5 + 0.5 * (i % 2));
      } else if (r == 2) {
        s.push_back(ground_tile("road_" + tag, x0, x1, y0, y1, "TrafficArea", "asphalt"));
      } else {
        s.push_back(ground_tile("yard_" + tag, x0, x1, y0, y1, "AuxiliaryTrafficArea", "pavement"));
      }
    }
  }
  for (int k = 0; k < 6; ++k) {
    const bool north = k % 2 == 0;
    const double yaw = (k - 2.5) * 8.0 * kDeg;
    const Vec3 facing = north ? Vec3{std::sin(yaw), -std::cos(yaw), 0} : Vec3{std::sin(yaw), std::cos(yaw), 0};
    const Vec3 center{-27.3 + k * 11.1, north ? 6.3 : -6.3, 2.2};
    const std::string id = "sign_" + std::to_string(k);
    s.push_back(panel(id, center, facing, 0.4, 0.5, id, "CityFurniture", "sign_sheeting",
                      std::string("traffic_sign")));
  }

  std::vector<Pose> poses;
  std::int64_t t = 0;
  for (double x = -30.0; x <= 30.0; x += 5.0) {
    Pose pose;
    pose.position = {x + 0.137, -1.23, 2.05};
    pose.rotation = Mat3::rotation_z(0.01 * x);
    pose.timestamp_ns = t;
    t += 100'000'000;
    poses.push_back(pose);
  }
  p.trajectory = Trajectory(std::move(poses));
  p.sensor.sensor_id = "roof_center";
  return p;
}

Preset class_separation_scene() {
  Preset p;
  auto& m = p.scene.materials;
  m["bark"] = {"bark", 0.1};
  m["plaster"] = {"plaster", 0.5};
  m["retroreflector"] = {"retroreflector", 0.9};
  const char* classes[] = {"SolitaryVegetationObject", "WallSurface", "CityFurniture"};
  const char* materials[] = {"bark", "plaster", "retroreflector"};
  for (int k = 0; k < 9; ++k) {
    const int c = k % 3;
    const std::string id = "panel_" + std::to_string(k);
    const Vec3 center{-12.0 + 3.0 * k + 0.13 * k, 4.0, 1.5};
    p.scene.surfaces.push_back(
        panel(id, center, {0, -1, 0}, 1.0 - 0.03 * k, 1.0, id, classes[c], materials[c]));
  }
  std::vector<Pose> poses;
  std::int64_t t = 0;
  for (int i = 0; i <= 60; ++i) {
    Pose pose;
    pose.position = {-30.0 + i, 0.0, 1.5};
    pose.timestamp_ns = t;
    t += 100'000'000;
    poses.push_back(pose);
  }
  p.trajectory = Trajectory(std::move(poses));
  p.sensor.sensor_id = "front_center";
  p.sensor.angular_step_h_deg = 0.4;
  return p;
}

}  // namespace beamlink
