// Synthetic monostatic spinning LiDAR over a polygon scene.
//
// Each ray returns the nearest front-facing surface hit within range.
// Back faces do not block rays. Intensity follows a Lambertian target:
//
//   I = clamp(scale · ρ · cos θ · (1 m / r)^falloff + noise, 0, 255)
//
// where ρ is the material reflectance and θ the zenith angle. All sensor
// constants of the range equation are folded into `intensity_scale`.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "beamlink/beam.hpp"
#include "beamlink/geometry.hpp"
#include "beamlink/spatial_index.hpp"

namespace beamlink {

struct Material {
  std::string name;
  double reflectance = 0.5;  // diffuse, [0, 1]
};

struct Scene {
  std::vector<Surface> surfaces;
  std::map<std::string, Material> materials;
  double default_reflectance = 0.5;  // for surfaces without a material tag

  /// Throws Error(invalid_argument / unknown_reference) on bad reflectances or
  /// material tags that name no material.
  void validate() const;
  double reflectance_of(const Surface& surface) const;
};

struct SensorModel {
  std::string sensor_id = "vlp16";
  int channels = 16;
  double vertical_fov_min_deg = -15.0;
  double vertical_fov_max_deg = 15.0;
  double angular_step_h_deg = 0.2;
  double max_range = 100.0;
  double rotation_rate_hz = 10.0;
  double intensity_scale = 100.0;
  double range_falloff_exponent = 0.0;
  double noise_std = 0.0;        // intensity units
  double range_noise_std = 0.0;  // m
  double wavelength_nm = 903.0;  // metadata only

  void validate() const;
};

struct Pose {
  Vec3 position;
  Mat3 rotation;  // sensor to world
  std::int64_t timestamp_ns = 0;
};

/// Timed poses with linear interpolation of position and spherical linear
/// interpolation of orientation.
class Trajectory {
 public:
  Trajectory() = default;
  /// Throws Error(invalid_argument) unless timestamps strictly increase and
  /// every rotation is orthonormal with determinant +1.
  explicit Trajectory(std::vector<Pose> poses);

  const std::vector<Pose>& poses() const { return poses_; }
  bool empty() const { return poses_.empty(); }

  /// Pose at time t, clamped to the first/last pose outside the time span.
  Pose pose_at(std::int64_t t) const;

  /// Evenly spaced poses from the first to the last timestamp.
  Trajectory resample(std::int64_t period_ns) const;

 private:
  std::vector<Pose> poses_;
};

struct SimulatedBeam {
  Beam beam;
  std::string surface_id;  // ground truth
};

struct ScanOptions {
  std::string campaign_id = "sim";
  std::uint64_t seed = 0;
  unsigned workers = 0;  // 0 = hardware concurrency
  BeamId first_beam_id = 0;
};

/// One full revolution per trajectory pose. Beam ids increase in firing order
/// (pose, azimuth step, channel). Output is identical for any worker count.
std::vector<SimulatedBeam> simulate_scan(const Scene& scene, const SensorModel& sensor,
                                         const Trajectory& trajectory, const ScanOptions& options);

struct RayHit {
  std::size_t surface = 0;
  double distance = 0.0;
};

/// Nearest front-facing hit along the ray within max_range.
std::optional<RayHit> cast_ray(const SurfaceIndex& index, const Vec3& origin, const Vec3& dir,
                               double max_range);

struct Preset {
  Scene scene;
  Trajectory trajectory;
  SensorModel sensor;
};

/// Reflectances of the four calibration strips, in their left-to-right order.
inline constexpr double kSpectralonReflectances[] = {0.20, 0.90, 0.043, 0.53};

/// Four adjacent diffuse strips in the plane y = 0 facing −y, observed from
/// one pose per (distance, angle) pair; the angle is measured from the target
/// normal in the horizontal plane.
Preset spectralon_scene(const std::vector<double>& distances_m = {2.0, 5.0, 10.0},
                        const std::vector<double>& angles_deg = {0, 10, 20, 30, 40, 50, 60, 70, 80});

/// Street block: tiled ground, gable-roofed houses and road signs with mixed
/// orientations, scanned from poses along the road.
Preset city_scene();

/// Nine facing panels in three classes with reflectances 0.1 / 0.5 / 0.9,
/// passed by a sensor driving parallel to them.
Preset class_separation_scene();

}  // namespace beamlink
