#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "beamlink/vec3.hpp"

namespace beamlink {

using BeamId = std::uint64_t;

/// One emitted and returned LiDAR pulse, in world coordinates.
struct Beam {
  BeamId beam_id = 0;
  Vec3 origin;
  Vec3 direction;             // unit
  double range = 0.0;         // m
  float intensity = 0.0f;     // raw scale, [0, 255]
  std::int64_t timestamp_ns = 0;
  std::string sensor_id;
  std::string campaign_id;

  friend bool operator==(const Beam&, const Beam&) = default;
};

/// Reason a beam is unusable for association, or nullopt if it is valid.
/// Requires a finite origin, a unit direction, 0 < range < inf, and
/// intensity within [0, 255].
std::optional<std::string> beam_defect(const Beam& beam);

/// Per-beam attributes copied from the confirmed (rank 1) association.
struct Enrichment {
  std::string surface_id;
  std::string object_id;
  std::string class_name;
  std::optional<std::string> function;
  double zenith = 0.0;
  double azimuth = 0.0;
  double signed_dist = 0.0;
  double min_dist = 0.0;

  friend bool operator==(const Enrichment&, const Enrichment&) = default;
};

/// A beam plus its association columns; the columns are all present or all absent.
struct BeamRecord {
  Beam beam;
  std::optional<Enrichment> enrichment;

  friend bool operator==(const BeamRecord&, const BeamRecord&) = default;
};

}  // namespace beamlink
