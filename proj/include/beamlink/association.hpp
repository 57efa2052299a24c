// Beam-to-surface association and bidirectional enrichment.
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "beamlink/beam.hpp"
#include "beamlink/geometry.hpp"
#include "beamlink/spatial_index.hpp"
#include "beamlink/statistics.hpp"

namespace beamlink {

/// How intersecting candidates are ranked before confirmation.
enum class CandidateOrdering {
  /// Ascending signed distance: the intersection farthest along the beam
  /// within the uncertainty segment is confirmed first.
  min_signed_distance,
  /// Descending signed distance (first-hit semantics).
  max_signed_distance,
};

std::string_view to_string(CandidateOrdering ordering);
/// Accepts "min_signed_distance" / "max_signed_distance"; throws Error(invalid_config).
CandidateOrdering parse_ordering(std::string_view text);

struct AssociationConfig {
  GeomParams geom;
  int max_associations_per_beam = 1;
  CandidateOrdering ordering = CandidateOrdering::min_signed_distance;

  void validate() const;
};

struct Association {
  BeamId beam_id = 0;
  std::size_t surface_index = 0;  // into the SurfaceIndex table
  std::string surface_id;
  std::string object_id;
  Vec3 intersection;
  double signed_dist = 0.0;
  double min_dist = 0.0;  // distance from the measured point to the polygon
  double zenith = 0.0;
  double azimuth = 0.0;
  bool azimuth_degenerate = false;
  int rank = 1;

  friend bool operator==(const Association&, const Association&) = default;
};

/// Associates one beam. Throws Error(invalid_argument) if the beam is malformed.
std::vector<Association> associate_beam(const Beam& beam, const SurfaceIndex& index,
                                        const AssociationConfig& cfg);

struct AssociationSummary {
  std::size_t total = 0;
  std::size_t associated = 0;
  std::size_t unassociated = 0;
  std::size_t malformed = 0;
  std::map<std::string, std::size_t> per_class;  // beams by class of their rank-1 surface
};

struct BatchResult {
  std::vector<Association> associations;  // sorted by (beam_id, rank)
  AssociationSummary summary;
};

/// Associates every beam, fanning out over `workers` threads (0 = hardware
/// concurrency). Malformed beams are skipped and counted. The result is
/// identical for any worker count.
BatchResult associate_batch(std::span<const Beam> beams, const SurfaceIndex& index,
                            const AssociationConfig& cfg, unsigned workers = 0);

struct ObjectStats {
  std::string object_id;
  Descriptor intensity;
  double signed_dist_mean = 0.0;
  double signed_dist_median = 0.0;
  double min_dist_mean = 0.0;
  double min_dist_median = 0.0;

  std::size_t point_count() const { return intensity.count; }
};

/// Per-object summaries over all associated beams. A beam contributes at
/// most once per object (its best-ranked association to that object).
/// Throws Error(unknown_reference) if an association names an unknown beam.
std::map<std::string, ObjectStats> enrich_objects(std::span<const Association> associations,
                                                  std::span<const Beam> beams);

/// Attaches rank-1 association attributes to each beam; output is sorted by
/// beam_id and unassociated beams pass through unchanged. Throws
/// Error(corrupt) for an association whose surface is not in the index.
std::vector<BeamRecord> enrich_points(std::span<const Beam> beams,
                                      std::span<const Association> associations,
                                      const SurfaceIndex& surfaces);

using ObservationKey = std::tuple<std::string, std::string, std::string>;  // campaign, sensor, object

/// Point counts per distinct (campaign, sensor, object) observation.
std::map<ObservationKey, std::size_t> object_observations(std::span<const BeamRecord> records);

}  // namespace beamlink
