// Text formats: beam tables, scene files, ground truth.
#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "beamlink/association.hpp"
#include "beamlink/beam.hpp"
#include "beamlink/scan_sim.hpp"
#include "beamlink/store.hpp"

namespace beamlink {

/// Header: beam_id,ox,oy,oz,dx,dy,dz,range,intensity,timestamp_ns,sensor_id,campaign_id
/// followed, when `with_associations`, by
/// surface_id,object_id,class_name,function,zenith,azimuth,signed_dist,min_dist.
/// Unassociated beams leave the association fields empty. Reals are written
/// in their shortest round-trip form.
void write_beams_csv(std::ostream& out, std::span<const BeamRecord> records, bool with_associations);

/// Accepts either header. Throws Error(corrupt) with the line number on
/// malformed rows, partially filled association columns or a wrong header.
std::vector<BeamRecord> read_beams_csv(std::istream& in);

/// Scene file (JSON). See docs/scene-format.md. Throws Error(corrupt) on
/// malformed documents and the Surface::create errors on bad polygons.
Scene read_scene_json(std::istream& in);
void write_scene_json(std::ostream& out, const Scene& scene);

/// Optional "trajectory" array of the scene file; empty if absent.
Trajectory read_trajectory_json(std::istream& in);

/// beam_id,surface_id
void write_ground_truth_csv(std::ostream& out, std::span<const SimulatedBeam> beams);
std::map<BeamId, std::string> read_ground_truth_csv(std::istream& in);

/// beam_id,rank,surface_id,object_id,ix,iy,iz,signed_dist,min_dist,zenith,azimuth,azimuth_degenerate
/// The surface index is not written; readers resolve it against `index`
/// and throw Error(unknown_reference) for surfaces it does not hold.
void write_associations_csv(std::ostream& out, std::span<const Association> associations);
std::vector<Association> read_associations_csv(std::istream& in, const SurfaceIndex& index);

/// Platforms, sensors and campaigns to register in a store (JSON).
struct Registry {
  std::vector<Platform> platforms;
  std::vector<SensorInfo> sensors;
  std::vector<Campaign> campaigns;
};
Registry read_registry_json(std::istream& in);
void write_registry_json(std::ostream& out, const Registry& registry);

/// File helpers that throw Error(missing_input) / Error(io) with the path.
std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace beamlink
