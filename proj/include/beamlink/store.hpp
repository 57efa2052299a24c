// File-backed beam store.
//
// Layout of a store directory:
//
//   manifest.json       platforms, sensors, campaigns, packages, string table
//   packages/NNNNNN.bin one file per package, columnar, little-endian
//   .lock               present while a writer holds the store
//
// Package file: magic "BLPK", u32 version, u64 beam count, then one column
// per field (u64 beam_id; f64 ox oy oz dx dy dz range; f32 intensity;
// i64 timestamp_ns; u32 sensor, campaign; u8 associated; u32 surface,
// object, class, function; f64 zenith azimuth signed_dist min_dist), then a
// u64 FNV-1a checksum of everything before it. String columns hold indices
// into the manifest string table; 0xFFFFFFFF marks an absent value.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "beamlink/aabb.hpp"
#include "beamlink/beam.hpp"
#include "beamlink/registration.hpp"

namespace beamlink {

struct Platform {
  std::string id;
  std::string name;
};

struct SensorInfo {
  std::string id;
  std::string platform_id;
  std::string model;
  RigidTransform mount;  // sensor frame to world frame
};

struct Campaign {
  std::string id;
  std::string platform_id;
  std::int64_t start_time_ns = 0;
  std::string description;
  std::vector<std::string> tags;
};

struct PackageInfo {
  std::uint32_t id = 0;
  std::string campaign_id;
  std::string sensor_id;
  std::string file;  // relative to the store root
  std::uint64_t beam_count = 0;
  std::uint64_t byte_size = 0;
  Aabb envelope;  // origins and reflection points of all member beams
};

struct UpdateSummary {
  std::size_t packages_rewritten = 0;
  std::size_t beams_updated = 0;
};

/// Exclusive writer lock on a store directory. Throws Error(busy) if held.
class StoreLock {
 public:
  explicit StoreLock(const std::filesystem::path& root);
  ~StoreLock();
  StoreLock(const StoreLock&) = delete;
  StoreLock& operator=(const StoreLock&) = delete;

 private:
  std::filesystem::path path_;
};

class Store {
 public:
  /// Creates an empty store. Throws Error(invalid_argument) if a store
  /// already exists at `root`.
  static Store create(const std::filesystem::path& root);
  /// Throws Error(missing_input) if there is no manifest, Error(corrupt) if
  /// it cannot be parsed.
  static Store open(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }
  const std::vector<Platform>& platforms() const { return platforms_; }
  const std::vector<SensorInfo>& sensors() const { return sensors_; }
  const std::vector<Campaign>& campaigns() const { return campaigns_; }
  const std::vector<PackageInfo>& packages() const { return packages_; }
  std::uint64_t beam_count() const;

  /// Throw Error(duplicate_id) or Error(unknown_reference).
  void add_platform(const Platform& p);
  void add_sensor(const SensorInfo& s);
  void add_campaign(const Campaign& c);
  const SensorInfo* find_sensor(const std::string& id) const;
  const Campaign* find_campaign(const std::string& id) const;

  /// Groups beams by (campaign, sensor), orders each group by timestamp and
  /// beam id, transforms them to the world frame with the sensor mount and
  /// writes packages of `package_size` beams (the last may be smaller).
  /// Throws Error(unknown_reference) for unregistered sensors or campaigns,
  /// Error(duplicate_id) for beam ids already present.
  std::vector<std::uint32_t> ingest(std::span<const Beam> beams, std::size_t package_size);

  /// Packages whose envelope intersects `box` (boundaries included).
  std::vector<std::uint32_t> query_by_envelope(const Aabb& box) const;

  /// Records of the given packages, in package order then stored order.
  /// Throws Error(unknown_reference) for unknown ids, Error(corrupt) for
  /// damaged files.
  std::vector<BeamRecord> read_beams(std::span<const std::uint32_t> package_ids) const;
  std::vector<BeamRecord> read_all() const;

  /// Replaces the association columns of the listed beams (nullopt clears
  /// them). Each touched package is rewritten to a temporary file and renamed
  /// into place. Throws Error(unknown_reference) for beam ids not in the store.
  UpdateSummary update_associations(std::span<const BeamRecord> records);

 private:
  explicit Store(std::filesystem::path root) : root_(std::move(root)) {}
  void load();
  void save_manifest() const;
  std::uint32_t intern(const std::string& s);
  const std::string& string_at(std::uint32_t id) const;
  std::vector<BeamRecord> read_package(const PackageInfo& p) const;
  std::string encode_package(std::span<const BeamRecord> records);

  std::filesystem::path root_;
  std::vector<Platform> platforms_;
  std::vector<SensorInfo> sensors_;
  std::vector<Campaign> campaigns_;
  std::vector<PackageInfo> packages_;
  std::vector<std::string> strings_;
  std::unordered_map<std::string, std::uint32_t> string_ids_;
  std::uint32_t next_package_id_ = 1;
};

}  // namespace beamlink
