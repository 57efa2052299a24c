// Radiometric fingerprints: per-object intensity quartiles over range and
// zenith bins, and Q3-based distances between them.
#pragma once

#include <compare>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "beamlink/beam.hpp"
#include "beamlink/statistics.hpp"

namespace beamlink {

/// Half-open range and zenith bins. Azimuth is never binned.
struct BinGrid {
  std::vector<double> range_edges;   // m
  std::vector<double> zenith_edges;  // rad

  /// Range bins of `range_bin_size` from 0 up to `range_max`, zenith bins at
  /// 0°, 20°, 40°, 60°, 90°.
  static BinGrid standard(double range_bin_size = 15.0, double range_max = 15.0);
  /// Zenith edges given in degrees.
  static std::vector<double> zenith_edges_deg(const std::vector<double>& degrees);

  /// Throws Error(invalid_config).
  void validate() const;

  std::size_t range_bins() const { return range_edges.size() - 1; }
  std::size_t zenith_bins() const { return zenith_edges.size() - 1; }
  std::optional<std::size_t> range_bin(double r) const;
  std::optional<std::size_t> zenith_bin(double theta) const;

  friend bool operator==(const BinGrid&, const BinGrid&) = default;
};

struct FingerprintKey {
  std::string campaign_id;
  std::string sensor_id;
  std::string object_id;

  friend auto operator<=>(const FingerprintKey&, const FingerprintKey&) = default;
};

std::string to_string(const FingerprintKey& key);  // "campaign/sensor/object"

struct Fingerprint {
  FingerprintKey key;
  BinGrid grid;
  std::string class_name;               // most frequent class among its beams
  std::optional<std::string> function;  // most frequent function, if any
  std::vector<Descriptor> cells;        // range-major; count == 0 means absent

  const Descriptor& cell(std::size_t range_bin, std::size_t zenith_bin) const {
    return cells[range_bin * grid.zenith_bins() + zenith_bin];
  }
  /// Zenith bins of `range_bin` holding fewer than `min_count` beams.
  std::vector<std::size_t> missing_bins(std::size_t range_bin, std::size_t min_count) const;
  bool covered(std::size_t range_bin, std::size_t min_count) const {
    return missing_bins(range_bin, min_count).empty();
  }
};

struct Window {
  double lo = 0.0;
  double hi = 0.0;  // half-open [lo, hi)
};

/// Unset selectors accept everything.
struct FingerprintFilter {
  std::optional<std::set<std::string>> campaigns, sensors, objects, classes, functions;
  std::optional<Window> range;
  std::optional<Window> zenith;

  /// Throws Error(invalid_config) for empty selector sets or empty windows.
  void validate() const;
  bool accepts(const BeamRecord& record) const;
};

struct FingerprintSet {
  std::map<FingerprintKey, Fingerprint> fingerprints;
  std::size_t counted = 0;
  std::size_t dropped = 0;  // unassociated, filtered out or outside the grid
};

/// Each accepted beam lands in exactly one cell of one fingerprint.
FingerprintSet extract_fingerprints(std::span<const BeamRecord> records, const BinGrid& grid,
                                    const FingerprintFilter& filter = {}, unsigned workers = 1);

inline constexpr std::size_t kDefaultMinCount = 5;

/// RMSE of cell Q3 values over the zenith bins of `range_bin`. Throws
/// Error(coverage) naming the missing bins if either side has a bin with
/// fewer than `min_count` beams, Error(invalid_argument) on mismatched grids.
double dist_q3(const Fingerprint& a, const Fingerprint& b, std::size_t range_bin,
               std::size_t min_count = kDefaultMinCount);

/// Mean dist_q3 over pairs (a in A, b in B) with different objects. Throws
/// Error(empty_pairs) if there is no such pair, Error(unknown_reference) for
/// keys missing from `fps`.
double mean_group_distance(const std::vector<FingerprintKey>& a, const std::vector<FingerprintKey>& b,
                           const std::map<FingerprintKey, Fingerprint>& fps, std::size_t range_bin,
                           std::size_t min_count = kDefaultMinCount);

enum class Grouping { by_class, by_function };

struct GroupMatrix {
  std::vector<std::string> labels;
  std::vector<std::size_t> group_sizes;
  std::vector<std::optional<double>> values;  // row-major, labels.size()²
  std::vector<FingerprintKey> excluded;       // not fully covered

  std::optional<double> at(std::size_t i, std::size_t j) const { return values[i * labels.size() + j]; }
};

/// Groups the fully covered fingerprints and fills every (g, g') entry with
/// mean_group_distance; entries without object pairs stay absent.
GroupMatrix group_distance_matrix(Grouping grouping, const std::map<FingerprintKey, Fingerprint>& fps,
                                  std::size_t range_bin, std::size_t min_count = kDefaultMinCount);

/// Rows of per-beam features, ordered by beam_id. Absent values are nullopt.
struct FeatureTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::optional<double>>> rows;
};

/// Columns: beam_id (always first), then any of intensity, range, zenith,
/// azimuth, campaign, sensor. campaign and sensor expand to one-hot columns
/// named "campaign=<id>" / "sensor=<id>". Throws Error(unknown_column).
FeatureTable export_feature_matrix(std::span<const BeamRecord> records,
                                   const std::vector<std::string>& columns);

void write_feature_csv(std::ostream& out, const FeatureTable& table);

/// One row per (fingerprint, cell), empty cells included, at full precision.
void write_fingerprints_csv(std::ostream& out, const std::map<FingerprintKey, Fingerprint>& fps);
/// Inverse of write_fingerprints_csv. Throws Error(corrupt).
std::map<FingerprintKey, Fingerprint> read_fingerprints_csv(std::istream& in);

/// Aligned plain-text table of per-cell Q3 values for one range bin.
std::string render_fingerprints(const std::map<FingerprintKey, Fingerprint>& fps, std::size_t range_bin);

void write_matrix_csv(std::ostream& out, const GroupMatrix& m);
/// Aligned plain-text table; absent entries print as "-".
std::string render_matrix(const GroupMatrix& m, int digits = 2);

}  // namespace beamlink
