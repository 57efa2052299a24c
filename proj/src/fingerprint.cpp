#include "beamlink/fingerprint.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>

#include "beamlink/error.hpp"
#include "beamlink/text.hpp"

namespace beamlink {

namespace {

std::optional<std::size_t> find_bin(const std::vector<double>& edges, double v) {
  if (!(v >= edges.front() && v < edges.back())) return std::nullopt;
  const auto it = std::upper_bound(edges.begin(), edges.end(), v);
  return static_cast<std::size_t>(it - edges.begin()) - 1;
}

bool strictly_ascending(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) return false;
  return true;
}

struct Accum {
  std::vector<std::vector<double>> cells;
  std::map<std::string, std::size_t> classes;
  std::map<std::string, std::size_t> functions;
};

template <typename Map>
std::optional<std::string> most_frequent(const Map& counts) {
  std::optional<std::string> best;
  std::size_t n = 0;
  for (const auto& [k, c] : counts) {
    if (c > n) {
      best = k;
      n = c;
    }
  }
  return best;
}

std::string format_edges(const std::vector<double>& edges, std::size_t i, double scale, const char* unit) {
  return "[" + text::format_fixed(edges[i] * scale, 0) + unit + ", " +
         text::format_fixed(edges[i + 1] * scale, 0) + unit + ")";
}

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

std::string pad(const std::string& s, std::size_t width, bool left) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

}  // namespace

BinGrid BinGrid::standard(double range_bin_size, double range_max) {
  if (!(range_bin_size > 0.0) || !(range_max > 0.0))
    throw Error(ErrorKind::invalid_config, "range bin size and range max must be > 0");
  BinGrid g;
  const auto n = static_cast<std::size_t>(std::ceil(range_max / range_bin_size - 1e-9));
  for (std::size_t i = 0; i <= n; ++i) g.range_edges.push_back(static_cast<double>(i) * range_bin_size);
  g.zenith_edges = zenith_edges_deg({0, 20, 40, 60, 90});
  return g;
}

std::vector<double> BinGrid::zenith_edges_deg(const std::vector<double>& degrees) {
  std::vector<double> out;
  out.reserve(degrees.size());
  for (const double d : degrees) out.push_back(d * std::numbers::pi / 180.0);
  return out;
}

void BinGrid::validate() const {
  if (range_edges.size() < 2 || !strictly_ascending(range_edges))
    throw Error(ErrorKind::invalid_config, "range edges must be at least two strictly ascending values");
  if (!(range_edges.front() >= 0.0)) throw Error(ErrorKind::invalid_config, "first range edge must be >= 0");
  if (zenith_edges.size() < 2 || !strictly_ascending(zenith_edges))
    throw Error(ErrorKind::invalid_config, "zenith edges must be at least two strictly ascending values");
  if (!(zenith_edges.front() >= 0.0) || !(zenith_edges.back() <= std::numbers::pi / 2 + 1e-12))
    throw Error(ErrorKind::invalid_config, "zenith edges must lie within [0, 90] degrees");
}

std::optional<std::size_t> BinGrid::range_bin(double r) const { return find_bin(range_edges, r); }
std::optional<std::size_t> BinGrid::zenith_bin(double theta) const { return find_bin(zenith_edges, theta); }

std::string to_string(const FingerprintKey& key) {
  return key.campaign_id + "/" + key.sensor_id + "/" + key.object_id;
}

std::vector<std::size_t> Fingerprint::missing_bins(std::size_t range_bin, std::size_t min_count) const {
  if (range_bin >= grid.range_bins())
    throw Error(ErrorKind::invalid_argument, "range bin " + std::to_string(range_bin) + " outside the grid");
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < grid.zenith_bins(); ++j)
    if (cell(range_bin, j).count < std::max<std::size_t>(min_count, 1)) out.push_back(j);
  return out;
}

void FingerprintFilter::validate() const {
  for (const auto* s : {&campaigns, &sensors, &objects, &classes, &functions})
    if (*s && (*s)->empty()) throw Error(ErrorKind::invalid_config, "filter selector set is empty");
  for (const auto* w : {&range, &zenith})
    if (*w && !((*w)->lo < (*w)->hi)) throw Error(ErrorKind::invalid_config, "filter window is empty");
}

bool FingerprintFilter::accepts(const BeamRecord& rec) const {
  if (!rec.enrichment) return false;
  const Enrichment& e = *rec.enrichment;
  auto in = [](const auto& sel, const std::string& v) { return !sel || sel->count(v) > 0; };
  if (!in(campaigns, rec.beam.campaign_id) || !in(sensors, rec.beam.sensor_id) ||
      !in(objects, e.object_id) || !in(classes, e.class_name))
    return false;
  if (functions && (!e.function || !functions->count(*e.function))) return false;
  if (range && !(rec.beam.range >= range->lo && rec.beam.range < range->hi)) return false;
  if (zenith && !(e.zenith >= zenith->lo && e.zenith < zenith->hi)) return false;
  return true;
}

FingerprintSet extract_fingerprints(std::span<const BeamRecord> records, const BinGrid& grid,
                                    const FingerprintFilter& filter, unsigned workers) {
  grid.validate();
  filter.validate();
  const std::size_t n_cells = grid.range_bins() * grid.zenith_bins();

  using Partial = std::map<FingerprintKey, Accum>;
  auto fold = [&](std::size_t begin, std::size_t end, Partial& acc, std::size_t& counted) {
    for (std::size_t k = begin; k < end; ++k) {
      const BeamRecord& rec = records[k];
      if (!filter.accepts(rec)) continue;
      const auto i = grid.range_bin(rec.beam.range);
      const auto j = grid.zenith_bin(rec.enrichment->zenith);
      if (!i || !j) continue;
      Accum& a = acc[{rec.beam.campaign_id, rec.beam.sensor_id, rec.enrichment->object_id}];
      if (a.cells.empty()) a.cells.resize(n_cells);
      a.cells[*i * grid.zenith_bins() + *j].push_back(rec.beam.intensity);
      ++a.classes[rec.enrichment->class_name];
      if (rec.enrichment->function) ++a.functions[*rec.enrichment->function];
      ++counted;
    }
  };

  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::clamp<std::size_t>(records.size() / 4096, 1, workers));
  std::vector<Partial> partials(workers);
  std::vector<std::size_t> counts(workers, 0);
  const std::size_t per = (records.size() + workers - 1) / workers;
  if (workers == 1) {
    fold(0, records.size(), partials[0], counts[0]);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t b = std::min(records.size(), w * per);
      const std::size_t e = std::min(records.size(), b + per);
      pool.emplace_back([&, w, b, e] { fold(b, e, partials[w], counts[w]); });
    }
    for (auto& t : pool) t.join();
  }

  Partial merged = std::move(partials[0]);
  for (unsigned w = 1; w < workers; ++w) {
    for (auto& [key, a] : partials[w]) {
      Accum& m = merged[key];
      if (m.cells.empty()) m.cells.resize(n_cells);
      for (std::size_t c = 0; c < n_cells; ++c)
        m.cells[c].insert(m.cells[c].end(), a.cells[c].begin(), a.cells[c].end());
      for (const auto& [k, v] : a.classes) m.classes[k] += v;
      for (const auto& [k, v] : a.functions) m.functions[k] += v;
    }
  }

  FingerprintSet out;
  for (const std::size_t c : counts) out.counted += c;
  out.dropped = records.size() - out.counted;
  for (auto& [key, a] : merged) {
    Fingerprint fp;
    fp.key = key;
    fp.grid = grid;
    fp.class_name = most_frequent(a.classes).value_or("");
    fp.function = most_frequent(a.functions);
    fp.cells.reserve(n_cells);
    for (auto& values : a.cells) fp.cells.push_back(describe(std::move(values)));
    out.fingerprints.emplace(key, std::move(fp));
  }
  return out;
}

double dist_q3(const Fingerprint& a, const Fingerprint& b, std::size_t range_bin, std::size_t min_count) {
  if (!(a.grid == b.grid)) throw Error(ErrorKind::invalid_argument, "fingerprints use different bin grids");
  std::string missing;
  for (const Fingerprint* fp : {&a, &b}) {
    const auto bins = fp->missing_bins(range_bin, min_count);
    if (bins.empty()) continue;
    if (!missing.empty()) missing += "; ";
    missing += to_string(fp->key) + " zenith bins";
    for (const std::size_t j : bins)
      missing += " " + format_edges(fp->grid.zenith_edges, j, kRadToDeg, "deg");
  }
  if (!missing.empty())
    throw Error(ErrorKind::coverage, "incomplete coverage in range bin " + std::to_string(range_bin) + ": " + missing);

  const std::size_t J = a.grid.zenith_bins();
  double sum = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    const double d = a.cell(range_bin, j).q3 - b.cell(range_bin, j).q3;
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(J));
}

double mean_group_distance(const std::vector<FingerprintKey>& a, const std::vector<FingerprintKey>& b,
                           const std::map<FingerprintKey, Fingerprint>& fps, std::size_t range_bin,
                           std::size_t min_count) {
  auto lookup = [&](const FingerprintKey& k) -> const Fingerprint& {
    const auto it = fps.find(k);
    if (it == fps.end()) throw Error(ErrorKind::unknown_reference, "no fingerprint for " + to_string(k));
    return it->second;
  };
  double sum = 0.0;
  std::size_t pairs = 0;
  for (const auto& ka : a) {
    const Fingerprint& fa = lookup(ka);
    for (const auto& kb : b) {
      if (ka.object_id == kb.object_id) continue;
      sum += dist_q3(fa, lookup(kb), range_bin, min_count);
      ++pairs;
    }
  }
  if (pairs == 0) throw Error(ErrorKind::empty_pairs, "no pair of distinct objects between the two groups");
  return sum / static_cast<double>(pairs);
}

GroupMatrix group_distance_matrix(Grouping grouping, const std::map<FingerprintKey, Fingerprint>& fps,
                                  std::size_t range_bin, std::size_t min_count) {
  std::map<std::string, std::vector<FingerprintKey>> groups;
  GroupMatrix m;
  for (const auto& [key, fp] : fps) {
    if (!fp.covered(range_bin, min_count)) {
      m.excluded.push_back(key);
      continue;
    }
    if (grouping == Grouping::by_class) {
      groups[fp.class_name].push_back(key);
    } else if (fp.function) {
      groups[*fp.function].push_back(key);
    }
  }
  for (const auto& [label, keys] : groups) {
    m.labels.push_back(label);
    m.group_sizes.push_back(keys.size());
  }
  const std::size_t n = m.labels.size();
  m.values.assign(n * n, std::nullopt);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      try {
        const double d = mean_group_distance(groups[m.labels[i]], groups[m.labels[j]], fps, range_bin, min_count);
        m.values[i * n + j] = d;
        m.values[j * n + i] = d;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::empty_pairs) throw;
      }
    }
  }
  return m;
}

FeatureTable export_feature_matrix(std::span<const BeamRecord> records, const std::vector<std::string>& columns) {
  static const std::set<std::string> known = {"intensity", "range", "zenith", "azimuth", "campaign", "sensor"};
  for (const auto& c : columns)
    if (!known.count(c)) throw Error(ErrorKind::unknown_column, "unknown feature column '" + c + "'");

  std::vector<const BeamRecord*> rows;
  rows.reserve(records.size());
  std::set<std::string> campaigns, sensors;
  for (const auto& r : records) {
    rows.push_back(&r);
    campaigns.insert(r.beam.campaign_id);
    sensors.insert(r.beam.sensor_id);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const BeamRecord* a, const BeamRecord* b) { return a->beam.beam_id < b->beam.beam_id; });

  FeatureTable t;
  t.header.push_back("beam_id");
  for (const auto& c : columns) {
    if (c == "campaign") {
      for (const auto& v : campaigns) t.header.push_back("campaign=" + v);
    } else if (c == "sensor") {
      for (const auto& v : sensors) t.header.push_back("sensor=" + v);
    } else {
      t.header.push_back(c);
    }
  }
  t.rows.reserve(rows.size());
  for (const BeamRecord* r : rows) {
    std::vector<std::optional<double>> row;
    row.push_back(static_cast<double>(r->beam.beam_id));
    const auto& e = r->enrichment;
    for (const auto& c : columns) {
      if (c == "intensity") {
        row.push_back(r->beam.intensity);
      } else if (c == "range") {
        row.push_back(r->beam.range);
      } else if (c == "zenith") {
        row.push_back(e ? std::optional(e->zenith) : std::nullopt);
      } else if (c == "azimuth") {
        row.push_back(e ? std::optional(e->azimuth) : std::nullopt);
      } else if (c == "campaign") {
        for (const auto& v : campaigns) row.push_back(v == r->beam.campaign_id ? 1.0 : 0.0);
      } else {
        for (const auto& v : sensors) row.push_back(v == r->beam.sensor_id ? 1.0 : 0.0);
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_feature_csv(std::ostream& out, const FeatureTable& table) {
  std::vector<std::string> header;
  for (const auto& h : table.header) header.push_back(text::csv_escape(h));
  out << text::join(header) << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      // beam_id is integral; keep it exact
      if (i == 0 && row[i]) {
        out << static_cast<std::uint64_t>(*row[i]);
      } else if (row[i]) {
        out << text::format_double(*row[i]);
      }
    }
    out << '\n';
  }
}

namespace {

const char* kFingerprintHeader =
    "campaign_id,sensor_id,object_id,class_name,function,range_bin,range_lo,range_hi,zenith_bin,"
    "zenith_lo,zenith_hi,count,mean,std,median,q1,q3";

}  // namespace

void write_fingerprints_csv(std::ostream& out, const std::map<FingerprintKey, Fingerprint>& fps) {
  out << kFingerprintHeader << '\n';
  for (const auto& [key, fp] : fps) {
    for (std::size_t i = 0; i < fp.grid.range_bins(); ++i) {
      for (std::size_t j = 0; j < fp.grid.zenith_bins(); ++j) {
        const Descriptor& d = fp.cell(i, j);
        out << text::csv_escape(key.campaign_id) << ',' << text::csv_escape(key.sensor_id) << ','
            << text::csv_escape(key.object_id) << ',' << text::csv_escape(fp.class_name) << ','
            << (fp.function ? text::csv_escape(*fp.function) : "") << ',' << i << ','
            << text::format_double(fp.grid.range_edges[i]) << ',' << text::format_double(fp.grid.range_edges[i + 1])
            << ',' << j << ',' << text::format_double(fp.grid.zenith_edges[j]) << ','
            << text::format_double(fp.grid.zenith_edges[j + 1]) << ',' << d.count;
        if (d.count > 0) {
          for (const double v : {d.mean, d.std, d.median, d.q1, d.q3}) out << ',' << text::format_double(v);
        } else {
          out << ",,,,,";
        }
        out << '\n';
      }
    }
  }
}

std::map<FingerprintKey, Fingerprint> read_fingerprints_csv(std::istream& in) {
  std::string line;
  if (!text::next_line(in, line) || line != kFingerprintHeader)
    throw Error(ErrorKind::corrupt, "fingerprint table has an unexpected header");

  struct Row {
    std::size_t i, j;
    double rlo, rhi, zlo, zhi;
    Descriptor d;
  };
  std::map<FingerprintKey, std::pair<Fingerprint, std::vector<Row>>> parts;
  std::size_t line_no = 1;
  while (text::next_line(in, line)) {
    ++line_no;
    const auto f = text::csv_split(line);
    if (f.size() != 17)
      throw Error(ErrorKind::corrupt, "fingerprint table line " + std::to_string(line_no) + ": expected 17 fields");
    auto& [fp, rows] = parts[{f[0], f[1], f[2]}];
    fp.key = {f[0], f[1], f[2]};
    fp.class_name = f[3];
    if (!f[4].empty()) fp.function = f[4];
    Row r{};
    r.i = text::parse_uint(f[5], "range_bin");
    r.rlo = text::parse_double(f[6], "range_lo");
    r.rhi = text::parse_double(f[7], "range_hi");
    r.j = text::parse_uint(f[8], "zenith_bin");
    r.zlo = text::parse_double(f[9], "zenith_lo");
    r.zhi = text::parse_double(f[10], "zenith_hi");
    r.d.count = text::parse_uint(f[11], "count");
    if (r.d.count > 0) {
      r.d.mean = text::parse_double(f[12], "mean");
      r.d.std = text::parse_double(f[13], "std");
      r.d.median = text::parse_double(f[14], "median");
      r.d.q1 = text::parse_double(f[15], "q1");
      r.d.q3 = text::parse_double(f[16], "q3");
    }
    rows.push_back(r);
  }

  std::map<FingerprintKey, Fingerprint> out;
  for (auto& [key, part] : parts) {
    auto& [fp, rows] = part;
    std::size_t ni = 0, nj = 0;
    for (const Row& r : rows) {
      ni = std::max(ni, r.i + 1);
      nj = std::max(nj, r.j + 1);
    }
    if (rows.size() != ni * nj)
      throw Error(ErrorKind::corrupt, "fingerprint " + to_string(key) + " does not list every cell");
    fp.grid.range_edges.assign(ni + 1, 0.0);
    fp.grid.zenith_edges.assign(nj + 1, 0.0);
    fp.cells.assign(ni * nj, Descriptor{});
    std::vector<char> seen(ni * nj, 0);
    for (const Row& r : rows) {
      const std::size_t c = r.i * nj + r.j;
      if (seen[c]++) throw Error(ErrorKind::corrupt, "fingerprint " + to_string(key) + " repeats a cell");
      fp.grid.range_edges[r.i] = r.rlo;
      fp.grid.range_edges[r.i + 1] = r.rhi;
      fp.grid.zenith_edges[r.j] = r.zlo;
      fp.grid.zenith_edges[r.j + 1] = r.zhi;
      fp.cells[c] = r.d;
    }
    try {
      fp.grid.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::corrupt, "fingerprint " + to_string(key) + ": " + e.what());
    }
    out.emplace(key, std::move(fp));
  }
  return out;
}

std::string render_fingerprints(const std::map<FingerprintKey, Fingerprint>& fps, std::size_t range_bin) {
  if (fps.empty()) return "(no fingerprints)\n";
  const BinGrid& grid = fps.begin()->second.grid;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head = {"campaign", "sensor", "object", "class", "n"};
  for (std::size_t j = 0; j < grid.zenith_bins(); ++j)
    head.push_back("q3 " + format_edges(grid.zenith_edges, j, kRadToDeg, ""));
  rows.push_back(head);
  for (const auto& [key, fp] : fps) {
    std::size_t n = 0;
    std::vector<std::string> row = {key.campaign_id, key.sensor_id, key.object_id, fp.class_name, ""};
    for (std::size_t j = 0; j < fp.grid.zenith_bins(); ++j) {
      const Descriptor& d = fp.cell(range_bin, j);
      n += d.count;
      row.push_back(d.count ? text::format_fixed(d.q3, 2) : "-");
    }
    row[4] = std::to_string(n);
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::ostringstream os;
  os << "range bin " << format_edges(grid.range_edges, range_bin, 1.0, " m") << '\n';
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "  " : "") << pad(r[c], width[c], c < 4);
    os << '\n';
  }
  return os.str();
}

void write_matrix_csv(std::ostream& out, const GroupMatrix& m) {
  out << "group";
  for (const auto& l : m.labels) out << ',' << text::csv_escape(l);
  out << '\n';
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    out << text::csv_escape(m.labels[i]);
    for (std::size_t j = 0; j < m.labels.size(); ++j) {
      out << ',';
      if (const auto v = m.at(i, j)) out << text::format_double(*v);
    }
    out << '\n';
  }
}

std::string render_matrix(const GroupMatrix& m, int digits) {
  const std::size_t n = m.labels.size();
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head = {""};
  for (const auto& l : m.labels) head.push_back(l);
  rows.push_back(head);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> row = {m.labels[i] + " (" + std::to_string(m.group_sizes[i]) + ")"};
    for (std::size_t j = 0; j < n; ++j) {
      const auto v = m.at(i, j);
      row.push_back(v ? text::format_fixed(*v, digits) : "-");
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(n + 1, 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::ostringstream os;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "  " : "") << pad(r[c], width[c], c == 0);
    os << '\n';
  }
  if (!m.excluded.empty()) os << m.excluded.size() << " fingerprint(s) excluded for incomplete coverage\n";
  return os.str();
}

}  // namespace beamlink
