#include "beamlink/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstdio>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <unordered_set>

#include "beamlink/error.hpp"
#include "json.hpp"

namespace beamlink {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'B', 'L', 'P', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kAbsent = 0xFFFFFFFFu;
constexpr const char* kManifest = "manifest.json";

template <typename T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    v = byteswap_if_big(v);
    char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    buf_.append(raw, sizeof(T));
  }
  void bytes(const char* p, std::size_t n) { buf_.append(p, n); }
  std::string& str() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::string what) : buf_(buf), what_(std::move(what)) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > buf_.size()) throw Error(ErrorKind::corrupt, what_ + ": truncated");
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return byteswap_if_big(v);
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::uint64_t fnv1a(const char* p, std::size_t n) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(p[i]);
    h *= 1099511628211ull;
  }
  return h;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::missing_input, "cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const fs::path& path, const std::string& data) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::io, "failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::io, "cannot rename " + tmp.string() + ": " + ec.message());
}

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::corrupt, "manifest: expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::string package_file(std::uint32_t id) {
  char name[32];
  std::snprintf(name, sizeof name, "packages/%06u.bin", id);
  return name;
}

Vec3 reflection(const Beam& b) { return b.origin + b.direction * b.range; }

}  // namespace

StoreLock::StoreLock(const fs::path& root) : path_(root / ".lock") {
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST)
      throw Error(ErrorKind::busy, "store " + root.string() + " is locked by another writer (" + path_.string() + ")");
    throw Error(ErrorKind::io, "cannot create lock file " + path_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

StoreLock::~StoreLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

Store Store::create(const fs::path& root) {
  if (fs::exists(root / kManifest)) throw Error(ErrorKind::invalid_argument, "a store already exists at " + root.string());
  std::error_code ec;
  fs::create_directories(root / "packages", ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + root.string() + ": " + ec.message());
  Store s(root);
  StoreLock lock(root);
  s.save_manifest();
  return s;
}

Store Store::open(const fs::path& root) {
  if (!fs::exists(root / kManifest)) throw Error(ErrorKind::missing_input, "no store at " + root.string());
  Store s(root);
  s.load();
  return s;
}

void Store::load() {
  const std::string text = read_file(root_ / kManifest);
  platforms_.clear();
  sensors_.clear();
  campaigns_.clear();
  packages_.clear();
  strings_.clear();
  string_ids_.clear();
  try {
    const json m = json::parse(text);
    if (m.at("format") != "beamlink-store" || m.at("version") != kVersion)
      throw Error(ErrorKind::corrupt, "manifest has an unsupported format or version");
    for (const auto& s : m.at("strings")) {
      string_ids_.emplace(s.get<std::string>(), static_cast<std::uint32_t>(strings_.size()));
      strings_.push_back(s.get<std::string>());
    }
    for (const auto& p : m.at("platforms")) platforms_.push_back({p.at("id"), p.at("name")});
    for (const auto& s : m.at("sensors")) {
      SensorInfo info{s.at("id"), s.at("platform_id"), s.at("model"), {}};
      const auto& rot = s.at("mount").at("rotation");
      if (!rot.is_array() || rot.size() != 9) throw Error(ErrorKind::corrupt, "manifest: mount rotation needs 9 values");
      for (std::size_t i = 0; i < 9; ++i) info.mount.rotation.m[i] = rot[i].get<double>();
      info.mount.translation = vec_from(s.at("mount").at("translation"));
      sensors_.push_back(std::move(info));
    }
    for (const auto& c : m.at("campaigns"))
      campaigns_.push_back({c.at("id"), c.at("platform_id"), c.at("start_time_ns"), c.at("description"),
                            c.at("tags").get<std::vector<std::string>>()});
    for (const auto& p : m.at("packages")) {
      PackageInfo info;
      info.id = p.at("id");
      info.campaign_id = p.at("campaign_id");
      info.sensor_id = p.at("sensor_id");
      info.file = p.at("file");
      info.beam_count = p.at("beam_count");
      info.byte_size = p.at("byte_size");
      info.envelope.min = vec_from(p.at("envelope").at("min"));
      info.envelope.max = vec_from(p.at("envelope").at("max"));
      packages_.push_back(std::move(info));
    }
    next_package_id_ = m.at("next_package_id");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::corrupt, "manifest " + (root_ / kManifest).string() + ": " + e.what());
  }
}

void Store::save_manifest() const {
  json m;
  m["format"] = "beamlink-store";
  m["version"] = kVersion;
  m["next_package_id"] = next_package_id_;
  m["platforms"] = json::array();
  for (const auto& p : platforms_) m["platforms"].push_back({{"id", p.id}, {"name", p.name}});
  m["sensors"] = json::array();
  for (const auto& s : sensors_) {
    json rot = json::array();
    for (const double v : s.mount.rotation.m) rot.push_back(v);
    m["sensors"].push_back({{"id", s.id},
                            {"platform_id", s.platform_id},
                            {"model", s.model},
                            {"mount", {{"rotation", rot}, {"translation", vec_json(s.mount.translation)}}}});
  }
  m["campaigns"] = json::array();
  for (const auto& c : campaigns_)
    m["campaigns"].push_back({{"id", c.id},
                              {"platform_id", c.platform_id},
                              {"start_time_ns", c.start_time_ns},
                              {"description", c.description},
                              {"tags", c.tags}});
  m["packages"] = json::array();
  for (const auto& p : packages_)
    m["packages"].push_back({{"id", p.id},
                             {"campaign_id", p.campaign_id},
                             {"sensor_id", p.sensor_id},
                             {"file", p.file},
                             {"beam_count", p.beam_count},
                             {"byte_size", p.byte_size},
                             {"envelope", {{"min", vec_json(p.envelope.min)}, {"max", vec_json(p.envelope.max)}}}});
  m["strings"] = strings_;
  write_file_atomic(root_ / kManifest, m.dump(1) + "\n");
}

std::uint64_t Store::beam_count() const {
  std::uint64_t n = 0;
  for (const auto& p : packages_) n += p.beam_count;
  return n;
}

std::uint32_t Store::intern(const std::string& s) {
  const auto [it, inserted] = string_ids_.try_emplace(s, static_cast<std::uint32_t>(strings_.size()));
  if (inserted) strings_.push_back(s);
  return it->second;
}

const std::string& Store::string_at(std::uint32_t id) const {
  if (id >= strings_.size()) throw Error(ErrorKind::corrupt, "string id " + std::to_string(id) + " out of range");
  return strings_[id];
}

void Store::add_platform(const Platform& p) {
  StoreLock lock(root_);
  load();
  if (p.id.empty()) throw Error(ErrorKind::invalid_argument, "platform id is empty");
  for (const auto& e : platforms_)
    if (e.id == p.id) throw Error(ErrorKind::duplicate_id, "platform '" + p.id + "' already exists");
  platforms_.push_back(p);
  save_manifest();
}

void Store::add_sensor(const SensorInfo& s) {
  StoreLock lock(root_);
  load();
  if (s.id.empty()) throw Error(ErrorKind::invalid_argument, "sensor id is empty");
  s.mount.validate();
  if (find_sensor(s.id)) throw Error(ErrorKind::duplicate_id, "sensor '" + s.id + "' already exists");
  if (std::none_of(platforms_.begin(), platforms_.end(), [&](const Platform& p) { return p.id == s.platform_id; }))
    throw Error(ErrorKind::unknown_reference, "sensor '" + s.id + "' references unknown platform '" + s.platform_id + "'");
  sensors_.push_back(s);
  save_manifest();
}

void Store::add_campaign(const Campaign& c) {
  StoreLock lock(root_);
  load();
  if (c.id.empty()) throw Error(ErrorKind::invalid_argument, "campaign id is empty");
  if (find_campaign(c.id)) throw Error(ErrorKind::duplicate_id, "campaign '" + c.id + "' already exists");
  if (std::none_of(platforms_.begin(), platforms_.end(), [&](const Platform& p) { return p.id == c.platform_id; }))
    throw Error(ErrorKind::unknown_reference,
                "campaign '" + c.id + "' references unknown platform '" + c.platform_id + "'");
  campaigns_.push_back(c);
  save_manifest();
}

const SensorInfo* Store::find_sensor(const std::string& id) const {
  for (const auto& s : sensors_)
    if (s.id == id) return &s;
  return nullptr;
}

const Campaign* Store::find_campaign(const std::string& id) const {
  for (const auto& c : campaigns_)
    if (c.id == id) return &c;
  return nullptr;
}

std::string Store::encode_package(std::span<const BeamRecord> recs) {
  Writer w;
  w.bytes(kMagic, 4);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint64_t>(recs.size());
  for (const auto& r : recs) w.put<std::uint64_t>(r.beam.beam_id);
  for (const auto& r : recs) w.put<double>(r.beam.origin.x);
  for (const auto& r : recs) w.put<double>(r.beam.origin.y);
  for (const auto& r : recs) w.put<double>(r.beam.origin.z);
  for (const auto& r : recs) w.put<double>(r.beam.direction.x);
  for (const auto& r : recs) w.put<double>(r.beam.direction.y);
  for (const auto& r : recs) w.put<double>(r.beam.direction.z);
  for (const auto& r : recs) w.put<double>(r.beam.range);
  for (const auto& r : recs) w.put<float>(r.beam.intensity);
  for (const auto& r : recs) w.put<std::int64_t>(r.beam.timestamp_ns);
  for (const auto& r : recs) w.put<std::uint32_t>(intern(r.beam.sensor_id));
  for (const auto& r : recs) w.put<std::uint32_t>(intern(r.beam.campaign_id));
  for (const auto& r : recs) w.put<std::uint8_t>(r.enrichment ? 1 : 0);
  auto str_col = [&](auto field) {
    for (const auto& r : recs) w.put<std::uint32_t>(r.enrichment ? field(*r.enrichment) : kAbsent);
  };
  str_col([&](const Enrichment& e) { return intern(e.surface_id); });
  str_col([&](const Enrichment& e) { return intern(e.object_id); });
  str_col([&](const Enrichment& e) { return intern(e.class_name); });
  str_col([&](const Enrichment& e) { return e.function ? intern(*e.function) : kAbsent; });
  auto num_col = [&](double Enrichment::*field) {
    for (const auto& r : recs) w.put<double>(r.enrichment ? (*r.enrichment).*field : 0.0);
  };
  num_col(&Enrichment::zenith);
  num_col(&Enrichment::azimuth);
  num_col(&Enrichment::signed_dist);
  num_col(&Enrichment::min_dist);
  w.put<std::uint64_t>(fnv1a(w.str().data(), w.str().size()));
  return std::move(w.str());
}

std::vector<BeamRecord> Store::read_package(const PackageInfo& p) const {
  const std::string what = "package " + std::to_string(p.id);
  const std::string buf = read_file(root_ / p.file);
  if (buf.size() < 24 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw Error(ErrorKind::corrupt, what + ": bad header");
  std::uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
  if (byteswap_if_big(stored) != fnv1a(buf.data(), buf.size() - 8))
    throw Error(ErrorKind::corrupt, what + ": checksum mismatch");
  Reader r(buf, what);
  r.get<std::uint32_t>();
  if (r.get<std::uint32_t>() != kVersion) throw Error(ErrorKind::corrupt, what + ": unsupported version");
  const auto n = r.get<std::uint64_t>();
  // 133 bytes per beam plus header and checksum.
  if (n != p.beam_count || buf.size() != 16 + n * 133 + 8)
    throw Error(ErrorKind::corrupt, what + ": size does not match its beam count");

  std::vector<BeamRecord> out(n);
  for (auto& x : out) x.beam.beam_id = r.get<std::uint64_t>();
  for (auto& x : out) x.beam.origin.x = r.get<double>();
  for (auto& x : out) x.beam.origin.y = r.get<double>();
  for (auto& x : out) x.beam.origin.z = r.get<double>();
  for (auto& x : out) x.beam.direction.x = r.get<double>();
  for (auto& x : out) x.beam.direction.y = r.get<double>();
  for (auto& x : out) x.beam.direction.z = r.get<double>();
  for (auto& x : out) x.beam.range = r.get<double>();
  for (auto& x : out) x.beam.intensity = r.get<float>();
  for (auto& x : out) x.beam.timestamp_ns = r.get<std::int64_t>();
  for (auto& x : out) x.beam.sensor_id = string_at(r.get<std::uint32_t>());
  for (auto& x : out) x.beam.campaign_id = string_at(r.get<std::uint32_t>());
  for (auto& x : out)
    if (r.get<std::uint8_t>()) x.enrichment.emplace();
  auto str_col = [&](auto assign) {
    for (auto& x : out) {
      const auto id = r.get<std::uint32_t>();
      if (x.enrichment) assign(*x.enrichment, id);
    }
  };
  auto required = [&](std::uint32_t id) -> const std::string& {
    if (id == kAbsent) throw Error(ErrorKind::corrupt, what + ": associated beam lacks a required column");
    return string_at(id);
  };
  str_col([&](Enrichment& e, std::uint32_t id) { e.surface_id = required(id); });
  str_col([&](Enrichment& e, std::uint32_t id) { e.object_id = required(id); });
  str_col([&](Enrichment& e, std::uint32_t id) { e.class_name = required(id); });
  str_col([&](Enrichment& e, std::uint32_t id) {
    if (id != kAbsent) e.function = string_at(id);
  });
  auto num_col = [&](double Enrichment::*field) {
    for (auto& x : out) {
      const double v = r.get<double>();
      if (x.enrichment) (*x.enrichment).*field = v;
    }
  };
  num_col(&Enrichment::zenith);
  num_col(&Enrichment::azimuth);
  num_col(&Enrichment::signed_dist);
  num_col(&Enrichment::min_dist);
  return out;
}

std::vector<std::uint32_t> Store::ingest(std::span<const Beam> beams, std::size_t package_size) {
  if (package_size < 1) throw Error(ErrorKind::invalid_config, "package size must be >= 1");
  StoreLock lock(root_);
  load();

  std::unordered_set<BeamId> ids;
  for (const auto& p : packages_)
    for (const auto& r : read_package(p)) ids.insert(r.beam.beam_id);

  std::map<std::pair<std::string, std::string>, std::vector<const Beam*>> groups;
  for (const auto& b : beams) {
    if (auto defect = beam_defect(b))
      throw Error(ErrorKind::invalid_argument, "beam " + std::to_string(b.beam_id) + ": " + *defect);
    if (!find_sensor(b.sensor_id))
      throw Error(ErrorKind::unknown_reference,
                  "beam " + std::to_string(b.beam_id) + " references unknown sensor '" + b.sensor_id + "'");
    if (!find_campaign(b.campaign_id))
      throw Error(ErrorKind::unknown_reference,
                  "beam " + std::to_string(b.beam_id) + " references unknown campaign '" + b.campaign_id + "'");
    if (!ids.insert(b.beam_id).second)
      throw Error(ErrorKind::duplicate_id, "beam id " + std::to_string(b.beam_id) + " is already stored");
    groups[{b.campaign_id, b.sensor_id}].push_back(&b);
  }

  std::vector<std::uint32_t> created;
  std::vector<std::pair<fs::path, std::string>> files;
  for (auto& [key, members] : groups) {
    std::stable_sort(members.begin(), members.end(), [](const Beam* a, const Beam* b) {
      return a->timestamp_ns != b->timestamp_ns ? a->timestamp_ns < b->timestamp_ns : a->beam_id < b->beam_id;
    });
    const RigidTransform& mount = find_sensor(key.second)->mount;
    const bool identity = mount.rotation.is_identity() && mount.translation == Vec3{};
    for (std::size_t start = 0; start < members.size(); start += package_size) {
      const std::size_t end = std::min(members.size(), start + package_size);
      std::vector<BeamRecord> recs;
      recs.reserve(end - start);
      PackageInfo info;
      info.id = next_package_id_++;
      info.campaign_id = key.first;
      info.sensor_id = key.second;
      info.file = package_file(info.id);
      for (std::size_t k = start; k < end; ++k) {
        Beam b = *members[k];
        if (!identity) {
          b.origin = mount.apply(b.origin);
          b.direction = normalized(mount.rotation * b.direction);
        }
        info.envelope.expand(b.origin);
        info.envelope.expand(reflection(b));
        recs.push_back({std::move(b), std::nullopt});
      }
      info.beam_count = recs.size();
      std::string data = encode_package(recs);
      info.byte_size = data.size();
      files.emplace_back(root_ / info.file, std::move(data));
      packages_.push_back(std::move(info));
      created.push_back(packages_.back().id);
    }
  }
  // Package files first; the manifest makes them visible.
  for (const auto& [path, data] : files) write_file_atomic(path, data);
  save_manifest();
  return created;
}

std::vector<std::uint32_t> Store::query_by_envelope(const Aabb& box) const {
  std::vector<std::uint32_t> out;
  for (const auto& p : packages_)
    if (p.envelope.intersects(box)) out.push_back(p.id);
  return out;
}

std::vector<BeamRecord> Store::read_beams(std::span<const std::uint32_t> package_ids) const {
  std::vector<BeamRecord> out;
  for (const auto id : package_ids) {
    const auto it = std::find_if(packages_.begin(), packages_.end(), [&](const PackageInfo& p) { return p.id == id; });
    if (it == packages_.end()) throw Error(ErrorKind::unknown_reference, "unknown package " + std::to_string(id));
    auto recs = read_package(*it);
    out.insert(out.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  return out;
}

std::vector<BeamRecord> Store::read_all() const {
  std::vector<std::uint32_t> ids;
  for (const auto& p : packages_) ids.push_back(p.id);
  return read_beams(ids);
}

UpdateSummary Store::update_associations(std::span<const BeamRecord> records) {
  StoreLock lock(root_);
  load();

  std::unordered_map<BeamId, const BeamRecord*> updates;
  for (const auto& r : records) updates[r.beam.beam_id] = &r;

  UpdateSummary summary;
  std::vector<std::pair<fs::path, std::string>> files;
  std::size_t matched = 0;
  for (auto& p : packages_) {
    auto recs = read_package(p);
    bool touched = false;
    for (auto& r : recs) {
      const auto it = updates.find(r.beam.beam_id);
      if (it == updates.end()) continue;
      ++matched;
      if (r.enrichment != it->second->enrichment) {
        r.enrichment = it->second->enrichment;
        ++summary.beams_updated;
        touched = true;
      }
    }
    if (!touched) continue;
    std::string data = encode_package(recs);
    p.byte_size = data.size();
    files.emplace_back(root_ / p.file, std::move(data));
  }
  if (matched != updates.size()) {
    std::set<BeamId> known;
    for (const auto& p : packages_)
      for (const auto& r : read_package(p)) known.insert(r.beam.beam_id);
    for (const auto& [id, rec] : updates)
      if (!known.count(id)) throw Error(ErrorKind::unknown_reference, "beam " + std::to_string(id) + " is not in the store");
  }
  // The string table only grows, so the new manifest is valid for old and
  // new package files alike; publish it before swapping packages in.
  save_manifest();
  for (const auto& [path, data] : files) write_file_atomic(path, data);
  summary.packages_rewritten = files.size();
  return summary;
}

}  // namespace beamlink
