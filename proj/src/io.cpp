#include "beamlink/io.hpp"

#include <fstream>
#include <numbers>

#include "beamlink/error.hpp"
#include "beamlink/text.hpp"
#include "json.hpp"

namespace beamlink {

using nlohmann::json;

namespace {

const std::vector<std::string> kBeamColumns = {"beam_id", "ox", "oy", "oz", "dx", "dy",
                                               "dz", "range", "intensity", "timestamp_ns", "sensor_id", "campaign_id"};
const std::vector<std::string> kAssociationColumns = {"surface_id", "object_id", "class_name", "function",
                                                      "zenith",     "azimuth",   "signed_dist", "min_dist"};

Vec3 vec_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number())
    throw Error(ErrorKind::corrupt, what + ": expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

void write_beams_csv(std::ostream& out, std::span<const BeamRecord> records, bool with_associations) {
  std::vector<std::string> header = kBeamColumns;
  if (with_associations) header.insert(header.end(), kAssociationColumns.begin(), kAssociationColumns.end());
  out << text::join(header) << '\n';
  using text::csv_escape;
  using text::format_double;
  for (const auto& r : records) {
    const Beam& b = r.beam;
    out << b.beam_id << ',' << format_double(b.origin.x) << ',' << format_double(b.origin.y) << ','
        << format_double(b.origin.z) << ',' << format_double(b.direction.x) << ',' << format_double(b.direction.y)
        << ',' << format_double(b.direction.z) << ',' << format_double(b.range) << ','
        << text::format_float(b.intensity) << ',' << b.timestamp_ns << ',' << csv_escape(b.sensor_id)
        << ',' << csv_escape(b.campaign_id);
    if (with_associations) {
      if (const auto& e = r.enrichment) {
        out << ',' << csv_escape(e->surface_id) << ',' << csv_escape(e->object_id) << ',' << csv_escape(e->class_name)
            << ',' << (e->function ? csv_escape(*e->function) : "") << ',' << format_double(e->zenith) << ','
            << format_double(e->azimuth) << ',' << format_double(e->signed_dist) << ',' << format_double(e->min_dist);
      } else {
        out << ",,,,,,,,";
      }
    }
    out << '\n';
  }
}

std::vector<BeamRecord> read_beams_csv(std::istream& in) {
  std::string line;
  if (!text::next_line(in, line)) throw Error(ErrorKind::corrupt, "beam table is empty (no header)");
  const auto header = text::csv_split(line);
  std::vector<std::string> full = kBeamColumns;
  full.insert(full.end(), kAssociationColumns.begin(), kAssociationColumns.end());
  const bool assoc = header == full;
  if (!assoc && header != kBeamColumns)
    throw Error(ErrorKind::corrupt, "beam table header must be '" + text::join(kBeamColumns) + "' (+ association columns)");

  std::vector<BeamRecord> out;
  std::size_t line_no = 1;
  while (text::next_line(in, line)) {
    ++line_no;
    const auto f = text::csv_split(line);
    const std::string where = "beam table line " + std::to_string(line_no);
    if (f.size() != header.size())
      throw Error(ErrorKind::corrupt, where + ": expected " + std::to_string(header.size()) + " fields, got " +
                                          std::to_string(f.size()));
    BeamRecord r;
    Beam& b = r.beam;
    b.beam_id = text::parse_uint(f[0], where + " beam_id");
    b.origin = {text::parse_double(f[1], where + " ox"), text::parse_double(f[2], where + " oy"),
                text::parse_double(f[3], where + " oz")};
    b.direction = {text::parse_double(f[4], where + " dx"), text::parse_double(f[5], where + " dy"),
                   text::parse_double(f[6], where + " dz")};
    b.range = text::parse_double(f[7], where + " range");
    b.intensity = text::parse_float(f[8], where + " intensity");
    b.timestamp_ns = text::parse_int(f[9], where + " timestamp_ns");
    b.sensor_id = f[10];
    b.campaign_id = f[11];
    if (assoc) {
      std::size_t filled = 0;
      for (std::size_t k = 12; k < 20; ++k) filled += !f[k].empty() || k == 15;
      if (filled == 8) {
        Enrichment e;
        e.surface_id = f[12];
        e.object_id = f[13];
        e.class_name = f[14];
        if (!f[15].empty()) e.function = f[15];
        e.zenith = text::parse_double(f[16], where + " zenith");
        e.azimuth = text::parse_double(f[17], where + " azimuth");
        e.signed_dist = text::parse_double(f[18], where + " signed_dist");
        e.min_dist = text::parse_double(f[19], where + " min_dist");
        r.enrichment = std::move(e);
      } else if (filled > 1 || !f[15].empty()) {
        throw Error(ErrorKind::corrupt, where + ": association columns must be all present or all empty");
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

Scene read_scene_json(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::corrupt, std::string("scene file is not valid JSON: ") + e.what());
  }
  Scene scene;
  try {
    if (!doc.is_object()) throw Error(ErrorKind::corrupt, "scene file must hold a JSON object");
    if (doc.contains("default_reflectance")) scene.default_reflectance = doc.at("default_reflectance").get<double>();
    if (doc.contains("materials")) {
      for (const auto& m : doc.at("materials")) {
        Material mat{m.at("name").get<std::string>(), m.at("reflectance").get<double>()};
        if (!scene.materials.emplace(mat.name, mat).second)
          throw Error(ErrorKind::duplicate_id, "duplicate material '" + mat.name + "'");
      }
    }
    for (const auto& s : doc.at("surfaces")) {
      const std::string id = s.at("id").get<std::string>();
      std::vector<Vec3> vertices;
      for (const auto& v : s.at("vertices")) vertices.push_back(vec_from(v, "surface '" + id + "' vertex"));
      std::optional<std::string> function, material;
      if (s.contains("function") && !s.at("function").is_null()) function = s.at("function").get<std::string>();
      if (s.contains("material") && !s.at("material").is_null()) material = s.at("material").get<std::string>();
      scene.surfaces.push_back(Surface::create(id, std::move(vertices), s.at("object_id").get<std::string>(),
                                               s.at("class_name").get<std::string>(), function, material));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::corrupt, std::string("scene file: ") + e.what());
  }
  scene.validate();
  return scene;
}

void write_scene_json(std::ostream& out, const Scene& scene) {
  json doc;
  doc["default_reflectance"] = scene.default_reflectance;
  doc["materials"] = json::array();
  for (const auto& [name, m] : scene.materials) doc["materials"].push_back({{"name", name}, {"reflectance", m.reflectance}});
  doc["surfaces"] = json::array();
  for (const auto& s : scene.surfaces) {
    json j = {{"id", s.id()}, {"object_id", s.object_id()}, {"class_name", s.class_name()}};
    if (s.function()) j["function"] = *s.function();
    if (s.material()) j["material"] = *s.material();
    j["vertices"] = json::array();
    for (const auto& v : s.vertices()) j["vertices"].push_back({v.x, v.y, v.z});
    doc["surfaces"].push_back(std::move(j));
  }
  out << doc.dump(1) << '\n';
}

Trajectory read_trajectory_json(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::corrupt, std::string("scene file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("trajectory")) return {};
  std::vector<Pose> poses;
  try {
    for (const auto& p : doc.at("trajectory")) {
      Pose pose;
      pose.timestamp_ns = p.at("timestamp_ns").get<std::int64_t>();
      pose.position = vec_from(p.at("position"), "trajectory position");
      if (p.contains("rotation")) {
        const auto& r = p.at("rotation");
        if (!r.is_array() || r.size() != 9) throw Error(ErrorKind::corrupt, "trajectory rotation needs 9 values");
        for (std::size_t i = 0; i < 9; ++i) pose.rotation.m[i] = r[i].get<double>();
      } else if (p.contains("yaw_deg")) {
        pose.rotation = Mat3::rotation_z(p.at("yaw_deg").get<double>() * std::numbers::pi / 180.0);
      }
      poses.push_back(pose);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::corrupt, std::string("trajectory: ") + e.what());
  }
  return Trajectory(std::move(poses));
}

void write_ground_truth_csv(std::ostream& out, std::span<const SimulatedBeam> beams) {
  out << "beam_id,surface_id\n";
  for (const auto& b : beams) out << b.beam.beam_id << ',' << text::csv_escape(b.surface_id) << '\n';
}

std::map<BeamId, std::string> read_ground_truth_csv(std::istream& in) {
  std::string line;
  if (!text::next_line(in, line) || line != "beam_id,surface_id")
    throw Error(ErrorKind::corrupt, "ground truth table must start with 'beam_id,surface_id'");
  std::map<BeamId, std::string> out;
  std::size_t line_no = 1;
  while (text::next_line(in, line)) {
    ++line_no;
    const auto f = text::csv_split(line);
    const std::string where = "ground truth line " + std::to_string(line_no);
    if (f.size() != 2) throw Error(ErrorKind::corrupt, where + ": expected 2 fields");
    out[text::parse_uint(f[0], where + " beam_id")] = f[1];
  }
  return out;
}

void write_associations_csv(std::ostream& out, std::span<const Association> associations) {
  using text::format_double;
  out << "beam_id,rank,surface_id,object_id,ix,iy,iz,signed_dist,min_dist,zenith,azimuth,azimuth_degenerate\n";
  for (const auto& a : associations) {
    out << a.beam_id << ',' << a.rank << ',' << text::csv_escape(a.surface_id) << ',' << text::csv_escape(a.object_id)
        << ',' << format_double(a.intersection.x) << ',' << format_double(a.intersection.y) << ','
        << format_double(a.intersection.z) << ',' << format_double(a.signed_dist) << ',' << format_double(a.min_dist)
        << ',' << format_double(a.zenith) << ',' << format_double(a.azimuth) << ',' << (a.azimuth_degenerate ? 1 : 0)
        << '\n';
  }
}

std::vector<Association> read_associations_csv(std::istream& in, const SurfaceIndex& index) {
  std::string line;
  if (!text::next_line(in, line) ||
      line != "beam_id,rank,surface_id,object_id,ix,iy,iz,signed_dist,min_dist,zenith,azimuth,azimuth_degenerate")
    throw Error(ErrorKind::corrupt, "association table has an unexpected header");
  std::vector<Association> out;
  std::size_t line_no = 1;
  while (text::next_line(in, line)) {
    ++line_no;
    const auto f = text::csv_split(line);
    const std::string where = "association table line " + std::to_string(line_no);
    if (f.size() != 12) throw Error(ErrorKind::corrupt, where + ": expected 12 fields");
    Association a;
    a.beam_id = text::parse_uint(f[0], where + " beam_id");
    a.rank = static_cast<int>(text::parse_int(f[1], where + " rank"));
    a.surface_id = f[2];
    a.object_id = f[3];
    a.intersection = {text::parse_double(f[4], where + " ix"), text::parse_double(f[5], where + " iy"),
                      text::parse_double(f[6], where + " iz")};
    a.signed_dist = text::parse_double(f[7], where + " signed_dist");
    a.min_dist = text::parse_double(f[8], where + " min_dist");
    a.zenith = text::parse_double(f[9], where + " zenith");
    a.azimuth = text::parse_double(f[10], where + " azimuth");
    if (f[11] != "0" && f[11] != "1") throw Error(ErrorKind::corrupt, where + ": azimuth_degenerate must be 0 or 1");
    a.azimuth_degenerate = f[11] == "1";
    const auto idx = index.find(a.surface_id);
    if (!idx) throw Error(ErrorKind::unknown_reference, where + ": surface '" + a.surface_id + "' is not in the scene");
    a.surface_index = *idx;
    out.push_back(std::move(a));
  }
  return out;
}

Registry read_registry_json(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::corrupt, std::string("registry file is not valid JSON: ") + e.what());
  }
  Registry reg;
  try {
    for (const auto& p : doc.value("platforms", json::array()))
      reg.platforms.push_back({p.at("id").get<std::string>(), p.value("name", std::string())});
    for (const auto& s : doc.value("sensors", json::array())) {
      SensorInfo info{s.at("id").get<std::string>(), s.at("platform_id").get<std::string>(),
                      s.value("model", std::string()), {}};
      if (s.contains("mount")) {
        const auto& m = s.at("mount");
        if (m.contains("rotation")) {
          const auto& r = m.at("rotation");
          if (!r.is_array() || r.size() != 9) throw Error(ErrorKind::corrupt, "sensor mount rotation needs 9 values");
          for (std::size_t i = 0; i < 9; ++i) info.mount.rotation.m[i] = r[i].get<double>();
        }
        if (m.contains("translation")) info.mount.translation = vec_from(m.at("translation"), "sensor mount translation");
      }
      reg.sensors.push_back(std::move(info));
    }
    for (const auto& c : doc.value("campaigns", json::array()))
      reg.campaigns.push_back({c.at("id").get<std::string>(), c.at("platform_id").get<std::string>(),
                               c.value("start_time_ns", std::int64_t{0}), c.value("description", std::string()),
                               c.value("tags", std::vector<std::string>{})});
  } catch (const json::exception& e) {
    throw Error(ErrorKind::corrupt, std::string("registry file: ") + e.what());
  }
  return reg;
}

void write_registry_json(std::ostream& out, const Registry& registry) {
  json doc = {{"platforms", json::array()}, {"sensors", json::array()}, {"campaigns", json::array()}};
  for (const auto& p : registry.platforms) doc["platforms"].push_back({{"id", p.id}, {"name", p.name}});
  for (const auto& s : registry.sensors) {
    const auto& t = s.mount.translation;
    doc["sensors"].push_back({{"id", s.id},
                              {"platform_id", s.platform_id},
                              {"model", s.model},
                              {"mount", {{"rotation", s.mount.rotation.m}, {"translation", {t.x, t.y, t.z}}}}});
  }
  for (const auto& c : registry.campaigns)
    doc["campaigns"].push_back({{"id", c.id},
                                {"platform_id", c.platform_id},
                                {"start_time_ns", c.start_time_ns},
                                {"description", c.description},
                                {"tags", c.tags}});
  out << doc.dump(1) << '\n';
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::missing_input, "cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  return out;
}

}  // namespace beamlink
