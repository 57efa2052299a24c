#include "beamlink/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "beamlink/association.hpp"
#include "beamlink/fingerprint.hpp"
#include "beamlink/io.hpp"
#include "beamlink/registration.hpp"
#include "beamlink/scan_sim.hpp"
#include "beamlink/spatial_index.hpp"
#include "beamlink/store.hpp"
#include "beamlink/text.hpp"

namespace beamlink::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

unsigned resolve_workers(unsigned w) {
  if (w > 0) return w;
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + '"';
}

// Prints the resolved configuration as a config-file section, so the
// printout can be fed back through --config.
class ConfigPrinter {
 public:
  ConfigPrinter(std::ostream& out, const std::string& command) : out_(out) {
    out_ << "# effective configuration\n[" << command << "]\n";
  }
  ~ConfigPrinter() { out_ << '\n'; }

  void str(const std::string& key, const std::string& v) { out_ << key << " = " << quoted(v) << '\n'; }
  void path(const std::string& key, const fs::path& v) { str(key, v.generic_string()); }
  void num(const std::string& key, double v) { out_ << key << " = " << text::format_double(v) << '\n'; }
  void integer(const std::string& key, std::int64_t v) { out_ << key << " = " << v << '\n'; }
  void boolean(const std::string& key, bool v) { out_ << key << " = " << (v ? "true" : "false") << '\n'; }
  void nums(const std::string& key, const std::vector<double>& v) {
    out_ << key << " = [";
    for (std::size_t i = 0; i < v.size(); ++i) out_ << (i ? ", " : "") << text::format_double(v[i]);
    out_ << "]\n";
  }
  void strs(const std::string& key, const std::vector<std::string>& v) {
    out_ << key << " = [";
    for (std::size_t i = 0; i < v.size(); ++i) out_ << (i ? ", " : "") << quoted(v[i]);
    out_ << "]\n";
  }

 private:
  std::ostream& out_;
};

fs::path or_default(const fs::path& p, const fs::path& fallback) { return p.empty() ? fallback : p; }

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorKind::invalid_config, message);
}

Store open_store(const fs::path& root) {
  require(!root.empty(), "--store is required");
  return Store::open(root);
}

SurfaceIndex load_scene_index(const fs::path& path) {
  require(!path.empty(), "--scene is required");
  auto in = open_input(path);
  Scene scene = read_scene_json(in);
  return SurfaceIndex::build(std::move(scene.surfaces));
}

std::vector<Beam> beams_of(const std::vector<BeamRecord>& records) {
  std::vector<Beam> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.beam);
  return out;
}

std::string percent(std::size_t part, std::size_t whole) {
  return whole ? text::format_fixed(100.0 * static_cast<double>(part) / static_cast<double>(whole), 2) : "0.00";
}

std::string aligned(const std::vector<std::vector<std::string>>& rows, std::size_t left_columns) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream os;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      const std::string fill(width[c] - r[c].size(), ' ');
      if (c) os << "  ";
      os << (c < left_columns ? r[c] + fill : fill + r[c]);
    }
    os << '\n';
  }
  return os.str();
}

// ---- shared option groups --------------------------------------------------

struct GridOptions {
  double range_bin_size = 15.0;
  double range_max = 15.0;
  std::vector<double> zenith_bins_deg = {0, 20, 40, 60, 90};
  std::size_t range_bin = 0;
  std::size_t min_count = kDefaultMinCount;

  void add(CLI::App* app) {
    app->add_option("--range-bin-size", range_bin_size, "Range bin width (m)")->capture_default_str();
    app->add_option("--range-max", range_max, "Upper range limit (m)")->capture_default_str();
    app->add_option("--zenith-bins", zenith_bins_deg, "Zenith bin edges (deg)")
        ->delimiter(',')
        ->capture_default_str();
    app->add_option("--range-bin", range_bin, "Range bin used for distances")->capture_default_str();
    app->add_option("--min-count", min_count, "Beams needed for a covered cell")->capture_default_str();
  }

  BinGrid grid() const {
    BinGrid g = BinGrid::standard(range_bin_size, range_max);
    g.zenith_edges = BinGrid::zenith_edges_deg(zenith_bins_deg);
    g.validate();
    require(range_bin < g.range_bins(), "--range-bin " + std::to_string(range_bin) + " is outside the " +
                                            std::to_string(g.range_bins()) + " range bins");
    require(min_count >= 1, "--min-count must be >= 1");
    return g;
  }

  void print(ConfigPrinter& p) const {
    p.num("range-bin-size", range_bin_size);
    p.num("range-max", range_max);
    p.nums("zenith-bins", zenith_bins_deg);
    p.integer("range-bin", static_cast<std::int64_t>(range_bin));
    p.integer("min-count", static_cast<std::int64_t>(min_count));
  }
};

struct FilterOptions {
  std::vector<std::string> campaigns, sensors, objects, classes, functions;
  std::vector<double> range_window, zenith_window_deg;

  void add(CLI::App* app) {
    app->add_option("--campaign", campaigns, "Keep only these campaigns")->delimiter(',');
    app->add_option("--sensor", sensors, "Keep only these sensors")->delimiter(',');
    app->add_option("--object", objects, "Keep only these objects")->delimiter(',');
    app->add_option("--class", classes, "Keep only these classes")->delimiter(',');
    app->add_option("--function", functions, "Keep only these function tags")->delimiter(',');
    app->add_option("--range-window", range_window, "lo,hi range window (m)")->delimiter(',')->expected(2);
    app->add_option("--zenith-window", zenith_window_deg, "lo,hi zenith window (deg)")->delimiter(',')->expected(2);
  }

  FingerprintFilter filter() const {
    FingerprintFilter f;
    auto set_of = [](const std::vector<std::string>& v) -> std::optional<std::set<std::string>> {
      if (v.empty()) return std::nullopt;
      return std::set<std::string>(v.begin(), v.end());
    };
    f.campaigns = set_of(campaigns);
    f.sensors = set_of(sensors);
    f.objects = set_of(objects);
    f.classes = set_of(classes);
    f.functions = set_of(functions);
    if (!range_window.empty()) f.range = Window{range_window[0], range_window[1]};
    if (!zenith_window_deg.empty()) f.zenith = Window{zenith_window_deg[0] * kDeg, zenith_window_deg[1] * kDeg};
    f.validate();
    return f;
  }

  void print(ConfigPrinter& p) const {
    p.strs("campaign", campaigns);
    p.strs("sensor", sensors);
    p.strs("object", objects);
    p.strs("class", classes);
    p.strs("function", functions);
    p.nums("range-window", range_window);
    p.nums("zenith-window", zenith_window_deg);
  }
};

// ---- simulate --------------------------------------------------------------

struct SimulateOptions {
  std::string preset;
  fs::path scene;
  fs::path out;
  std::uint64_t seed = 0;
  std::string campaign = "sim";
  unsigned workers = 0;
  std::uint64_t first_beam_id = 0;
  std::optional<std::string> sensor_id;
  std::optional<int> channels;
  std::optional<double> fov_min, fov_max, angular_step, max_range, rotation_rate, intensity_scale, falloff,
      noise_std, range_noise_std;

  void add(CLI::App* app) {
    app->add_option("--preset", preset, "Built-in scene: city, spectralon, class-separation")
        ->check(CLI::IsMember({"city", "spectralon", "class-separation"}));
    app->add_option("--scene", scene, "Scene file with a trajectory (JSON)");
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--seed", seed, "Noise seed")->capture_default_str();
    app->add_option("--campaign", campaign, "Campaign id of the simulated beams")->capture_default_str();
    app->add_option("--workers", workers, "Worker threads (0 = all cores)")->capture_default_str();
    app->add_option("--first-beam-id", first_beam_id, "Id of the first beam")->capture_default_str();
    app->add_option("--sensor-id", sensor_id, "Sensor id");
    app->add_option("--channels", channels, "Laser channels");
    app->add_option("--fov-min", fov_min, "Lowest channel elevation (deg)");
    app->add_option("--fov-max", fov_max, "Highest channel elevation (deg)");
    app->add_option("--angular-step", angular_step, "Horizontal step (deg)");
    app->add_option("--max-range", max_range, "Maximum range (m)");
    app->add_option("--rotation-rate", rotation_rate, "Revolutions per second");
    app->add_option("--intensity-scale", intensity_scale, "Intensity of a white target at 1 m, normal incidence");
    app->add_option("--falloff", falloff, "Range falloff exponent");
    app->add_option("--noise-std", noise_std, "Intensity noise std");
    app->add_option("--range-noise-std", range_noise_std, "Range noise std (m)");
  }
};

Preset make_preset(const std::string& name) {
  if (name == "city") return city_scene();
  if (name == "spectralon") return spectralon_scene();
  return class_separation_scene();
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  require(o.preset.empty() != o.scene.empty(), "simulate needs exactly one of --preset or --scene");

  Preset p;
  if (!o.preset.empty()) p = make_preset(o.preset);
  SensorModel& s = p.sensor;
  if (o.sensor_id) s.sensor_id = *o.sensor_id;
  if (o.channels) s.channels = *o.channels;
  if (o.fov_min) s.vertical_fov_min_deg = *o.fov_min;
  if (o.fov_max) s.vertical_fov_max_deg = *o.fov_max;
  if (o.angular_step) s.angular_step_h_deg = *o.angular_step;
  if (o.max_range) s.max_range = *o.max_range;
  if (o.rotation_rate) s.rotation_rate_hz = *o.rotation_rate;
  if (o.intensity_scale) s.intensity_scale = *o.intensity_scale;
  if (o.falloff) s.range_falloff_exponent = *o.falloff;
  if (o.noise_std) s.noise_std = *o.noise_std;
  if (o.range_noise_std) s.range_noise_std = *o.range_noise_std;
  s.validate();
  require(!o.campaign.empty(), "--campaign must not be empty");
  const unsigned workers = resolve_workers(o.workers);

  {
    ConfigPrinter c(out, "simulate");
    c.str("preset", o.preset);
    c.path("scene", o.scene);
    c.path("out", o.out);
    c.integer("seed", static_cast<std::int64_t>(o.seed));
    c.str("campaign", o.campaign);
    c.integer("workers", workers);
    c.integer("first-beam-id", static_cast<std::int64_t>(o.first_beam_id));
    c.str("sensor-id", s.sensor_id);
    c.integer("channels", s.channels);
    c.num("fov-min", s.vertical_fov_min_deg);
    c.num("fov-max", s.vertical_fov_max_deg);
    c.num("angular-step", s.angular_step_h_deg);
    c.num("max-range", s.max_range);
    c.num("rotation-rate", s.rotation_rate_hz);
    c.num("intensity-scale", s.intensity_scale);
    c.num("falloff", s.range_falloff_exponent);
    c.num("noise-std", s.noise_std);
    c.num("range-noise-std", s.range_noise_std);
  }

  if (!o.scene.empty()) {
    {
      auto in = open_input(o.scene);
      p.scene = read_scene_json(in);
    }
    auto in = open_input(o.scene);
    p.trajectory = read_trajectory_json(in);
    if (p.trajectory.empty())
      throw Error(ErrorKind::invalid_config, "scene file " + o.scene.string() + " has no trajectory");
  }

  ScanOptions so;
  so.campaign_id = o.campaign;
  so.seed = o.seed;
  so.workers = workers;
  so.first_beam_id = o.first_beam_id;
  const auto sim = simulate_scan(p.scene, s, p.trajectory, so);

  std::vector<BeamRecord> records;
  records.reserve(sim.size());
  for (const auto& b : sim) records.push_back({b.beam, std::nullopt});
  {
    auto f = open_output(o.out / "beams.csv");
    write_beams_csv(f, records, false);
  }
  {
    auto f = open_output(o.out / "ground_truth.csv");
    write_ground_truth_csv(f, sim);
  }
  {
    auto f = open_output(o.out / "scene.json");
    write_scene_json(f, p.scene);
  }
  {
    Registry reg;
    reg.platforms.push_back({"simulator", "synthetic scanner"});
    reg.sensors.push_back({s.sensor_id, "simulator", "simulated", {}});
    reg.campaigns.push_back({o.campaign, "simulator", p.trajectory.poses().front().timestamp_ns, "simulated scan", {}});
    auto f = open_output(o.out / "registry.json");
    write_registry_json(f, reg);
  }

  out << "surfaces: " << p.scene.surfaces.size() << '\n'
      << "poses: " << p.trajectory.poses().size() << '\n'
      << "beams: " << sim.size() << '\n'
      << "wrote: " << (o.out / "beams.csv").generic_string() << ", " << (o.out / "ground_truth.csv").generic_string()
      << ", " << (o.out / "scene.json").generic_string() << ", " << (o.out / "registry.json").generic_string() << '\n';
  return kExitOk;
}

// ---- ingest ----------------------------------------------------------------

struct IngestOptions {
  fs::path store;
  fs::path beams;
  fs::path registry;
  std::size_t package_size = 100000;
  bool register_missing = false;

  void add(CLI::App* app) {
    app->add_option("--store", store, "Store directory (created if absent)")->required();
    app->add_option("--beams", beams, "Beam table (CSV)")->required();
    app->add_option("--registry", registry, "Platforms, sensors and campaigns to register (JSON)");
    app->add_option("--package-size", package_size, "Beams per package")->capture_default_str();
    app->add_flag("--register-missing", register_missing, "Register unknown sensors and campaigns");
  }
};

int cmd_ingest(const IngestOptions& o, std::ostream& out) {
  require(o.package_size > 0, "--package-size must be > 0");
  {
    ConfigPrinter c(out, "ingest");
    c.path("store", o.store);
    c.path("beams", o.beams);
    c.path("registry", o.registry);
    c.integer("package-size", static_cast<std::int64_t>(o.package_size));
    c.boolean("register-missing", o.register_missing);
  }

  std::vector<Beam> beams;
  {
    auto in = open_input(o.beams);
    beams = beams_of(read_beams_csv(in));
  }
  std::optional<Registry> reg;
  if (!o.registry.empty()) {
    auto in = open_input(o.registry);
    reg = read_registry_json(in);
  }

  Store store = fs::exists(o.store / "manifest.json") ? Store::open(o.store) : Store::create(o.store);
  auto has_platform = [&](const std::string& id) {
    return std::any_of(store.platforms().begin(), store.platforms().end(), [&](const Platform& p) { return p.id == id; });
  };
  if (reg) {
    for (const auto& p : reg->platforms)
      if (!has_platform(p.id)) store.add_platform(p);
    for (const auto& s : reg->sensors)
      if (!store.find_sensor(s.id)) store.add_sensor(s);
    for (const auto& c : reg->campaigns)
      if (!store.find_campaign(c.id)) store.add_campaign(c);
  }
  if (o.register_missing) {
    std::map<std::string, std::int64_t> campaign_start;
    std::set<std::string> sensors;
    for (const auto& b : beams) {
      sensors.insert(b.sensor_id);
      auto [it, inserted] = campaign_start.try_emplace(b.campaign_id, b.timestamp_ns);
      if (!inserted) it->second = std::min(it->second, b.timestamp_ns);
    }
    const std::string platform = "default";
    auto ensure_platform = [&] {
      if (!has_platform(platform)) store.add_platform({platform, "registered on ingest"});
    };
    for (const auto& s : sensors)
      if (!store.find_sensor(s)) {
        ensure_platform();
        store.add_sensor({s, platform, "unknown", {}});
      }
    for (const auto& [c, start] : campaign_start)
      if (!store.find_campaign(c)) {
        ensure_platform();
        store.add_campaign({c, platform, start, "", {}});
      }
  }

  const auto ids = store.ingest(beams, o.package_size);
  out << "ingested beams: " << beams.size() << '\n'
      << "new packages: " << ids.size() << '\n'
      << "store beams: " << store.beam_count() << '\n'
      << "store packages: " << store.packages().size() << '\n';
  return kExitOk;
}

// ---- associate -------------------------------------------------------------

struct AssociateOptions {
  fs::path store;
  fs::path scene;
  fs::path out;
  fs::path ground_truth;
  double segment_length = 1.0;
  double assoc_radius = 0.05;
  double epsilon = 1e-6;
  int max_associations = 1;
  std::string ordering = "min_signed_distance";
  unsigned workers = 0;

  void add(CLI::App* app) {
    app->add_option("--store", store, "Store directory")->required();
    app->add_option("--scene", scene, "Scene file (JSON)")->required();
    app->add_option("--out", out, "Association table (default <store>/associations.csv)");
    app->add_option("--ground-truth", ground_truth, "Ground truth table to score against");
    app->add_option("--segment-length", segment_length, "Uncertainty segment length (m)")->capture_default_str();
    app->add_option("--assoc-radius", assoc_radius, "Spherocylinder radius (m)")->capture_default_str();
    app->add_option("--epsilon", epsilon, "Near-vertical and parallel threshold")->capture_default_str();
    app->add_option("--max-associations", max_associations, "Associations kept per beam")->capture_default_str();
    app->add_option("--ordering", ordering, "Candidate ordering")
        ->check(CLI::IsMember({"min_signed_distance", "max_signed_distance"}))
        ->capture_default_str();
    app->add_option("--workers", workers, "Worker threads (0 = all cores)")->capture_default_str();
  }
};

int cmd_associate(const AssociateOptions& o, std::ostream& out) {
  AssociationConfig cfg;
  cfg.geom.segment_length = o.segment_length;
  cfg.geom.assoc_radius = o.assoc_radius;
  cfg.geom.epsilon = o.epsilon;
  cfg.max_associations_per_beam = o.max_associations;
  cfg.ordering = parse_ordering(o.ordering);
  cfg.validate();
  const unsigned workers = resolve_workers(o.workers);
  const fs::path target = or_default(o.out, o.store / "associations.csv");
  {
    ConfigPrinter c(out, "associate");
    c.path("store", o.store);
    c.path("scene", o.scene);
    c.path("out", target);
    c.path("ground-truth", o.ground_truth);
    c.num("segment-length", cfg.geom.segment_length);
    c.num("assoc-radius", cfg.geom.assoc_radius);
    c.num("epsilon", cfg.geom.epsilon);
    c.integer("max-associations", cfg.max_associations_per_beam);
    c.str("ordering", std::string(to_string(cfg.ordering)));
    c.integer("workers", workers);
  }

  const Store store = open_store(o.store);
  const SurfaceIndex index = load_scene_index(o.scene);
  std::optional<std::map<BeamId, std::string>> truth;
  if (!o.ground_truth.empty()) {
    auto in = open_input(o.ground_truth);
    truth = read_ground_truth_csv(in);
  }
  const auto beams = beams_of(store.read_all());
  const BatchResult result = associate_batch(beams, index, cfg, workers);
  {
    auto f = open_output(target);
    write_associations_csv(f, result.associations);
  }

  const auto& sm = result.summary;
  out << "beams: " << sm.total << '\n'
      << "associated: " << sm.associated << " (" << percent(sm.associated, sm.total) << "%)\n"
      << "unassociated: " << sm.unassociated << '\n'
      << "malformed: " << sm.malformed << '\n'
      << "associations: " << result.associations.size() << '\n';
  std::vector<std::vector<std::string>> rows = {{"class", "beams", "share %"}};
  for (const auto& [cls, n] : sm.per_class) rows.push_back({cls, std::to_string(n), percent(n, sm.associated)});
  out << aligned(rows, 1);

  if (truth) {
    std::map<BeamId, const Association*> primary;
    for (const auto& a : result.associations)
      if (a.rank == 1) primary[a.beam_id] = &a;
    std::size_t labelled = 0, correct = 0, wrong = 0;
    for (const auto& b : beams) {
      const auto t = truth->find(b.beam_id);
      if (t == truth->end()) continue;
      ++labelled;
      const auto a = primary.find(b.beam_id);
      if (a == primary.end()) continue;
      if (a->second->surface_id == t->second) ++correct;
      else ++wrong;
    }
    out << "ground truth: " << correct << " of " << labelled << " correct (" << percent(correct, labelled)
        << "%), " << wrong << " wrong\n";
  }
  out << "wrote: " << target.generic_string() << '\n';
  return kExitOk;
}

// ---- enrich ----------------------------------------------------------------

struct EnrichOptions {
  fs::path store;
  fs::path scene;
  fs::path associations;
  fs::path objects_out;

  void add(CLI::App* app) {
    app->add_option("--store", store, "Store directory")->required();
    app->add_option("--scene", scene, "Scene file (JSON)")->required();
    app->add_option("--associations", associations, "Association table (default <store>/associations.csv)");
    app->add_option("--objects-out", objects_out, "Per-object table (default <store>/objects.csv)");
  }
};

void write_objects_csv(std::ostream& out, const std::map<std::string, ObjectStats>& stats, const SurfaceIndex& index) {
  std::map<std::string, std::string> class_of;
  for (const auto& s : index.surfaces()) class_of.try_emplace(s.object_id(), s.class_name());
  using text::format_double;
  out << "object_id,class_name,count,intensity_mean,intensity_std,intensity_median,intensity_q1,intensity_q3,"
         "signed_dist_mean,signed_dist_median,min_dist_mean,min_dist_median\n";
  for (const auto& [id, s] : stats) {
    const Descriptor& d = s.intensity;
    out << text::csv_escape(id) << ',' << text::csv_escape(class_of[id]) << ',' << d.count << ','
        << format_double(d.mean) << ',' << format_double(d.std) << ',' << format_double(d.median) << ','
        << format_double(d.q1) << ',' << format_double(d.q3) << ',' << format_double(s.signed_dist_mean) << ','
        << format_double(s.signed_dist_median) << ',' << format_double(s.min_dist_mean) << ','
        << format_double(s.min_dist_median) << '\n';
  }
}

int cmd_enrich(const EnrichOptions& o, std::ostream& out) {
  const fs::path assoc_path = or_default(o.associations, o.store / "associations.csv");
  const fs::path objects_path = or_default(o.objects_out, o.store / "objects.csv");
  {
    ConfigPrinter c(out, "enrich");
    c.path("store", o.store);
    c.path("scene", o.scene);
    c.path("associations", assoc_path);
    c.path("objects-out", objects_path);
  }

  Store store = open_store(o.store);
  const SurfaceIndex index = load_scene_index(o.scene);
  std::vector<Association> associations;
  {
    auto in = open_input(assoc_path);
    associations = read_associations_csv(in, index);
  }
  const auto beams = beams_of(store.read_all());
  const auto records = enrich_points(beams, associations, index);
  const UpdateSummary upd = store.update_associations(records);
  const auto objects = enrich_objects(associations, beams);
  {
    auto f = open_output(objects_path);
    write_objects_csv(f, objects, index);
  }
  std::size_t enriched = 0;
  for (const auto& r : records) enriched += r.enrichment.has_value();
  out << "beams: " << records.size() << '\n'
      << "enriched beams: " << enriched << '\n'
      << "packages rewritten: " << upd.packages_rewritten << '\n'
      << "objects: " << objects.size() << '\n'
      << "wrote: " << objects_path.generic_string() << '\n';
  return kExitOk;
}

// ---- fingerprint -----------------------------------------------------------

struct FingerprintOptions {
  fs::path store;
  fs::path out;
  unsigned workers = 0;
  GridOptions grid;
  FilterOptions filter;

  void add(CLI::App* app) {
    app->add_option("--store", store, "Store directory")->required();
    app->add_option("--out", out, "Fingerprint table (default <store>/fingerprints.csv)");
    app->add_option("--workers", workers, "Worker threads (0 = all cores)")->capture_default_str();
    grid.add(app);
    filter.add(app);
  }
};

std::string coverage_lines(const std::map<FingerprintKey, Fingerprint>& fps, std::size_t range_bin,
                           std::size_t min_count) {
  std::ostringstream os;
  std::size_t covered = 0;
  for (const auto& [k, fp] : fps) covered += fp.covered(range_bin, min_count);
  os << "covered fingerprints: " << covered << " of " << fps.size() << " (min count " << min_count << ")\n";
  return os.str();
}

int cmd_fingerprint(const FingerprintOptions& o, std::ostream& out) {
  const BinGrid grid = o.grid.grid();
  const FingerprintFilter filter = o.filter.filter();
  const unsigned workers = resolve_workers(o.workers);
  const fs::path target = or_default(o.out, o.store / "fingerprints.csv");
  {
    ConfigPrinter c(out, "fingerprint");
    c.path("store", o.store);
    c.path("out", target);
    c.integer("workers", workers);
    o.grid.print(c);
    o.filter.print(c);
  }

  const Store store = open_store(o.store);
  const auto records = store.read_all();
  const FingerprintSet set = extract_fingerprints(records, grid, filter, workers);
  {
    auto f = open_output(target);
    write_fingerprints_csv(f, set.fingerprints);
  }
  out << "beams counted: " << set.counted << '\n'
      << "beams dropped: " << set.dropped << '\n'
      << "fingerprints: " << set.fingerprints.size() << '\n'
      << coverage_lines(set.fingerprints, o.grid.range_bin, o.grid.min_count)
      << render_fingerprints(set.fingerprints, o.grid.range_bin) << "wrote: " << target.generic_string() << '\n';
  return kExitOk;
}

// ---- distmatrix ------------------------------------------------------------

struct DistmatrixOptions {
  fs::path store;
  fs::path fingerprints;
  fs::path out;
  std::string group_by = "class";
  std::size_t range_bin = 0;
  std::size_t min_count = kDefaultMinCount;
  bool strict = false;

  void add(CLI::App* app) {
    app->add_option("--store", store, "Store directory (locates the default fingerprint table)");
    app->add_option("--fingerprints", fingerprints, "Fingerprint table (default <store>/fingerprints.csv)");
    app->add_option("--out", out, "Matrix table (default next to the fingerprints, matrix_<group>.csv)");
    app->add_option("--group-by", group_by, "Grouping")
        ->check(CLI::IsMember({"class", "function"}))
        ->capture_default_str();
    app->add_option("--range-bin", range_bin, "Range bin used for distances")->capture_default_str();
    app->add_option("--min-count", min_count, "Beams needed for a covered cell")->capture_default_str();
    app->add_flag("--strict-coverage", strict, "Fail if any fingerprint is not fully covered");
  }
};

[[noreturn]] void throw_coverage(const std::map<FingerprintKey, Fingerprint>& fps, const std::vector<FingerprintKey>& keys,
                                 std::size_t range_bin, std::size_t min_count, const std::string& lead) {
  std::string msg = lead;
  std::size_t shown = 0;
  for (const auto& k : keys) {
    if (shown++ == 5) {
      msg += "; ...";
      break;
    }
    const auto& fp = fps.at(k);
    msg += (shown > 1 ? "; " : ": ") + to_string(k) + " zenith bins";
    for (std::size_t j : fp.missing_bins(range_bin, min_count)) msg += ' ' + std::to_string(j);
  }
  throw Error(ErrorKind::coverage, msg);
}

int cmd_distmatrix(const DistmatrixOptions& o, std::ostream& out) {
  require(!o.fingerprints.empty() || !o.store.empty(), "distmatrix needs --fingerprints or --store");
  require(o.min_count >= 1, "--min-count must be >= 1");
  const fs::path source = or_default(o.fingerprints, o.store / "fingerprints.csv");
  const fs::path target = or_default(o.out, source.parent_path() / ("matrix_" + o.group_by + ".csv"));
  {
    ConfigPrinter c(out, "distmatrix");
    c.path("store", o.store);
    c.path("fingerprints", source);
    c.path("out", target);
    c.str("group-by", o.group_by);
    c.integer("range-bin", static_cast<std::int64_t>(o.range_bin));
    c.integer("min-count", static_cast<std::int64_t>(o.min_count));
    c.boolean("strict-coverage", o.strict);
  }

  std::map<FingerprintKey, Fingerprint> fps;
  {
    auto in = open_input(source);
    fps = read_fingerprints_csv(in);
  }
  if (fps.empty()) throw Error(ErrorKind::coverage, "fingerprint table " + source.string() + " is empty");
  const std::size_t bins = fps.begin()->second.grid.range_bins();
  require(o.range_bin < bins,
          "--range-bin " + std::to_string(o.range_bin) + " is outside the " + std::to_string(bins) + " range bins");

  const Grouping grouping = o.group_by == "class" ? Grouping::by_class : Grouping::by_function;
  const GroupMatrix m = group_distance_matrix(grouping, fps, o.range_bin, o.min_count);
  if (m.labels.empty())
    throw_coverage(fps, m.excluded, o.range_bin, o.min_count, "no fingerprint is fully covered");
  if (o.strict && !m.excluded.empty())
    throw_coverage(fps, m.excluded, o.range_bin, o.min_count, "fingerprints lack coverage");
  {
    auto f = open_output(target);
    write_matrix_csv(f, m);
  }
  out << render_matrix(m);
  for (const auto& k : m.excluded) out << "  excluded: " << to_string(k) << '\n';
  out << "wrote: " << target.generic_string() << '\n';
  return kExitOk;
}

// ---- register --------------------------------------------------------------

struct RegisterOptions {
  fs::path source;
  fs::path target;
  fs::path out;
  fs::path aligned_out;
  double inlier_threshold = 1.0;
  int max_iterations = 50;
  double tolerance = 1e-9;
  std::vector<double> init_translation = {0, 0, 0};
  double init_yaw_deg = 0.0;
  unsigned workers = 0;

  void add(CLI::App* app) {
    app->add_option("--source", source, "Source cloud (xyz)")->required();
    app->add_option("--target", target, "Target cloud (xyz)")->required();
    app->add_option("--out", out, "Transform file (JSON)");
    app->add_option("--aligned-out", aligned_out, "Transformed source cloud (xyz)");
    app->add_option("--inlier-threshold", inlier_threshold, "Correspondence distance (m)")->capture_default_str();
    app->add_option("--max-iterations", max_iterations, "Iteration limit")->capture_default_str();
    app->add_option("--tolerance", tolerance, "Convergence threshold on the rmse change (m)")->capture_default_str();
    app->add_option("--init-translation", init_translation, "Initial translation x,y,z (m)")
        ->delimiter(',')
        ->expected(3)
        ->capture_default_str();
    app->add_option("--init-yaw", init_yaw_deg, "Initial rotation about z (deg)")->capture_default_str();
    app->add_option("--workers", workers, "Worker threads (0 = all cores)")->capture_default_str();
  }
};

int cmd_register(const RegisterOptions& o, std::ostream& out) {
  RegistrationParams params;
  params.inlier_threshold = o.inlier_threshold;
  params.max_iterations = o.max_iterations;
  params.convergence_tol = o.tolerance;
  params.workers = resolve_workers(o.workers);
  require(std::isfinite(o.inlier_threshold) && o.inlier_threshold > 0, "--inlier-threshold must be > 0");
  require(o.max_iterations >= 1, "--max-iterations must be >= 1");
  require(std::isfinite(o.tolerance) && o.tolerance >= 0, "--tolerance must be >= 0");
  require(o.init_translation.size() == 3, "--init-translation needs three values");
  RigidTransform init;
  init.rotation = Mat3::rotation_z(o.init_yaw_deg * kDeg);
  init.translation = {o.init_translation[0], o.init_translation[1], o.init_translation[2]};
  {
    ConfigPrinter c(out, "register");
    c.path("source", o.source);
    c.path("target", o.target);
    c.path("out", o.out);
    c.path("aligned-out", o.aligned_out);
    c.num("inlier-threshold", params.inlier_threshold);
    c.integer("max-iterations", params.max_iterations);
    c.num("tolerance", params.convergence_tol);
    c.nums("init-translation", o.init_translation);
    c.num("init-yaw", o.init_yaw_deg);
    c.integer("workers", params.workers);
  }

  PointCloud source, target;
  {
    auto in = open_input(o.source);
    source = read_xyz(in);
  }
  {
    auto in = open_input(o.target);
    target = read_xyz(in);
  }
  const RegistrationResult r = icp_point_to_point(source, target, init, params);
  const AlignmentScore score = score_alignment(source, target, r.transform, params.inlier_threshold);

  const auto& R = r.transform.rotation;
  const auto& t = r.transform.translation;
  using text::format_double;
  out << "iterations: " << r.iterations << '\n'
      << "converged: " << (r.converged ? "true" : "false") << '\n'
      << "fitness: " << format_double(r.fitness) << '\n'
      << "rmse: " << format_double(r.rmse) << '\n'
      << "inliers: " << score.inliers << '\n'
      << "rotation angle deg: " << format_double(r.transform.angle() / kDeg) << '\n'
      << "translation: " << format_double(t.x) << ' ' << format_double(t.y) << ' ' << format_double(t.z) << '\n'
      << "rotation:\n";
  for (int i = 0; i < 3; ++i)
    out << "  " << format_double(R(i, 0)) << ' ' << format_double(R(i, 1)) << ' ' << format_double(R(i, 2)) << '\n';
  out << "rmse history:";
  for (double v : r.rmse_history) out << ' ' << format_double(v);
  out << '\n';

  if (!o.out.empty()) {
    auto f = open_output(o.out);
    f << "{\n \"rotation\": [";
    for (std::size_t i = 0; i < 9; ++i) f << (i ? ", " : "") << format_double(R.m[i]);
    f << "],\n \"translation\": [" << format_double(t.x) << ", " << format_double(t.y) << ", " << format_double(t.z)
      << "],\n \"fitness\": " << format_double(r.fitness) << ",\n \"rmse\": " << format_double(r.rmse)
      << ",\n \"iterations\": " << r.iterations << ",\n \"converged\": " << (r.converged ? "true" : "false")
      << "\n}\n";
  }
  if (!o.aligned_out.empty()) {
    PointCloud aligned_cloud = source;
    for (auto& p : aligned_cloud.points) p = r.transform.apply(p);
    auto f = open_output(o.aligned_out);
    write_xyz(f, aligned_cloud);
  }
  return kExitOk;
}

// ---- report ----------------------------------------------------------------

struct ReportOptions {
  fs::path store;
  fs::path out_dir;
  unsigned workers = 0;
  GridOptions grid;
  FilterOptions filter;

  void add(CLI::App* app) {
    app->add_option("--store", store, "Store directory")->required();
    app->add_option("--out-dir", out_dir, "Report directory (default <store>/report)");
    app->add_option("--workers", workers, "Worker threads (0 = all cores)")->capture_default_str();
    grid.add(app);
    filter.add(app);
  }
};

int cmd_report(const ReportOptions& o, std::ostream& out) {
  const BinGrid grid = o.grid.grid();
  const FingerprintFilter filter = o.filter.filter();
  const unsigned workers = resolve_workers(o.workers);
  const fs::path dir = or_default(o.out_dir, o.store / "report");
  {
    ConfigPrinter c(out, "report");
    c.path("store", o.store);
    c.path("out-dir", dir);
    c.integer("workers", workers);
    o.grid.print(c);
    o.filter.print(c);
  }

  const Store store = open_store(o.store);
  const auto records = store.read_all();
  std::ostringstream rep;

  // Association summary.
  std::map<std::string, std::size_t> per_class;
  std::size_t associated = 0;
  for (const auto& r : records)
    if (r.enrichment) {
      ++associated;
      ++per_class[r.enrichment->class_name];
    }
  {
    auto f = open_output(dir / "association_summary.csv");
    f << "class_name,beams,share\n";
    std::vector<std::vector<std::string>> rows = {{"class", "beams", "share %"}};
    for (const auto& [cls, n] : per_class) {
      f << text::csv_escape(cls) << ',' << n << ','
        << text::format_double(static_cast<double>(n) / static_cast<double>(associated)) << '\n';
      rows.push_back({cls, std::to_string(n), percent(n, associated)});
    }
    rows.push_back({"(associated)", std::to_string(associated), percent(associated, records.size())});
    rows.push_back({"(all beams)", std::to_string(records.size()), "100.00"});
    rep << "== association summary ==\n" << aligned(rows, 1) << '\n';
  }

  // Observations per (campaign, sensor, object).
  {
    const auto obs = object_observations(records);
    auto f = open_output(dir / "observations.csv");
    f << "campaign_id,sensor_id,object_id,points\n";
    std::vector<std::vector<std::string>> rows = {{"campaign", "sensor", "object", "points"}};
    for (const auto& [k, n] : obs) {
      const auto& [c, s, obj] = k;
      f << text::csv_escape(c) << ',' << text::csv_escape(s) << ',' << text::csv_escape(obj) << ',' << n << '\n';
      rows.push_back({c, s, obj, std::to_string(n)});
    }
    rep << "== observations ==\n" << aligned(rows, 3) << '\n';
  }

  // Fingerprints: Q3 per zenith bin.
  const FingerprintSet set = extract_fingerprints(records, grid, filter, workers);
  {
    auto f = open_output(dir / "fingerprints.csv");
    write_fingerprints_csv(f, set.fingerprints);
  }
  {
    auto f = open_output(dir / "fingerprint_q3.csv");
    f << "campaign_id,sensor_id,object_id,class_name,zenith_lo_deg,zenith_hi_deg,count,q3\n";
    for (const auto& [k, fp] : set.fingerprints)
      for (std::size_t j = 0; j < grid.zenith_bins(); ++j) {
        const Descriptor& d = fp.cell(o.grid.range_bin, j);
        f << text::csv_escape(k.campaign_id) << ',' << text::csv_escape(k.sensor_id) << ','
          << text::csv_escape(k.object_id) << ',' << text::csv_escape(fp.class_name) << ','
          << text::format_double(o.grid.zenith_bins_deg[j]) << ',' << text::format_double(o.grid.zenith_bins_deg[j + 1])
          << ',' << d.count << ',';
        if (d.count) f << text::format_double(d.q3);
        f << '\n';
      }
  }
  rep << "== fingerprints (q3) ==\n"
      << coverage_lines(set.fingerprints, o.grid.range_bin, o.grid.min_count)
      << render_fingerprints(set.fingerprints, o.grid.range_bin) << '\n';

  // Distance matrices.
  for (const auto& [name, grouping] :
       {std::pair{std::string("class"), Grouping::by_class}, std::pair{std::string("function"), Grouping::by_function}}) {
    const GroupMatrix m = group_distance_matrix(grouping, set.fingerprints, o.grid.range_bin, o.grid.min_count);
    auto f = open_output(dir / ("matrix_" + name + ".csv"));
    write_matrix_csv(f, m);
    rep << "== mean q3 distance by " << name << " ==\n"
        << (m.labels.empty() ? std::string("(no covered fingerprints)\n") : render_matrix(m)) << '\n';
  }

  const std::string report = rep.str();
  {
    auto f = open_output(dir / "report.txt");
    f << report;
  }
  out << report << "wrote: " << dir.generic_string() << '\n';
  return kExitOk;
}

// ---- export ----------------------------------------------------------------

struct ExportOptions {
  fs::path store;
  fs::path out;
  std::string format = "features";
  std::vector<std::string> columns = {"intensity", "range", "zenith", "azimuth"};

  void add(CLI::App* app) {
    app->add_option("--store", store, "Store directory")->required();
    app->add_option("--out", out, "Output table (default <store>/features.csv or <store>/beams.csv)");
    app->add_option("--format", format, "features or beams")
        ->check(CLI::IsMember({"features", "beams"}))
        ->capture_default_str();
    app->add_option("--columns", columns,
                    "Feature columns: intensity, range, zenith, azimuth, campaign, sensor")
        ->delimiter(',')
        ->capture_default_str();
  }
};

int cmd_export(const ExportOptions& o, std::ostream& out) {
  if (o.format == "features") {
    static const std::set<std::string> known = {"intensity", "range", "zenith", "azimuth", "campaign", "sensor"};
    for (const auto& c : o.columns)
      if (!known.count(c)) throw Error(ErrorKind::unknown_column, "unknown feature column '" + c + "'");
  }
  const fs::path target = or_default(o.out, o.store / (o.format == "features" ? "features.csv" : "beams.csv"));
  {
    ConfigPrinter c(out, "export");
    c.path("store", o.store);
    c.path("out", target);
    c.str("format", o.format);
    c.strs("columns", o.columns);
  }

  const Store store = open_store(o.store);
  auto records = store.read_all();
  std::stable_sort(records.begin(), records.end(),
                   [](const BeamRecord& a, const BeamRecord& b) { return a.beam.beam_id < b.beam.beam_id; });
  auto f = open_output(target);
  if (o.format == "features") {
    const FeatureTable t = export_feature_matrix(records, o.columns);
    write_feature_csv(f, t);
    out << "rows: " << t.rows.size() << '\n' << "columns: " << t.header.size() << '\n';
  } else {
    write_beams_csv(f, records, true);
    out << "rows: " << records.size() << '\n';
  }
  out << "wrote: " << target.generic_string() << '\n';
  return kExitOk;
}

std::string escape_message(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out;
}

void print_error(std::ostream& err, std::string_view kind, const std::string& message) {
  err << "error: kind=" << kind << " message=\"" << escape_message(message) << "\"\n";
}

}  // namespace

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_config:
    case ErrorKind::unknown_column:
      return kExitConfig;
    case ErrorKind::missing_input:
      return kExitMissing;
    case ErrorKind::coverage:
      return kExitCoverage;
    case ErrorKind::busy:
      return kExitBusy;
    case ErrorKind::invalid_argument:
    case ErrorKind::duplicate_id:
    case ErrorKind::unknown_reference:
    case ErrorKind::empty_pairs:
    case ErrorKind::singular:
    case ErrorKind::corrupt:
      return kExitData;
    case ErrorKind::io:
      return kExitOther;
  }
  return kExitOther;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"beamlink: LiDAR beam association, enrichment and radiometric fingerprints", "beamlink"};
  app.set_config("--config", "", "Config file (TOML or INI, one section per subcommand); flags override it");
  app.require_subcommand(1);

  SimulateOptions sim;
  IngestOptions ing;
  AssociateOptions asc;
  EnrichOptions enr;
  FingerprintOptions fpr;
  DistmatrixOptions dm;
  RegisterOptions reg;
  ReportOptions rep;
  ExportOptions exp;

  std::vector<std::pair<CLI::App*, std::function<int()>>> commands;
  auto add = [&](const char* name, const char* help, auto& opts, auto fn) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->configurable();
    opts.add(sub);
    commands.emplace_back(sub, [&opts, fn, &out] { return fn(opts, out); });
  };
  add("simulate", "Simulate a scan of a preset or scene file", sim, cmd_simulate);
  add("ingest", "Load a beam table into the store", ing, cmd_ingest);
  add("associate", "Associate stored beams with scene surfaces", asc, cmd_associate);
  add("enrich", "Write associations into the store and summarise objects", enr, cmd_enrich);
  add("fingerprint", "Extract radiometric fingerprints from enriched beams", fpr, cmd_fingerprint);
  add("distmatrix", "Mean Q3 distances between classes or functions", dm, cmd_distmatrix);
  add("register", "Align two point clouds with ICP", reg, cmd_register);
  add("report", "Association summary, fingerprints and distance matrices", rep, cmd_report);
  add("export", "Export per-beam features or the enriched beam table", exp, cmd_export);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    print_error(err, "invalid_config", e.what());
    return kExitConfig;
  }

  try {
    for (const auto& [sub, fn] : commands)
      if (sub->parsed()) return fn();
  } catch (const Error& e) {
    print_error(err, to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    print_error(err, "internal", e.what());
    return kExitOther;
  }
  return kExitOther;
}

}  // namespace beamlink::cli
