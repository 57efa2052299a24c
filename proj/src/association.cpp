#include "beamlink/association.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "beamlink/error.hpp"

namespace beamlink {

std::optional<std::string> beam_defect(const Beam& beam) {
  if (!is_finite(beam.origin)) return "non-finite origin";
  if (!is_unit(beam.direction, kUnitTolerance)) return "direction is not a unit vector";
  if (!std::isfinite(beam.range) || !(beam.range > 0.0)) return "range must be finite and > 0";
  if (!(beam.intensity >= 0.0f && beam.intensity <= 255.0f)) return "intensity outside [0, 255]";
  return std::nullopt;
}

std::string_view to_string(CandidateOrdering ordering) {
  switch (ordering) {
    case CandidateOrdering::min_signed_distance: return "min_signed_distance";
    case CandidateOrdering::max_signed_distance: return "max_signed_distance";
  }
  return "unknown";
}

CandidateOrdering parse_ordering(std::string_view text) {
  if (text == "min_signed_distance") return CandidateOrdering::min_signed_distance;
  if (text == "max_signed_distance") return CandidateOrdering::max_signed_distance;
  throw Error(ErrorKind::invalid_config, "unknown candidate ordering '" + std::string(text) + "'");
}

void AssociationConfig::validate() const {
  geom.validate();
  if (max_associations_per_beam < 1)
    throw Error(ErrorKind::invalid_config, "max_associations_per_beam must be >= 1");
}

std::vector<Association> associate_beam(const Beam& beam, const SurfaceIndex& index,
                                        const AssociationConfig& cfg) {
  if (auto defect = beam_defect(beam))
    throw Error(ErrorKind::invalid_argument,
                "beam " + std::to_string(beam.beam_id) + ": " + *defect);

  const Ray ray(beam.origin, beam.direction, beam.range);
  const Segment segment = segment_from_ray(ray, cfg.geom);
  const Vec3& dir = beam.direction;

  struct Hit {
    std::size_t surface;
    Vec3 point;
    double signed_dist;
  };
  std::vector<Hit> hits;
  for (const std::size_t c : index.query_candidates(segment, cfg.geom.assoc_radius, dir)) {
    const auto p = segment_surface_intersection(segment, index.surface(c), cfg.geom.epsilon);
    if (!p) continue;
    hits.push_back({c, *p, signed_distance(segment.center(), *p, dir)});
  }
  if (hits.empty()) return {};

  const bool ascending = cfg.ordering == CandidateOrdering::min_signed_distance;
  std::sort(hits.begin(), hits.end(), [&](const Hit& a, const Hit& b) {
    if (a.signed_dist != b.signed_dist)
      return ascending ? a.signed_dist < b.signed_dist : a.signed_dist > b.signed_dist;
    return index.surface(a.surface).id() < index.surface(b.surface).id();
  });

  const std::size_t keep =
      std::min(hits.size(), static_cast<std::size_t>(cfg.max_associations_per_beam));
  std::vector<Association> out;
  out.reserve(keep);
  for (std::size_t k = 0; k < keep; ++k) {
    const Hit& h = hits[k];
    const Surface& s = index.surface(h.surface);
    const Azimuth az = azimuth_angle(h.point, local_frame(s, beam.origin, cfg.geom.epsilon));
    Association a;
    a.beam_id = beam.beam_id;
    a.surface_index = h.surface;
    a.surface_id = s.id();
    a.object_id = s.object_id();
    a.intersection = h.point;
    a.signed_dist = h.signed_dist;
    a.min_dist = s.distance_to_point(segment.center());
    a.zenith = zenith_angle(dir, s.normal());
    a.azimuth = az.angle;
    a.azimuth_degenerate = az.degenerate;
    a.rank = static_cast<int>(k + 1);
    out.push_back(std::move(a));
  }
  return out;
}

BatchResult associate_batch(std::span<const Beam> beams, const SurfaceIndex& index,
                            const AssociationConfig& cfg, unsigned workers) {
  cfg.validate();
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());

  const std::size_t n = beams.size();
  std::vector<std::vector<Association>> per_beam(n);
  std::vector<char> malformed(n, 0);

  constexpr std::size_t kChunk = 1024;
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::size_t begin = next.fetch_add(kChunk);
      if (begin >= n) return;
      const std::size_t end = std::min(n, begin + kChunk);
      for (std::size_t i = begin; i < end; ++i) {
        if (beam_defect(beams[i])) {
          malformed[i] = 1;
          continue;
        }
        per_beam[i] = associate_beam(beams[i], index, cfg);
      }
    }
  };
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(workers, n / kChunk + 1));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return beams[a].beam_id < beams[b].beam_id; });

  BatchResult result;
  AssociationSummary& s = result.summary;
  s.total = n;
  for (const std::size_t i : order) {
    if (malformed[i]) {
      ++s.malformed;
      continue;
    }
    auto& list = per_beam[i];
    if (list.empty()) {
      ++s.unassociated;
      continue;
    }
    ++s.associated;
    ++s.per_class[index.surface(list.front().surface_index).class_name()];
    for (auto& a : list) result.associations.push_back(std::move(a));
  }
  return result;
}

std::map<std::string, ObjectStats> enrich_objects(std::span<const Association> associations,
                                                  std::span<const Beam> beams) {
  std::unordered_map<BeamId, const Beam*> by_id;
  by_id.reserve(beams.size());
  for (const auto& b : beams) by_id.emplace(b.beam_id, &b);

  struct Samples {
    std::vector<double> intensity, signed_dist, min_dist;
  };
  // Best-ranked association per (object, beam).
  std::map<std::pair<std::string, BeamId>, const Association*> best;
  for (const auto& a : associations) {
    if (!by_id.count(a.beam_id))
      throw Error(ErrorKind::unknown_reference,
                  "association references unknown beam " + std::to_string(a.beam_id));
    auto [it, inserted] = best.try_emplace({a.object_id, a.beam_id}, &a);
    if (!inserted && a.rank < it->second->rank) it->second = &a;
  }

  std::map<std::string, Samples> samples;
  for (const auto& [key, a] : best) {
    Samples& s = samples[key.first];
    s.intensity.push_back(by_id.at(a->beam_id)->intensity);
    s.signed_dist.push_back(a->signed_dist);
    s.min_dist.push_back(a->min_dist);
  }

  std::map<std::string, ObjectStats> out;
  for (auto& [object, s] : samples) {
    ObjectStats st;
    st.object_id = object;
    st.intensity = describe(std::move(s.intensity));
    const Descriptor sd = describe(std::move(s.signed_dist));
    const Descriptor md = describe(std::move(s.min_dist));
    st.signed_dist_mean = sd.mean;
    st.signed_dist_median = sd.median;
    st.min_dist_mean = md.mean;
    st.min_dist_median = md.median;
    out.emplace(object, std::move(st));
  }
  return out;
}

std::vector<BeamRecord> enrich_points(std::span<const Beam> beams,
                                      std::span<const Association> associations,
                                      const SurfaceIndex& surfaces) {
  std::unordered_map<BeamId, const Association*> primary;
  for (const auto& a : associations) {
    auto [it, inserted] = primary.try_emplace(a.beam_id, &a);
    if (!inserted && a.rank < it->second->rank) it->second = &a;
  }

  std::vector<BeamRecord> out;
  out.reserve(beams.size());
  for (const auto& b : beams) {
    BeamRecord rec{b, std::nullopt};
    if (const auto it = primary.find(b.beam_id); it != primary.end()) {
      const Association& a = *it->second;
      const auto idx = surfaces.find(a.surface_id);
      if (!idx)
        throw Error(ErrorKind::corrupt, "association of beam " + std::to_string(a.beam_id) +
                                            " references unknown surface '" + a.surface_id + "'");
      const Surface& s = surfaces.surface(*idx);
      rec.enrichment = Enrichment{s.id(),    s.object_id(), s.class_name(), s.function(),
                                  a.zenith,  a.azimuth,     a.signed_dist,  a.min_dist};
    }
    out.push_back(std::move(rec));
  }
  std::stable_sort(out.begin(), out.end(), [](const BeamRecord& a, const BeamRecord& b) {
    return a.beam.beam_id < b.beam.beam_id;
  });
  return out;
}

std::map<ObservationKey, std::size_t> object_observations(std::span<const BeamRecord> records) {
  std::map<ObservationKey, std::size_t> out;
  for (const auto& r : records) {
    if (!r.enrichment) continue;
    ++out[{r.beam.campaign_id, r.beam.sensor_id, r.enrichment->object_id}];
  }
  return out;
}

}  // namespace beamlink
