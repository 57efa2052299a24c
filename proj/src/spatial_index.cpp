#include "beamlink/spatial_index.hpp"

#include <algorithm>

#include "beamlink/error.hpp"

namespace beamlink {

SurfaceIndex SurfaceIndex::build(std::vector<Surface> surfaces) {
  SurfaceIndex index;
  index.by_id_.reserve(surfaces.size());
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    if (!index.by_id_.emplace(surfaces[i].id(), i).second)
      throw Error(ErrorKind::duplicate_id, "duplicate surface id '" + surfaces[i].id() + "'");
  }
  index.surfaces_ = std::move(surfaces);
  if (index.surfaces_.empty()) return index;

  const auto n = static_cast<std::uint32_t>(index.surfaces_.size());
  index.items_.resize(n);
  std::vector<Vec3> centers(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    index.items_[i] = i;
    centers[i] = index.surfaces_[i].bounds().center();
  }
  index.nodes_.reserve(2 * (n / kLeafCapacity + 1));
  index.build_node(0, n, centers);
  return index;
}

std::uint32_t SurfaceIndex::build_node(std::uint32_t first, std::uint32_t count,
                                       std::vector<Vec3>& centers) {
  const auto node_id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();

  Aabb box;
  Aabb center_box;
  for (std::uint32_t i = first; i < first + count; ++i) {
    box.expand(surfaces_[items_[i]].bounds());
    center_box.expand(centers[items_[i]]);
  }
  nodes_[node_id].box = box;

  if (count <= kLeafCapacity) {
    nodes_[node_id].first = first;
    nodes_[node_id].count = count;
    return node_id;
  }

  const int axis = center_box.longest_axis();
  const auto begin = items_.begin() + first;
  const auto mid = begin + count / 2;
  std::nth_element(begin, mid, begin + count, [&](std::uint32_t a, std::uint32_t b) {
    const double ca = centers[a][axis];
    const double cb = centers[b][axis];
    return ca < cb || (ca == cb && a < b);
  });

  const std::uint32_t left_count = count / 2;
  const std::uint32_t left = build_node(first, left_count, centers);
  const std::uint32_t right = build_node(first + left_count, count - left_count, centers);
  nodes_[node_id].left = left;
  nodes_[node_id].right = right;
  return node_id;
}

std::optional<std::size_t> SurfaceIndex::find(std::string_view id) const {
  const auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> SurfaceIndex::query_candidates(const Segment& segment, double radius,
                                                        const Vec3& beam_dir,
                                                        QueryStats* stats) const {
  std::vector<std::size_t> out;
  const Vec3 a = segment.start();
  const Vec3 b = segment.end();
  visit_segment(
      a, b, radius,
      [&](std::uint32_t i) {
        if (stats) ++stats->exact_tests;
        if (spherocylinder_candidate(segment, surfaces_[i], beam_dir, radius)) out.push_back(i);
      },
      stats);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace beamlink
