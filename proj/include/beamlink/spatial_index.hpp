#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "beamlink/aabb.hpp"
#include "beamlink/geometry.hpp"

namespace beamlink {

/// Traversal counters for a single query.
struct QueryStats {
  std::size_t nodes_visited = 0;
  std::size_t leaves_visited = 0;
  std::size_t exact_tests = 0;
};

/// Bounding-volume hierarchy over an immutable surface table.
///
/// Leaves hold at most kLeafCapacity surfaces; inner nodes split at the median
/// box center along the longest axis of their center bounds. The structure is
/// read-only after build, so concurrent queries need no locking.
class SurfaceIndex {
 public:
  static constexpr std::size_t kLeafCapacity = 8;

  struct Node {
    Aabb box;
    std::uint32_t left = 0;   // child indices, valid for inner nodes
    std::uint32_t right = 0;
    std::uint32_t first = 0;  // range into the item order, valid for leaves
    std::uint32_t count = 0;
    bool leaf() const { return count > 0; }
  };

  SurfaceIndex() = default;

  /// Throws Error(duplicate_id) naming the first repeated surface id.
  static SurfaceIndex build(std::vector<Surface> surfaces);

  std::size_t size() const { return surfaces_.size(); }
  bool empty() const { return surfaces_.empty(); }
  const std::vector<Surface>& surfaces() const { return surfaces_; }
  const Surface& surface(std::size_t index) const { return surfaces_[index]; }
  std::optional<std::size_t> find(std::string_view id) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  /// Surface indices in leaf order; leaf `first/count` ranges refer to this.
  const std::vector<std::uint32_t>& leaf_items() const { return items_; }

  /// Indices of all surfaces satisfying spherocylinder_candidate, in
  /// ascending index order.
  std::vector<std::size_t> query_candidates(const Segment& segment, double radius,
                                            const Vec3& beam_dir,
                                            QueryStats* stats = nullptr) const;

  /// Calls `visit(surface_index)` for every surface in a leaf whose box,
  /// inflated by `inflate`, overlaps the closed segment [a, b].
  template <typename Visitor>
  void visit_segment(const Vec3& a, const Vec3& b, double inflate, Visitor&& visit,
                     QueryStats* stats = nullptr) const;

 private:
  std::uint32_t build_node(std::uint32_t first, std::uint32_t count,
                           std::vector<Vec3>& centers);

  std::vector<Surface> surfaces_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> items_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

template <typename Visitor>
void SurfaceIndex::visit_segment(const Vec3& a, const Vec3& b, double inflate, Visitor&& visit,
                                 QueryStats* stats) const {
  if (nodes_.empty()) return;
  std::uint32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (stats) ++stats->nodes_visited;
    if (!node.box.inflated(inflate).intersects_segment(a, b)) continue;
    if (node.leaf()) {
      if (stats) ++stats->leaves_visited;
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) visit(items_[i]);
      continue;
    }
    stack[top++] = node.right;
    stack[top++] = node.left;
  }
}

}  // namespace beamlink
