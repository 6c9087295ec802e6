#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "bimloc/geometry.h"
#include "bimloc/model.h"

namespace bimloc {

/// Exact nearest-neighbour index (kd-tree) over a sampled map.
///
/// Ties on squared distance resolve to the lowest map-point index, so query
/// results do not depend on tree layout.
class MapIndex {
 public:
  struct Neighbor {
    std::size_t index = 0;
    double sq_distance = 0.0;
  };

  explicit MapIndex(MapCloud cloud, std::size_t leaf_size = 8);

  /// Nearest map point within max_distance (inclusive), if any.
  std::optional<Neighbor> nearest(const Vec3& query, double max_distance) const;

  const MapCloud& cloud() const { return cloud_; }
  std::size_t size() const { return cloud_.points.size(); }
  const Vec3& point(std::size_t i) const { return cloud_.points[i]; }
  const Vec3& normal(std::size_t i) const { return cloud_.normals[i]; }
  std::uint32_t surface(std::size_t i) const { return cloud_.surface_index[i]; }
  std::size_t surface_count() const { return cloud_.surface_names.size(); }
  /// Dominant (sign-free) normal direction of each surface's samples.
  const std::vector<Vec3>& surface_directions() const { return surface_directions_; }

 private:
  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Vec3& q, Neighbor& best, bool& found) const;

  MapCloud cloud_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::vector<Vec3> surface_directions_;
  std::size_t leaf_size_;
};

}  // namespace bimloc
