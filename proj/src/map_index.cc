#include "bimloc/map_index.h"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>

#include "bimloc/error.h"

namespace bimloc {

MapIndex::MapIndex(MapCloud cloud, std::size_t leaf_size)
    : cloud_(std::move(cloud)), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
  const std::size_t n = cloud_.points.size();
  if (cloud_.normals.size() != n || cloud_.surface_index.size() != n) {
    throw Error(ErrorCode::kInvalidArgument, "map cloud arrays differ in length");
  }
  if (n > std::numeric_limits<std::uint32_t>::max() / 2) {
    throw Error(ErrorCode::kInvalidArgument, "map cloud too large");
  }
  order_.resize(n);
  for (std::size_t i = 0; i < n; ++i) order_[i] = static_cast<std::uint32_t>(i);
  nodes_.reserve(2 * n / leaf_size_ + 2);
  if (n > 0) build(0, static_cast<std::uint32_t>(n));

  std::vector<Mat3> scatter(cloud_.surface_names.size(), Mat3::Zero());
  for (std::size_t i = 0; i < n; ++i) {
    if (cloud_.surface_index[i] >= scatter.size()) {
      throw Error(ErrorCode::kInvalidArgument, "map point references unknown surface");
    }
    scatter[cloud_.surface_index[i]] += cloud_.normals[i] * cloud_.normals[i].transpose();
  }
  for (const auto& s : scatter) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(s);
    surface_directions_.push_back(es.eigenvectors().col(2).normalized());
  }
}

std::int32_t MapIndex::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf_size_) return id;

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(cloud_.points[order_[i]]);
    hi = hi.cwiseMax(cloud_.points[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident, keep as leaf

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     return cloud_.points[a][axis] < cloud_.points[b][axis];
                   });
  const double split = cloud_.points[order_[mid]][axis];
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  Node& node = nodes_[static_cast<std::size_t>(id)];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void MapIndex::search(std::int32_t node_id, const Vec3& q, Neighbor& best, bool& found) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.axis < 0) {
    for (std::uint32_t k = node.begin; k < node.end; ++k) {
      const std::uint32_t i = order_[k];
      const double d2 = (cloud_.points[i] - q).squaredNorm();
      if (d2 < best.sq_distance || (d2 == best.sq_distance && (!found || i < best.index))) {
        best = {i, d2};
        found = true;
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const std::int32_t near = diff < 0.0 ? node.left : node.right;
  const std::int32_t far = diff < 0.0 ? node.right : node.left;
  search(near, q, best, found);
  // <= keeps equal-distance candidates on the far side reachable for tie-breaking.
  if (diff * diff <= best.sq_distance) search(far, q, best, found);
}

std::optional<MapIndex::Neighbor> MapIndex::nearest(const Vec3& query,
                                                    double max_distance) const {
  if (nodes_.empty()) return std::nullopt;
  Neighbor best{0, max_distance * max_distance};
  bool found = false;
  search(0, query, best, found);
  if (!found) return std::nullopt;
  return best;
}

}  // namespace bimloc
