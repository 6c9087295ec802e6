#pragma once

#include <optional>
#include <span>
#include <vector>

#include "bimloc/geometry.h"
#include "bimloc/sensor_sim.h"

namespace bimloc {

/// LiDAR points with optional per-point density scores and ICP weights.
struct Scan {
  std::vector<Vec3> points;
  std::optional<std::vector<double>> densities;
  std::optional<std::vector<double>> weights;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  /// Throws InvalidArgument on length mismatch or out-of-range weights.
  void validate() const;
};

Scan transform_scan(const RigidTransform& t, const Scan& scan);

enum class CombineRule { kMax, kFirstHit };

struct FusionConfig {
  CombineRule rule = CombineRule::kMax;
  bool occlusion_check = false;
  double occlusion_tolerance = 0.1;  // m, depth slack of the z-buffer test
};

struct CameraView {
  DensityImage image;
  CameraSpec spec;
  RigidTransform pose;  // scan frame <- camera
};

struct FusionResult {
  Scan scan;
  std::size_t removed = 0;
  std::vector<std::size_t> kept_indices;  // into the raw scan
};

/// Projects each point into every camera and attaches the density of the
/// nearest pixel. Points no camera covers are dropped.
FusionResult fuse_densities(const RawScan& raw, std::span<const CameraView> views,
                            const FusionConfig& cfg = {});

/// w = 1 for d >= delta, otherwise the point is removed.
Scan weights_binary(const Scan& scan, double delta);

/// w = max(0, a d - delta_prime) with a chosen so that max w = 1.
Scan weights_linear(const Scan& scan, double delta_prime);

inline constexpr double kDefaultDelta = 0.5;
inline constexpr double kDefaultDeltaPrime = 0.1;

}  // namespace bimloc
