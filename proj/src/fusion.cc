#include "bimloc/fusion.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bimloc/error.h"

namespace bimloc {
namespace {

const std::vector<double>& require_densities(const Scan& scan) {
  if (!scan.densities) throw Error(ErrorCode::kMissingDensities, "scan carries no density values");
  return *scan.densities;
}

}  // namespace

void Scan::validate() const {
  if (densities && densities->size() != points.size()) {
    throw Error(ErrorCode::kInvalidArgument, "density count does not match point count");
  }
  if (weights) {
    if (weights->size() != points.size()) {
      throw Error(ErrorCode::kInvalidArgument, "weight count does not match point count");
    }
    for (double w : *weights) {
      if (!(w >= 0.0 && w <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "weight outside [0,1]");
    }
  }
}

Scan transform_scan(const RigidTransform& t, const Scan& scan) {
  Scan out = scan;
  for (auto& p : out.points) p = t * p;
  return out;
}

FusionResult fuse_densities(const RawScan& raw, std::span<const CameraView> views,
                            const FusionConfig& cfg) {
  if (views.empty()) throw Error(ErrorCode::kInvalidArgument, "fusion needs at least one image");
  for (const auto& v : views) {
    v.spec.validate();
    if (v.image.width != v.spec.width || v.image.height != v.spec.height) {
      throw Error(ErrorCode::kInvalidArgument, "density image size does not match its camera");
    }
  }

  const std::size_t n = raw.points.size();
  const std::size_t n_cam = views.size();
  // Camera-frame coordinates and pixel per (camera, point).
  std::vector<RigidTransform> cam_from_scan;
  cam_from_scan.reserve(n_cam);
  for (const auto& v : views) cam_from_scan.push_back(invert(v.pose));

  std::vector<std::vector<float>> zbuffer;
  if (cfg.occlusion_check) {
    zbuffer.resize(n_cam);
    for (std::size_t c = 0; c < n_cam; ++c) {
      zbuffer[c].assign(static_cast<std::size_t>(views[c].spec.width) * views[c].spec.height,
                        std::numeric_limits<float>::infinity());
      for (const auto& p : raw.points) {
        const Vec3 pc = cam_from_scan[c] * p;
        if (auto px = views[c].spec.pixel_of(pc)) {
          float& z = zbuffer[c][static_cast<std::size_t>(px->second) * views[c].spec.width + px->first];
          z = std::min(z, static_cast<float>(pc.z()));
        }
      }
    }
  }

  FusionResult result;
  result.scan.densities.emplace();
  result.scan.points.reserve(n);
  result.scan.densities->reserve(n);
  result.kept_indices.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::optional<double> d;
    for (std::size_t c = 0; c < n_cam; ++c) {
      const Vec3 pc = cam_from_scan[c] * raw.points[i];
      const auto px = views[c].spec.pixel_of(pc);
      if (!px) continue;
      if (cfg.occlusion_check) {
        const float z =
            zbuffer[c][static_cast<std::size_t>(px->second) * views[c].spec.width + px->first];
        if (pc.z() > z + cfg.occlusion_tolerance) continue;
      }
      const double score = views[c].image.at(px->first, px->second);
      d = d ? std::max(*d, score) : score;
      if (cfg.rule == CombineRule::kFirstHit) break;
    }
    if (!d) {
      ++result.removed;
      continue;
    }
    result.scan.points.push_back(raw.points[i]);
    result.scan.densities->push_back(*d);
    result.kept_indices.push_back(i);
  }
  return result;
}

Scan weights_binary(const Scan& scan, double delta) {
  const auto& d = require_densities(scan);
  Scan out;
  out.densities.emplace();
  out.weights.emplace();
  for (std::size_t i = 0; i < scan.size(); ++i) {
    if (d[i] < delta) continue;
    out.points.push_back(scan.points[i]);
    out.densities->push_back(d[i]);
    out.weights->push_back(1.0);
  }
  return out;
}

Scan weights_linear(const Scan& scan, double delta_prime) {
  const auto& d = require_densities(scan);
  if (!(delta_prime > -1.0)) throw Error(ErrorCode::kInvalidArgument, "delta' must be > -1");
  if (d.empty()) throw Error(ErrorCode::kDegenerateDensities, "scan is empty");
  const double max_d = *std::max_element(d.begin(), d.end());
  if (!(max_d > 0.0)) throw Error(ErrorCode::kDegenerateDensities, "max density <= 0");
  const double a = (1.0 + delta_prime) / max_d;
  // Zero weight exactly for d <= zero_at, whatever the rounding of a * d - delta'.
  const double zero_at = delta_prime * max_d / (1.0 + delta_prime);
  Scan out = scan;
  out.weights.emplace(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    double& w = (*out.weights)[i];
    if (d[i] == max_d) {
      w = 1.0;
    } else if (d[i] <= zero_at) {
      w = 0.0;
    } else {
      w = std::clamp(a * d[i] - delta_prime, std::numeric_limits<double>::min(), 1.0);
    }
  }
  return out;
}

}  // namespace bimloc
