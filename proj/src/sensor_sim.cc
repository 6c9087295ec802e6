#include "bimloc/sensor_sim.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <unordered_set>

#include "bimloc/error.h"

namespace bimloc {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

double draw_normal(std::mt19937_64& rng, double mean, double sigma) {
  if (sigma <= 0.0) return mean;
  return std::normal_distribution<double>(mean, sigma)(rng);
}

bool ray_box(const Vec3& o, const Vec3& inv_d, const Vec3& lo, const Vec3& hi, double t_max) {
  double t0 = 0.0;
  double t1 = t_max;
  for (int a = 0; a < 3; ++a) {
    double ta = (lo[a] - o[a]) * inv_d[a];
    double tb = (hi[a] - o[a]) * inv_d[a];
    if (ta > tb) std::swap(ta, tb);
    // NaN from 0 * inf means the ray lies in the slab plane; keep it.
    if (!(ta <= t1) && !std::isnan(ta)) return false;
    if (!(tb >= t0) && !std::isnan(tb)) return false;
    if (ta > t0) t0 = ta;
    if (tb < t1) t1 = tb;
  }
  return t0 <= t1;
}

}  // namespace

std::string_view to_string(PointClass c) {
  switch (c) {
    case PointClass::kBuilding: return "building";
    case PointClass::kClutter: return "clutter";
    case PointClass::kActor: return "actor";
    case PointClass::kUnknown: return "unknown";
  }
  return "unknown";
}

PointClass point_class_from_string(std::string_view s) {
  if (s == "building") return PointClass::kBuilding;
  if (s == "clutter") return PointClass::kClutter;
  if (s == "actor") return PointClass::kActor;
  if (s == "unknown") return PointClass::kUnknown;
  throw Error(ErrorCode::kParseError, "unknown point class '" + std::string(s) + "'");
}

LidarSpec LidarSpec::Default() { return Uniform(16, -15.0, 15.0); }

LidarSpec LidarSpec::Uniform(int rings, double min_elevation_deg, double max_elevation_deg) {
  LidarSpec spec;
  if (rings == 1) {
    spec.ring_elevations_deg = {0.5 * (min_elevation_deg + max_elevation_deg)};
    return spec;
  }
  for (int i = 0; i < rings; ++i) {
    spec.ring_elevations_deg.push_back(min_elevation_deg + (max_elevation_deg - min_elevation_deg) *
                                                               i / (rings - 1));
  }
  return spec;
}

std::size_t LidarSpec::azimuth_steps() const {
  return static_cast<std::size_t>(std::llround(360.0 / azimuth_step_deg));
}

void LidarSpec::validate() const {
  if (ring_elevations_deg.empty()) throw Error(ErrorCode::kInvalidArgument, "lidar needs >= 1 ring");
  if (!(max_range > 0.0)) throw Error(ErrorCode::kInvalidArgument, "lidar max range must be > 0");
  if (!(range_noise >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "range noise must be >= 0");
  if (!(azimuth_step_deg > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "azimuth step must be > 0");
  }
}

CameraSpec CameraSpec::FromHorizontalFov(int width, int height, double hfov_deg,
                                         const RigidTransform& extrinsic) {
  CameraSpec c;
  c.width = width;
  c.height = height;
  c.cx = 0.5 * (width - 1);
  c.cy = 0.5 * (height - 1);
  c.fx = 0.5 * width / std::tan(0.5 * hfov_deg * kDegToRad);
  c.fy = c.fx;
  c.extrinsic = extrinsic;
  c.validate();
  return c;
}

RigidTransform CameraSpec::LookingAlongYaw(double yaw_rad, const Vec3& position) {
  const Vec3 forward(std::cos(yaw_rad), std::sin(yaw_rad), 0.0);
  const Vec3 right(std::sin(yaw_rad), -std::cos(yaw_rad), 0.0);
  const Vec3 down(0.0, 0.0, -1.0);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return {r, position};
}

std::optional<std::pair<int, int>> CameraSpec::pixel_of(const Vec3& p) const {
  if (!(p.z() > 0.0)) return std::nullopt;
  const double u = fx * p.x() / p.z() + cx;
  const double v = fy * p.y() / p.z() + cy;
  const double ur = std::round(u);
  const double vr = std::round(v);
  if (ur < 0.0 || vr < 0.0 || ur >= width || vr >= height) return std::nullopt;
  return std::make_pair(static_cast<int>(ur), static_cast<int>(vr));
}

Vec3 CameraSpec::ray_through(int u, int v) const {
  return Vec3((u - cx) / fx, (v - cy) / fy, 1.0).normalized();
}

void CameraSpec::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::kInvalidArgument, "fx, fy must be > 0");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::kInvalidArgument, "empty image size");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw Error(ErrorCode::kInvalidArgument, "principal point outside image");
  }
}

Trajectory circular_trajectory(const Vec2& center, double radius, double angular_speed,
                               double phase) {
  return [=](double t) {
    const double a = phase + angular_speed * t;
    const Vec3 pos(center.x() + radius * std::cos(a), center.y() + radius * std::sin(a), 0.0);
    return RigidTransform::RotZ(a, pos);
  };
}

void Scene::validate() const {
  std::unordered_set<std::string> ids;
  for (const auto& s : as_built.surfaces()) ids.insert(s.id());
  for (const auto& s : clutter) {
    if (!ids.insert(s.id()).second) {
      throw Error(ErrorCode::kInvalidArgument, "clutter id collides with another id: " + s.id());
    }
  }
  for (const auto& a : actors) {
    if (!ids.insert(a.shape.id()).second) {
      throw Error(ErrorCode::kInvalidArgument, "actor id collides with another id: " + a.shape.id());
    }
    if (!a.trajectory) throw Error(ErrorCode::kInvalidArgument, "actor without trajectory");
  }
}

SceneSnapshot::SceneSnapshot(const Scene& scene, double time) {
  for (const auto& s : scene.as_built.surfaces()) add(s, PointClass::kBuilding, {});
  for (const auto& s : scene.clutter) add(s, PointClass::kClutter, {});
  for (const auto& a : scene.actors) add(a.shape, PointClass::kActor, a.trajectory(time));
}

void SceneSnapshot::add(const Surface& s, PointClass cls, const RigidTransform& pose) {
  Entry e{s.id(), cls, Vec3::Constant(std::numeric_limits<double>::infinity()),
          Vec3::Constant(-std::numeric_limits<double>::infinity()), tris_.size(), 0};
  for (const auto& t : s.triangles()) {
    const Vec3 a = pose * t.v[0];
    const Vec3 b = pose * t.v[1];
    const Vec3 c = pose * t.v[2];
    tris_.push_back({a, b - a, c - a});
    for (const Vec3* p : {&a, &b, &c}) {
      e.lo = e.lo.cwiseMin(*p);
      e.hi = e.hi.cwiseMax(*p);
    }
  }
  e.end = tris_.size();
  // Pad so flat boxes keep a non-empty slab.
  e.lo.array() -= 1e-9;
  e.hi.array() += 1e-9;
  surfaces_.push_back(std::move(e));
}

std::optional<RayHit> SceneSnapshot::cast(const Vec3& origin, const Vec3& dir,
                                          double max_range) const {
  const Vec3 inv_d = dir.cwiseInverse();
  std::optional<RayHit> best;
  double best_t = max_range;
  for (std::size_t s = 0; s < surfaces_.size(); ++s) {
    const Entry& e = surfaces_[s];
    if (!ray_box(origin, inv_d, e.lo, e.hi, best_t)) continue;
    for (std::size_t i = e.begin; i < e.end; ++i) {
      // Moller-Trumbore, two-sided.
      const Tri& t = tris_[i];
      const Vec3 p = dir.cross(t.e2);
      const double det = t.e1.dot(p);
      if (std::abs(det) < 1e-14) continue;
      const double inv_det = 1.0 / det;
      const Vec3 s_vec = origin - t.v0;
      const double u = s_vec.dot(p) * inv_det;
      if (u < 0.0 || u > 1.0) continue;
      const Vec3 q = s_vec.cross(t.e1);
      const double v = dir.dot(q) * inv_det;
      if (v < 0.0 || u + v > 1.0) continue;
      const double dist = t.e2.dot(q) * inv_det;
      if (dist > 1e-9 && dist <= best_t) {
        if (!best || dist < best_t) {
          best_t = dist;
          best = RayHit{dist, s};
        }
      }
    }
  }
  return best;
}

RawScan raycast_scan(const SceneSnapshot& snapshot, const RigidTransform& sensor_pose,
                     const LidarSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  RawScan scan;
  scan.sensor_pose = sensor_pose;
  const std::size_t n_az = spec.azimuth_steps();
  scan.points.reserve(spec.ring_elevations_deg.size() * n_az);
  scan.classes.reserve(scan.points.capacity());
  for (double elev_deg : spec.ring_elevations_deg) {
    const double el = elev_deg * kDegToRad;
    for (std::size_t k = 0; k < n_az; ++k) {
      const double az = static_cast<double>(k) * spec.azimuth_step_deg * kDegToRad;
      const Vec3 dir_s(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      const auto hit =
          snapshot.cast(sensor_pose.translation(), sensor_pose.rotate(dir_s), spec.max_range);
      if (!hit) continue;
      const double range = draw_normal(rng, hit->range, spec.range_noise);
      if (!(range > 0.0) || range > spec.max_range) continue;
      scan.points.push_back(range * dir_s);
      scan.classes.push_back(snapshot.surface_class(hit->surface));
    }
  }
  return scan;
}

RawScan raycast_scan(const Scene& scene, const RigidTransform& sensor_pose, const LidarSpec& spec,
                     double time, std::uint64_t seed) {
  return raycast_scan(SceneSnapshot(scene, time), sensor_pose, spec, seed);
}

DensityImage render_density_image(const SceneSnapshot& snapshot, const RigidTransform& camera_pose,
                                  const CameraSpec& spec, const DensityOracleParams& oracle,
                                  std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const auto clamp01 = [](double x) { return std::clamp(x, 0.0, 1.0); };
  std::vector<double> rho(snapshot.surface_count(), oracle.corruption);
  for (std::size_t s = 0; s < rho.size(); ++s) {
    auto it = oracle.corruption_by_surface.find(snapshot.surface_id(s));
    if (it != oracle.corruption_by_surface.end()) rho[s] = it->second;
  }
  DensityImage img(spec.width, spec.height, oracle.mu_foreground);
  for (int v = 0; v < spec.height; ++v) {
    for (int u = 0; u < spec.width; ++u) {
      const Vec3 dir = camera_pose.rotate(spec.ray_through(u, v));
      const auto hit =
          snapshot.cast(camera_pose.translation(), dir, std::numeric_limits<double>::infinity());
      if (!hit) continue;
      bool background = snapshot.surface_class(hit->surface) == PointClass::kBuilding;
      if (background && uni(rng) < rho[hit->surface]) background = false;
      const double mu = background ? oracle.mu_background : oracle.mu_foreground;
      img.at(u, v) = clamp01(draw_normal(rng, mu, oracle.sigma));
    }
  }
  return img;
}

DensityImage render_density_image(const Scene& scene, const RigidTransform& camera_pose,
                                  const CameraSpec& spec, const DensityOracleParams& oracle,
                                  double time, std::uint64_t seed) {
  return render_density_image(SceneSnapshot(scene, time), camera_pose, spec, oracle, seed);
}

Vec3 prism_position(const RigidTransform& robot_pose, const PrismSpec& prism) {
  return robot_pose * prism.offset;
}

std::vector<CameraSpec> SensorRig::DefaultCameras(int width, int height, double hfov_deg,
                                                  double mount_height) {
  std::vector<CameraSpec> cams;
  for (double yaw_deg : {0.0, 120.0, -120.0}) {
    cams.push_back(CameraSpec::FromHorizontalFov(
        width, height, hfov_deg,
        CameraSpec::LookingAlongYaw(yaw_deg * kDegToRad, Vec3(0.0, 0.0, mount_height))));
  }
  return cams;
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

TrialFrame generate_trial(const Scene& scene, const RigidTransform& robot_pose,
                          std::size_t index, const SensorRig& rig, std::uint64_t seed) {
  const std::uint64_t trial_seed = mix_seed(seed + index);
  TrialFrame f;
  f.index = index;
  f.time = static_cast<double>(index) * rig.scan_period;
  f.robot_pose = robot_pose;
  f.prism = prism_position(robot_pose, rig.prism);
  const SceneSnapshot snapshot(scene, f.time);
  f.scan = raycast_scan(snapshot, robot_pose * rig.lidar_mount, rig.lidar, mix_seed(trial_seed));
  for (std::size_t c = 0; c < rig.cameras.size(); ++c) {
    f.images.push_back(render_density_image(snapshot, robot_pose * rig.cameras[c].extrinsic,
                                            rig.cameras[c], rig.density,
                                            mix_seed(trial_seed + 1 + c)));
  }
  return f;
}

std::vector<TrialFrame> generate_trial_sequence(const Scene& scene,
                                                const RigidTransform& robot_pose,
                                                std::size_t n_scans, const SensorRig& rig,
                                                std::uint64_t seed) {
  if (n_scans == 0) throw Error(ErrorCode::kInvalidArgument, "n_scans must be >= 1");
  scene.validate();
  std::vector<TrialFrame> frames;
  frames.reserve(n_scans);
  for (std::size_t i = 0; i < n_scans; ++i) {
    frames.push_back(generate_trial(scene, robot_pose, i, rig, seed));
  }
  return frames;
}

}  // namespace bimloc
