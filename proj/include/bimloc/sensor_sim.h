#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bimloc/geometry.h"
#include "bimloc/model.h"

namespace bimloc {

enum class PointClass : std::uint8_t { kBuilding = 0, kClutter = 1, kActor = 2, kUnknown = 3 };

std::string_view to_string(PointClass c);
PointClass point_class_from_string(std::string_view s);

struct LidarSpec {
  std::vector<double> ring_elevations_deg;
  double azimuth_step_deg = 0.4;
  double max_range = 50.0;   // m
  double range_noise = 0.01;  // m, 1 sigma

  /// 16 rings evenly spaced over [-15, +15] degrees.
  static LidarSpec Default();
  static LidarSpec Uniform(int rings, double min_elevation_deg, double max_elevation_deg);
  std::size_t azimuth_steps() const;
  void validate() const;
};

/// Pinhole camera. Camera frame: z forward, x right, y down. Pixel (u, v)
/// has its center at integer coordinates.
struct CameraSpec {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  RigidTransform extrinsic;  // body <- camera

  /// Square pixels, principal point at the image center.
  static CameraSpec FromHorizontalFov(int width, int height, double hfov_deg,
                                      const RigidTransform& extrinsic);
  /// Horizontal camera at the given height looking along body yaw.
  static RigidTransform LookingAlongYaw(double yaw_rad, const Vec3& position);

  /// Nearest pixel (u, v) of a camera-frame point, or nullopt when the point
  /// is behind the camera or outside the image.
  std::optional<std::pair<int, int>> pixel_of(const Vec3& p_camera) const;
  /// Unit ray direction through the center of pixel (u, v), camera frame.
  Vec3 ray_through(int u, int v) const;
  void validate() const;
};

struct DensityOracleParams {
  double mu_background = 0.8;
  double mu_foreground = 0.2;
  double sigma = 0.1;
  double corruption = 0.05;  // rho: fraction of building pixels drawn as foreground
  std::map<std::string, double> corruption_by_surface;  // per-surface rho override
};

struct DensityImage {
  int width = 0;
  int height = 0;
  std::vector<double> scores;  // row-major, in [0, 1]

  DensityImage() = default;
  DensityImage(int w, int h, double fill = 0.0)
      : width(w), height(h), scores(static_cast<std::size_t>(w) * h, fill) {}
  double at(int u, int v) const { return scores[static_cast<std::size_t>(v) * width + u]; }
  double& at(int u, int v) { return scores[static_cast<std::size_t>(v) * width + u]; }
};

struct PrismSpec {
  Vec3 offset = Vec3(0.0, 0.0, 0.5);  // body frame, m
};

using Trajectory = std::function<RigidTransform(double)>;

struct Actor {
  Surface shape;  // in the actor's own frame
  Trajectory trajectory;
};

/// Robot pose independent constant-angular-rate circle around a center.
Trajectory circular_trajectory(const Vec2& center, double radius, double angular_speed,
                               double phase);

struct Scene {
  BuildingModel as_built;
  std::vector<Surface> clutter;
  std::vector<Actor> actors;

  /// Throws if building, clutter and actor ids overlap.
  void validate() const;
};

struct RawScan {
  std::vector<Vec3> points;         // sensor frame
  std::vector<PointClass> classes;  // parallel to points
  RigidTransform sensor_pose;       // world <- sensor
};

struct RayHit {
  double range = 0.0;
  std::size_t surface = 0;  // index into SceneSnapshot surfaces
};

/// Triangle soup of a scene frozen at one instant, ready for ray queries.
class SceneSnapshot {
 public:
  SceneSnapshot(const Scene& scene, double time);

  std::optional<RayHit> cast(const Vec3& origin, const Vec3& dir, double max_range) const;
  PointClass surface_class(std::size_t s) const { return surfaces_[s].cls; }
  const std::string& surface_id(std::size_t s) const { return surfaces_[s].id; }
  std::size_t surface_count() const { return surfaces_.size(); }

 private:
  struct Tri {
    Vec3 v0, e1, e2;
  };
  struct Entry {
    std::string id;
    PointClass cls;
    Vec3 lo, hi;
    std::size_t begin, end;
  };
  void add(const Surface& s, PointClass cls, const RigidTransform& pose);

  std::vector<Tri> tris_;
  std::vector<Entry> surfaces_;
};

RawScan raycast_scan(const Scene& scene, const RigidTransform& sensor_pose, const LidarSpec& spec,
                     double time, std::uint64_t seed);
RawScan raycast_scan(const SceneSnapshot& snapshot, const RigidTransform& sensor_pose,
                     const LidarSpec& spec, std::uint64_t seed);

DensityImage render_density_image(const Scene& scene, const RigidTransform& camera_pose,
                                  const CameraSpec& spec, const DensityOracleParams& oracle,
                                  double time, std::uint64_t seed);
DensityImage render_density_image(const SceneSnapshot& snapshot, const RigidTransform& camera_pose,
                                  const CameraSpec& spec, const DensityOracleParams& oracle,
                                  std::uint64_t seed);

Vec3 prism_position(const RigidTransform& robot_pose, const PrismSpec& prism);

/// Everything mounted on the robot.
struct SensorRig {
  LidarSpec lidar = LidarSpec::Default();
  RigidTransform lidar_mount = RigidTransform::FromTranslation(Vec3(0.0, 0.0, 0.6));
  std::vector<CameraSpec> cameras = DefaultCameras();  // extrinsics are body <- camera
  DensityOracleParams density;
  PrismSpec prism;
  double scan_period = 0.2;  // s between consecutive scans

  /// Three cameras at yaw 0, +120, -120 degrees.
  static std::vector<CameraSpec> DefaultCameras(int width = 128, int height = 96,
                                                double hfov_deg = 125.0,
                                                double mount_height = 0.7);
};

struct TrialFrame {
  std::size_t index = 0;
  double time = 0.0;
  RawScan scan;
  std::vector<DensityImage> images;  // one per rig camera
  RigidTransform robot_pose;         // ground truth, world <- body
  Vec3 prism = Vec3::Zero();         // ground truth prism position
};

/// splitmix64 finalizer; the per-trial seed scheme is mix(seed + index).
std::uint64_t mix_seed(std::uint64_t x);

TrialFrame generate_trial(const Scene& scene, const RigidTransform& robot_pose,
                          std::size_t index, const SensorRig& rig, std::uint64_t seed);
std::vector<TrialFrame> generate_trial_sequence(const Scene& scene,
                                                const RigidTransform& robot_pose,
                                                std::size_t n_scans, const SensorRig& rig,
                                                std::uint64_t seed);

}  // namespace bimloc
