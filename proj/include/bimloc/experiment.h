#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bimloc/eval.h"
#include "bimloc/fusion.h"
#include "bimloc/map_index.h"
#include "bimloc/model.h"
#include "bimloc/registration.h"
#include "bimloc/sensor_sim.h"

namespace bimloc {

struct ClutterBox {
  std::string id;
  Vec3 min_corner = Vec3::Zero();
  Vec3 max_corner = Vec3::Zero();
};

/// Box-shaped actor walking a circle around `center`.
struct ActorSpec {
  std::string id;
  Vec3 size = Vec3(0.5, 0.5, 1.8);
  Vec2 center = Vec2::Zero();
  double radius = 1.5;
  double angular_speed = 0.5;  // rad/s
  double phase = 0.0;          // rad
};

/// Everything needed to reproduce one experiment. Loaded from a single
/// JSON document (`"schema": 1`).
struct ExperimentConfig {
  Floorplan2D floorplan;
  ReferenceSet references;
  DeviationSpec deviation;
  Vec3 ground_truth_offset = Vec3::Zero();
  std::vector<ClutterBox> clutter;
  std::vector<ActorSpec> actors;
  RigidTransform robot_pose;
  Vec3 initial_translation_error = Vec3(0.05, -0.03, 0.0);
  double initial_yaw_error = 0.0174532925199432957;  // rad
  SensorRig rig;
  FusionConfig fusion;
  LocalizeParams localize;
  double map_density = kDefaultMapDensity;
  std::uint64_t map_seed = 7;
  std::size_t n_scans = 300;
  std::size_t n_executions = 3;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "out";

  void validate() const;
  RigidTransform initial_guess() const;
};

inline constexpr int kConfigSchemaVersion = 1;

/// Relative file references inside the document resolve against base_dir.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc,
                                         const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct ExperimentScene {
  BuildingModel as_planned;
  BuildingModel as_built;
  BuildingModel references;
  Scene scene;
  std::vector<std::string> reference_ids;
};

ExperimentScene build_experiment_scene(const ExperimentConfig& cfg);

/// Sampled maps of the planned model; the reference map reuses the samples
/// of the reference surfaces.
struct LocalizationMaps {
  MapIndex full;
  MapIndex reference;
};

MapCloud select_surfaces(const MapCloud& cloud, const std::vector<std::string>& ids);
LocalizationMaps build_maps(const BuildingModel& as_planned, const std::vector<std::string>& refs,
                            double density, std::uint64_t seed);

/// Camera views expressed in the LiDAR frame, ready for fusion.
std::vector<CameraView> camera_views(const SensorRig& rig, const std::vector<DensityImage>& images);

/// Fused scan moved into the robot body frame.
FusionResult fuse_into_body(const RawScan& raw, const std::vector<DensityImage>& images,
                            const SensorRig& rig, const FusionConfig& fusion);

struct MethodRun {
  Method method;
  std::vector<MetricsReport> per_execution;
  MetricsReport averaged;
  std::vector<std::vector<TrialRecord>> records;  // [execution][scan]
};

struct MatrixResult {
  std::vector<MethodRun> runs;  // in all_methods() order
  std::string report_csv;

  const MethodRun& run(const Method& m) const;
};

/// Optional hook invoked with one JSON object per localized scan, in
/// (execution, scan, method) order.
using TrialSink = std::function<void(const nlohmann::json&)>;

MatrixResult run_matrix(const ExperimentConfig& cfg, const TrialSink& sink = {});
/// Only the given methods; other rows are absent from the result.
MatrixResult run_methods(const ExperimentConfig& cfg, const std::vector<Method>& methods,
                         const TrialSink& sink = {});

std::string format_report_csv(const std::vector<MethodRun>& runs);

nlohmann::json transform_to_json(const RigidTransform& t);
RigidTransform transform_from_json(const nlohmann::json& j);
nlohmann::json result_to_json(const LocalizationResult& r);

/// Parses "x,y,z,yaw_deg" or "x,y,z,qw,qx,qy,qz".
RigidTransform parse_pose_string(const std::string& text);

/// Files written by build-scene.
struct SceneFiles {
  std::filesystem::path as_planned;
  std::filesystem::path as_built;
  std::filesystem::path references;
  std::string inventory;
};

SceneFiles write_scene(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct LocalizeOnceInput {
  RawScan scan;                       // sensor frame
  std::vector<DensityImage> images;   // one per rig camera, may be empty for scan=full
  BuildingModel model;                // as planned
  ReferenceSet references;
  RigidTransform init;                // body pose guess
  Method method;
  SensorRig rig;
  FusionConfig fusion;
  LocalizeParams params;
  double map_density = kDefaultMapDensity;
  std::uint64_t map_seed = 7;
};

LocalizationResult localize_once(const LocalizeOnceInput& in);

}  // namespace bimloc
