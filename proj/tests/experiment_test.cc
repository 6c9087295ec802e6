#include "bimloc/experiment.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "bimloc/error.h"
#include "bimloc/io.h"

namespace bimloc {
namespace {

const std::filesystem::path kConfigDir = BIMLOC_CONFIG_DIR;

nlohmann::json baseline_doc() {
  return nlohmann::json::parse(read_text_file(kConfigDir / "baseline.json"));
}

/// Baseline scene reduced to a few coarse scans.
ExperimentConfig small_config(std::size_t n_scans = 3) {
  auto doc = baseline_doc();
  doc["n_scans"] = n_scans;
  doc["n_executions"] = 2;
  doc["lidar"]["azimuth_step_deg"] = 1.0;
  doc["map_density"] = 150.0;
  return parse_experiment_config(doc, kConfigDir);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no bimloc::Error thrown";
  return ErrorCode::kInvalidArgument;
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"baseline.json", "deviation.json", "clutter.json", "corrupted.json"}) {
    const ExperimentConfig cfg = load_experiment_config(kConfigDir / name);
    EXPECT_EQ(cfg.rig.cameras.size(), 3u) << name;
    EXPECT_EQ(cfg.references.surface_ids.size(), 3u) << name;
    EXPECT_NO_THROW(build_experiment_scene(cfg)) << name;
  }
}

TEST(Config, ValuesAreParsed) {
  const ExperimentConfig cfg = load_experiment_config(kConfigDir / "deviation.json");
  EXPECT_EQ(cfg.n_scans, 50u);
  EXPECT_EQ(cfg.rig.lidar.ring_elevations_deg.size(), 16u);
  EXPECT_DOUBLE_EQ(cfg.rig.lidar.range_noise, 0.01);
  ASSERT_EQ(cfg.deviation.groups.size(), 1u);
  EXPECT_LT((cfg.deviation.groups[0].offset.translation() - Vec3(0, 0.3, 0)).norm(), 1e-12);
  EXPECT_DOUBLE_EQ(cfg.localize.delta, 0.5);
}

TEST(Config, RejectsUnknownFieldsAndBadSchema) {
  auto doc = baseline_doc();
  doc["n_scanz"] = 3;
  try {
    parse_experiment_config(doc, kConfigDir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfigError);
    EXPECT_NE(std::string(e.what()).find("n_scanz"), std::string::npos);
  }
  doc = baseline_doc();
  doc["schema"] = 2;
  EXPECT_EQ(code_of([&] { parse_experiment_config(doc, kConfigDir); }), ErrorCode::kConfigError);
  doc = baseline_doc();
  doc["lidar"]["rings"] = "many";
  EXPECT_EQ(code_of([&] { parse_experiment_config(doc, kConfigDir); }), ErrorCode::kConfigError);
  doc = baseline_doc();
  doc["n_scans"] = 0;
  EXPECT_EQ(code_of([&] { parse_experiment_config(doc, kConfigDir); }), ErrorCode::kConfigError);
}

TEST(Config, MissingFilesAreIoErrors) {
  EXPECT_EQ(code_of([] { load_experiment_config(kConfigDir / "absent.json"); }), ErrorCode::kIoError);
  auto doc = baseline_doc();
  doc["floorplan"] = "absent_plan.json";
  EXPECT_EQ(code_of([&] { parse_experiment_config(doc, kConfigDir); }), ErrorCode::kIoError);
}

TEST(Config, MalformedJsonIsParseError) {
  const auto path = std::filesystem::temp_directory_path() / "bimloc_bad_config.json";
  write_text_file(path, "{ \"schema\": 1, ");
  EXPECT_EQ(code_of([&] { load_experiment_config(path); }), ErrorCode::kParseError);
  std::filesystem::remove(path);
}

TEST(Config, InitialGuessAppliesErrorToRobotPose) {
  ExperimentConfig cfg = small_config();
  cfg.robot_pose = RigidTransform::RotZ(0.5, Vec3(1, 2, 0));
  const RigidTransform g = cfg.initial_guess();
  EXPECT_LT((g.translation() - Vec3(1.05, 1.97, 0)).norm(), 1e-12);
  EXPECT_NEAR(pose_delta(g, cfg.robot_pose).rotation_angle, 0.0174532925199432957, 1e-12);
}

TEST(Scene, DeviationMovesOnlyNamedSurfaces) {
  const ExperimentConfig cfg = load_experiment_config(kConfigDir / "deviation.json");
  const ExperimentScene s = build_experiment_scene(cfg);
  const auto& planned = s.as_planned.at("wall_lower");
  const auto& built = s.as_built.at("wall_lower");
  EXPECT_NEAR(built.triangles()[0].v[0].y() - planned.triangles()[0].v[0].y(), 0.3, 1e-12);
  EXPECT_EQ(s.as_built.at("wall_upper").triangles()[0].v[0], s.as_planned.at("wall_upper").triangles()[0].v[0]);
  EXPECT_EQ(s.references.surfaces().size(), 3u);
}

TEST(Scene, UnknownReferenceFails) {
  auto doc = baseline_doc();
  doc["references"] = {"floor", "wall_upper", "no_such_wall"};
  const ExperimentConfig cfg = parse_experiment_config(doc, kConfigDir);
  EXPECT_EQ(code_of([&] { build_experiment_scene(cfg); }), ErrorCode::kUnknownSurfaceId);
}

TEST(Maps, SelectSurfacesKeepsOnlyRequested) {
  MapCloud c;
  c.surface_names = {"a", "b", "c"};
  for (std::uint32_t i = 0; i < 9; ++i) {
    c.points.emplace_back(i, 0, 0);
    c.normals.push_back(Vec3::UnitX());
    c.surface_index.push_back(i % 3);
  }
  const MapCloud s = select_surfaces(c, {"c", "a"});
  EXPECT_EQ(s.surface_names, (std::vector<std::string>{"c", "a"}));
  ASSERT_EQ(s.size(), 6u);
  EXPECT_EQ(s.points[0], Vec3(0, 0, 0));
  EXPECT_EQ(s.surface_index[0], 1u);
  EXPECT_EQ(s.surface_index[1], 0u);
  EXPECT_EQ(code_of([&] { select_surfaces(c, {"d"}); }), ErrorCode::kUnknownSurfaceId);
}

TEST(Json, TransformRoundTripAndPoseStrings) {
  const RigidTransform t = RigidTransform::FromYawPitchRoll(0.3, 0.1, -0.2, Vec3(1, 2, 3));
  EXPECT_LT((transform_from_json(transform_to_json(t)).matrix() - t.matrix()).cwiseAbs().maxCoeff(),
            1e-12);
  const RigidTransform p = parse_pose_string("1,2,0,90");
  EXPECT_LT((p * Vec3(1, 0, 0) - Vec3(1, 3, 0)).norm(), 1e-12);
  const RigidTransform q = parse_pose_string("0,0,1,1,0,0,0");
  EXPECT_EQ(q.translation(), Vec3(0, 0, 1));
  EXPECT_EQ(code_of([] { parse_pose_string("1,2,3"); }), ErrorCode::kParseError);
  EXPECT_EQ(code_of([] { parse_pose_string("1,2,3,x"); }), ErrorCode::kParseError);
}

TEST(Json, ResultCarriesFailureReasonAndStages) {
  LocalizationResult r;
  r.method = {IcpMode::kSelective, ScanMode::kFiltered};
  r.outcome = Failed{FailureReason::kTooFewReferenceMatches};
  r.stages.resize(2);
  r.stages[1].correspondences = 12;
  const auto j = result_to_json(r);
  EXPECT_EQ(j["outcome"], "failed");
  EXPECT_EQ(j["failure_reason"], "too_few_reference_matches");
  EXPECT_EQ(j["method"]["scan"], "filtered");
  EXPECT_EQ(j["stages"].size(), 2u);
  EXPECT_EQ(j["matches"], 12);
}

TEST(RunMatrix, SixRowsInMethodOrder) {
  const ExperimentConfig cfg = small_config();
  std::size_t sink_calls = 0;
  const MatrixResult r = run_matrix(cfg, [&](const nlohmann::json& j) {
    ++sink_calls;
    EXPECT_TRUE(j.contains("scan_index"));
    EXPECT_TRUE(j.contains("gt_prism"));
  });
  EXPECT_EQ(sink_calls, 6u * cfg.n_scans * cfg.n_executions);
  ASSERT_EQ(r.runs.size(), 6u);
  std::vector<std::string> lines;
  std::stringstream ss(r.report_csv);
  for (std::string line; std::getline(ss, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], report_csv_header());
  const auto methods = all_methods();
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(r.runs[i].method, methods[i]);
    EXPECT_EQ(r.runs[i].records.size(), cfg.n_executions);
    EXPECT_EQ(r.runs[i].per_execution.size(), cfg.n_executions);
    EXPECT_EQ(lines[i + 1].rfind(std::string(to_string(methods[i].icp)) + "," +
                                     std::string(to_string(methods[i].scan)) + ",",
                                 0),
              0u);
  }
  // Clean scene: the full pipeline localizes every scan accurately.
  const MethodRun& ff = r.run({IcpMode::kFull, ScanMode::kFull});
  EXPECT_EQ(ff.averaged.failure_rate_pct, 0.0);
  EXPECT_LT(ff.averaged.accuracy_rmse_mm, 5.0);
}

TEST(RunMatrix, DeterministicForFixedSeed) {
  const ExperimentConfig cfg = small_config(2);
  const std::vector<Method> m = {{IcpMode::kFull, ScanMode::kWeighted}};
  EXPECT_EQ(run_methods(cfg, m).report_csv, run_methods(cfg, m).report_csv);
}

TEST(RunMatrix, FailureRateMatchesRecords) {
  const ExperimentConfig cfg = small_config();
  const MatrixResult r = run_methods(cfg, {{IcpMode::kSelective, ScanMode::kFull}});
  const MethodRun& run = r.runs[0];
  double sum = 0.0;
  for (const auto& exec : run.records) {
    std::size_t failed = 0;
    for (const auto& rec : exec) failed += rec.localized() ? 0 : 1;
    sum += 100.0 * failed / exec.size();
  }
  EXPECT_DOUBLE_EQ(run.averaged.failure_rate_pct, sum / run.records.size());
}

TEST(WriteScene, WritesMeshesAndInventory) {
  const auto dir = std::filesystem::temp_directory_path() / "bimloc_write_scene";
  std::filesystem::remove_all(dir);
  const ExperimentConfig cfg = load_experiment_config(kConfigDir / "clutter.json");
  const SceneFiles files = write_scene(cfg, dir);
  EXPECT_TRUE(std::filesystem::exists(files.as_planned));
  EXPECT_TRUE(std::filesystem::exists(files.as_built));
  EXPECT_TRUE(std::filesystem::exists(files.references));
  EXPECT_EQ(load_model(files.references).surfaces().size(), 3u);
  EXPECT_NE(files.inventory.find("wall_upper,"), std::string::npos);
  EXPECT_NE(files.inventory.find(",clutter,"), std::string::npos);
  EXPECT_NE(files.inventory.find(",actor,"), std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST(LocalizeOnce, RawScanWithoutImages) {
  const ExperimentConfig cfg = small_config();
  const ExperimentScene scene = build_experiment_scene(cfg);
  const TrialFrame frame = generate_trial(scene.scene, cfg.robot_pose, 0, cfg.rig, 9);
  LocalizeOnceInput in;
  in.scan = frame.scan;
  in.model = scene.as_planned;
  in.references = cfg.references;
  in.init = cfg.initial_guess();
  in.method = {IcpMode::kSelective, ScanMode::kFull};
  in.rig = cfg.rig;
  in.params = cfg.localize;
  in.map_density = cfg.map_density;
  const LocalizationResult r = localize_once(in);
  ASSERT_TRUE(r.localized());
  EXPECT_LT(pose_delta(*r.transform(), cfg.robot_pose).translation_norm, 0.03);

  in.images = frame.images;
  in.method = {IcpMode::kFull, ScanMode::kFiltered};
  EXPECT_TRUE(localize_once(in).localized());
  in.images.pop_back();
  EXPECT_THROW(localize_once(in), Error);
}

}  // namespace
}  // namespace bimloc
