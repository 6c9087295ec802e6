#include "bimloc/experiment.h"

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "bimloc/error.h"
#include "bimloc/io.h"

namespace bimloc {
namespace {

using nlohmann::json;

constexpr double kDegToRad = std::numbers::pi / 180.0;

[[noreturn]] void config_fail(const std::string& field, const std::string& msg) {
  throw Error(ErrorCode::kConfigError, "field '" + field + "': " + msg);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    config_fail(path + key, e.what());
  }
}

Vec3 get_vec3(const json& j, const char* key, const Vec3& fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() ||
      !v[2].is_number()) {
    config_fail(path + key, "expected [x, y, z]");
  }
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

Vec2 get_vec2(const json& j, const char* key, const Vec2& fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    config_fail(path + key, "expected [x, y]");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
  if (!j.is_object()) config_fail(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.contains(k)) config_fail(path + k, "unknown field");
  }
}

// "translation" plus either "yaw_deg" or "rotation_wxyz".
RigidTransform parse_pose(const json& j, const std::string& path) {
  check_keys(j, {"translation", "yaw_deg", "rotation_wxyz"}, path);
  const Vec3 t = get_vec3(j, "translation", Vec3::Zero(), path);
  if (j.contains("rotation_wxyz")) {
    const auto q = get_or<std::vector<double>>(j, "rotation_wxyz", {}, path);
    if (q.size() != 4) config_fail(path + "rotation_wxyz", "expected 4 values");
    return RigidTransform::FromQuaternion({q[0], q[1], q[2], q[3]}, t);
  }
  return RigidTransform::RotZ(get_or(j, "yaw_deg", 0.0, path) * kDegToRad, t);
}

IcpConfig parse_icp(const json& j, IcpConfig cfg, const std::string& path) {
  check_keys(j,
             {"max_iterations", "max_correspondence_distance", "translation_epsilon",
              "rotation_epsilon", "kernel", "huber_scale", "min_correspondences"},
             path);
  cfg.max_iterations = get_or(j, "max_iterations", cfg.max_iterations, path);
  cfg.max_correspondence_distance =
      get_or(j, "max_correspondence_distance", cfg.max_correspondence_distance, path);
  cfg.translation_epsilon = get_or(j, "translation_epsilon", cfg.translation_epsilon, path);
  cfg.rotation_epsilon = get_or(j, "rotation_epsilon", cfg.rotation_epsilon, path);
  cfg.huber_scale = get_or(j, "huber_scale", cfg.huber_scale, path);
  cfg.min_correspondences = get_or(j, "min_correspondences", cfg.min_correspondences, path);
  const auto kernel = get_or<std::string>(j, "kernel", "huber", path);
  if (kernel == "huber") {
    cfg.kernel = CostKernel::kHuber;
  } else if (kernel == "squared") {
    cfg.kernel = CostKernel::kSquared;
  } else {
    config_fail(path + "kernel", "must be huber|squared");
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    config_fail(path.empty() ? "icp" : path.substr(0, path.size() - 1), e.what());
  }
  return cfg;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

Surface actor_shape(const ActorSpec& a) {
  const Vec3 half(0.5 * a.size.x(), 0.5 * a.size.y(), 0.0);
  return make_box_surface(a.id, Vec3(-half.x(), -half.y(), 0.0),
                          Vec3(half.x(), half.y(), a.size.z()));
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

void ExperimentConfig::validate() const {
  if (n_scans < 1) config_fail("n_scans", "must be >= 1");
  if (n_executions < 1) config_fail("n_executions", "must be >= 1");
  if (!(map_density > 0.0)) config_fail("map_density", "must be > 0");
  if (!(rig.scan_period >= 0.0)) config_fail("scan_period", "must be >= 0");
  if (floorplan.walls.empty()) config_fail("floorplan", "no wall segments");
  if (references.surface_ids.empty()) config_fail("references", "empty reference set");
  rig.lidar.validate();
  for (const auto& c : rig.cameras) c.validate();
  localize.icp.validate();
  localize.selective.validate();
}

RigidTransform ExperimentConfig::initial_guess() const {
  return {Eigen::AngleAxisd(initial_yaw_error, Vec3::UnitZ()).toRotationMatrix() *
              robot_pose.rotation(),
          robot_pose.translation() + initial_translation_error};
}

ExperimentConfig parse_experiment_config(const json& doc, const std::filesystem::path& base_dir) {
  check_keys(doc,
             {"schema", "floorplan", "references", "deviation", "ground_truth_offset", "clutter",
              "actors", "robot_pose", "initial_error", "lidar", "cameras", "density", "prism",
              "scan_period", "fusion", "icp", "selective", "map_density", "map_seed", "n_scans",
              "n_executions", "seed", "output_dir"},
             "");
  ExperimentConfig cfg;
  const int schema = get_or(doc, "schema", -1, "");
  if (schema != kConfigSchemaVersion) {
    config_fail("schema", "expected " + std::to_string(kConfigSchemaVersion));
  }

  if (!doc.contains("floorplan")) config_fail("floorplan", "required");
  const json& fp = doc.at("floorplan");
  try {
    if (fp.is_string()) {
      const auto path = resolve(base_dir, fp.get<std::string>());
      if (!std::filesystem::exists(path)) {
        throw Error(ErrorCode::kIoError, "field 'floorplan': file not found: " + path.string());
      }
      cfg.floorplan = load_floorplan(path);
    } else {
      cfg.floorplan = parse_floorplan_json(fp.dump());
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfigError || e.code() == ErrorCode::kIoError) throw;
    config_fail("floorplan", e.what());
  }

  if (!doc.contains("references")) config_fail("references", "required");
  const json& rf = doc.at("references");
  try {
    if (rf.is_string()) {
      const auto path = resolve(base_dir, rf.get<std::string>());
      if (!std::filesystem::exists(path)) {
        throw Error(ErrorCode::kIoError, "field 'references': file not found: " + path.string());
      }
      cfg.references = load_reference_set(path);
    } else {
      cfg.references = parse_reference_set_json(rf.dump());
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfigError || e.code() == ErrorCode::kIoError) throw;
    config_fail("references", e.what());
  }

  if (doc.contains("deviation")) {
    for (std::size_t i = 0; i < doc.at("deviation").size(); ++i) {
      const json& g = doc.at("deviation")[i];
      const std::string path = "deviation[" + std::to_string(i) + "].";
      check_keys(g, {"surfaces", "translation", "yaw_deg", "rotation_wxyz"}, path);
      DeviationGroup group;
      group.surface_ids = get_or<std::vector<std::string>>(g, "surfaces", {}, path);
      json pose = g;
      pose.erase("surfaces");
      group.offset = parse_pose(pose, path);
      cfg.deviation.groups.push_back(std::move(group));
    }
  }
  cfg.ground_truth_offset = get_vec3(doc, "ground_truth_offset", Vec3::Zero(), "");

  if (doc.contains("clutter")) {
    for (std::size_t i = 0; i < doc.at("clutter").size(); ++i) {
      const json& c = doc.at("clutter")[i];
      const std::string path = "clutter[" + std::to_string(i) + "].";
      check_keys(c, {"id", "min", "max"}, path);
      ClutterBox box;
      box.id = get_or<std::string>(c, "id", "clutter_" + std::to_string(i), path);
      box.min_corner = get_vec3(c, "min", Vec3::Zero(), path);
      box.max_corner = get_vec3(c, "max", Vec3::Zero(), path);
      if (!(box.max_corner.array() > box.min_corner.array()).all()) {
        config_fail(path + "max", "must exceed min on every axis");
      }
      cfg.clutter.push_back(std::move(box));
    }
  }
  if (doc.contains("actors")) {
    for (std::size_t i = 0; i < doc.at("actors").size(); ++i) {
      const json& a = doc.at("actors")[i];
      const std::string path = "actors[" + std::to_string(i) + "].";
      check_keys(a, {"id", "size", "center", "radius", "angular_speed", "phase_deg"}, path);
      ActorSpec s;
      s.id = get_or<std::string>(a, "id", "actor_" + std::to_string(i), path);
      s.size = get_vec3(a, "size", s.size, path);
      s.center = get_vec2(a, "center", s.center, path);
      s.radius = get_or(a, "radius", s.radius, path);
      s.angular_speed = get_or(a, "angular_speed", s.angular_speed, path);
      s.phase = get_or(a, "phase_deg", 0.0, path) * kDegToRad;
      cfg.actors.push_back(std::move(s));
    }
  }

  if (doc.contains("robot_pose")) cfg.robot_pose = parse_pose(doc.at("robot_pose"), "robot_pose.");
  if (doc.contains("initial_error")) {
    const json& e = doc.at("initial_error");
    check_keys(e, {"translation", "yaw_deg"}, "initial_error.");
    cfg.initial_translation_error =
        get_vec3(e, "translation", cfg.initial_translation_error, "initial_error.");
    cfg.initial_yaw_error =
        get_or(e, "yaw_deg", cfg.initial_yaw_error / kDegToRad, "initial_error.") * kDegToRad;
  }

  if (doc.contains("lidar")) {
    const json& l = doc.at("lidar");
    const std::string path = "lidar.";
    check_keys(l,
               {"rings", "min_elevation_deg", "max_elevation_deg", "azimuth_step_deg", "max_range",
                "range_noise", "mount"},
               path);
    LidarSpec spec = LidarSpec::Uniform(get_or(l, "rings", 16, path),
                                        get_or(l, "min_elevation_deg", -15.0, path),
                                        get_or(l, "max_elevation_deg", 15.0, path));
    spec.azimuth_step_deg = get_or(l, "azimuth_step_deg", spec.azimuth_step_deg, path);
    spec.max_range = get_or(l, "max_range", spec.max_range, path);
    spec.range_noise = get_or(l, "range_noise", spec.range_noise, path);
    try {
      spec.validate();
    } catch (const Error& e) {
      config_fail("lidar", e.what());
    }
    cfg.rig.lidar = spec;
    cfg.rig.lidar_mount =
        RigidTransform::FromTranslation(get_vec3(l, "mount", cfg.rig.lidar_mount.translation(), path));
  }

  {
    const json cams = doc.value("cameras", json::object());
    const std::string path = "cameras.";
    check_keys(cams, {"width", "height", "hfov_deg", "mount_height", "yaws_deg"}, path);
    const int w = get_or(cams, "width", 128, path);
    const int h = get_or(cams, "height", 96, path);
    const double hfov = get_or(cams, "hfov_deg", 125.0, path);
    const double z = get_or(cams, "mount_height", 0.7, path);
    const auto yaws = get_or<std::vector<double>>(cams, "yaws_deg", {0.0, 120.0, -120.0}, path);
    if (w <= 0 || h <= 0) config_fail("cameras", "image size must be positive");
    if (!(hfov > 0.0 && hfov < 180.0)) config_fail("cameras.hfov_deg", "must be in (0, 180)");
    cfg.rig.cameras.clear();
    for (double yaw : yaws) {
      cfg.rig.cameras.push_back(CameraSpec::FromHorizontalFov(
          w, h, hfov, CameraSpec::LookingAlongYaw(yaw * kDegToRad, Vec3(0.0, 0.0, z))));
    }
  }

  if (doc.contains("density")) {
    const json& d = doc.at("density");
    const std::string path = "density.";
    check_keys(d, {"mu_background", "mu_foreground", "sigma", "corruption", "corruption_by_surface"},
               path);
    auto& o = cfg.rig.density;
    o.mu_background = get_or(d, "mu_background", o.mu_background, path);
    o.mu_foreground = get_or(d, "mu_foreground", o.mu_foreground, path);
    o.sigma = get_or(d, "sigma", o.sigma, path);
    o.corruption = get_or(d, "corruption", o.corruption, path);
    o.corruption_by_surface =
        get_or<std::map<std::string, double>>(d, "corruption_by_surface", {}, path);
  }
  cfg.rig.prism.offset = get_vec3(doc, "prism", cfg.rig.prism.offset, "");
  cfg.rig.scan_period = get_or(doc, "scan_period", cfg.rig.scan_period, "");

  if (doc.contains("fusion")) {
    const json& f = doc.at("fusion");
    const std::string path = "fusion.";
    check_keys(f, {"delta", "delta_prime", "rule", "occlusion_check", "occlusion_tolerance"}, path);
    cfg.localize.delta = get_or(f, "delta", cfg.localize.delta, path);
    cfg.localize.delta_prime = get_or(f, "delta_prime", cfg.localize.delta_prime, path);
    const auto rule = get_or<std::string>(f, "rule", "max", path);
    if (rule == "max") {
      cfg.fusion.rule = CombineRule::kMax;
    } else if (rule == "first-hit") {
      cfg.fusion.rule = CombineRule::kFirstHit;
    } else {
      config_fail(path + "rule", "must be max|first-hit");
    }
    cfg.fusion.occlusion_check = get_or(f, "occlusion_check", false, path);
    cfg.fusion.occlusion_tolerance =
        get_or(f, "occlusion_tolerance", cfg.fusion.occlusion_tolerance, path);
  }

  if (doc.contains("icp")) cfg.localize.icp = parse_icp(doc.at("icp"), {}, "icp.");
  cfg.localize.selective.full_icp = cfg.localize.icp;
  cfg.localize.selective.selective_icp = cfg.localize.icp;
  if (doc.contains("selective")) {
    const json& s = doc.at("selective");
    const std::string path = "selective.";
    check_keys(s,
               {"tau_trans", "tau_rot", "min_reference_matches", "parallel_tolerance",
                "segment_with_full_model", "icp"},
               path);
    auto& sel = cfg.localize.selective;
    sel.tau_trans = get_or(s, "tau_trans", sel.tau_trans, path);
    sel.tau_rot = get_or(s, "tau_rot", sel.tau_rot, path);
    sel.min_reference_matches = get_or(s, "min_reference_matches", sel.min_reference_matches, path);
    sel.parallel_tolerance = get_or(s, "parallel_tolerance", sel.parallel_tolerance, path);
    sel.segment_with_full_model =
        get_or(s, "segment_with_full_model", sel.segment_with_full_model, path);
    if (s.contains("icp")) sel.selective_icp = parse_icp(s.at("icp"), sel.selective_icp, "selective.icp.");
  }

  cfg.map_density = get_or(doc, "map_density", cfg.map_density, "");
  cfg.map_seed = get_or(doc, "map_seed", cfg.map_seed, "");
  cfg.n_scans = get_or(doc, "n_scans", cfg.n_scans, "");
  cfg.n_executions = get_or(doc, "n_executions", cfg.n_executions, "");
  cfg.seed = get_or(doc, "seed", cfg.seed, "");
  cfg.output_dir = get_or<std::string>(doc, "output_dir", cfg.output_dir.string(), "");
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kIoError, "config file not found: " + path.string());
  }
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  return parse_experiment_config(doc, path.parent_path());
}

ExperimentScene build_experiment_scene(const ExperimentConfig& cfg) {
  ExperimentScene s;
  s.as_planned = extrude_floorplan(cfg.floorplan);
  s.reference_ids = validate_reference_set(s.as_planned, cfg.references,
                                           cfg.localize.selective.parallel_tolerance)
                        .surface_ids();
  s.references = s.as_planned.subset(s.reference_ids);
  s.as_built = apply_deviation(s.as_planned, cfg.deviation);
  s.as_built = BuildingModel(s.as_built.surfaces(), "as_built");
  s.scene.as_built = s.as_built;
  for (const auto& c : cfg.clutter) {
    s.scene.clutter.push_back(make_box_surface(c.id, c.min_corner, c.max_corner));
  }
  for (const auto& a : cfg.actors) {
    s.scene.actors.push_back(
        {actor_shape(a), circular_trajectory(a.center, a.radius, a.angular_speed, a.phase)});
  }
  s.scene.validate();
  return s;
}

MapCloud select_surfaces(const MapCloud& cloud, const std::vector<std::string>& ids) {
  MapCloud out;
  out.sampling_density = cloud.sampling_density;
  std::vector<std::int64_t> remap(cloud.surface_names.size(), -1);
  for (const auto& id : ids) {
    const auto it = std::find(cloud.surface_names.begin(), cloud.surface_names.end(), id);
    if (it == cloud.surface_names.end()) throw Error(ErrorCode::kUnknownSurfaceId, id);
    remap[static_cast<std::size_t>(it - cloud.surface_names.begin())] =
        static_cast<std::int64_t>(out.surface_names.size());
    out.surface_names.push_back(id);
  }
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const std::int64_t s = remap[cloud.surface_index[i]];
    if (s < 0) continue;
    out.points.push_back(cloud.points[i]);
    out.normals.push_back(cloud.normals[i]);
    out.surface_index.push_back(static_cast<std::uint32_t>(s));
  }
  return out;
}

LocalizationMaps build_maps(const BuildingModel& as_planned, const std::vector<std::string>& refs,
                            double density, std::uint64_t seed) {
  MapCloud cloud = sample_model(as_planned, density, seed);
  MapCloud ref_cloud = select_surfaces(cloud, refs);
  return {MapIndex(std::move(cloud)), MapIndex(std::move(ref_cloud))};
}

std::vector<CameraView> camera_views(const SensorRig& rig, const std::vector<DensityImage>& images) {
  if (images.size() != rig.cameras.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "expected " + std::to_string(rig.cameras.size()) + " density images, got " +
                    std::to_string(images.size()));
  }
  std::vector<CameraView> views;
  const RigidTransform lidar_from_body = invert(rig.lidar_mount);
  for (std::size_t c = 0; c < images.size(); ++c) {
    views.push_back({images[c], rig.cameras[c], lidar_from_body * rig.cameras[c].extrinsic});
  }
  return views;
}

FusionResult fuse_into_body(const RawScan& raw, const std::vector<DensityImage>& images,
                            const SensorRig& rig, const FusionConfig& fusion) {
  const auto views = camera_views(rig, images);
  FusionResult r = fuse_densities(raw, views, fusion);
  r.scan = transform_scan(rig.lidar_mount, r.scan);
  return r;
}

const MethodRun& MatrixResult::run(const Method& m) const {
  for (const auto& r : runs) {
    if (r.method == m) return r;
  }
  throw Error(ErrorCode::kInvalidArgument, "method not part of this run");
}

std::string format_report_csv(const std::vector<MethodRun>& runs) {
  std::string csv = report_csv_header() + "\n";
  for (const auto& r : runs) csv += report_csv_row(r.method, r.averaged) + "\n";
  return csv;
}

json transform_to_json(const RigidTransform& t) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r.push_back(t.rotation()(i, k));
  }
  return {{"r", r}, {"t", vec_json(t.translation())}};
}

RigidTransform transform_from_json(const json& j) {
  const auto r = j.at("r").get<std::vector<double>>();
  const auto t = j.at("t").get<std::vector<double>>();
  if (r.size() != 9 || t.size() != 3) throw Error(ErrorCode::kParseError, "transform needs r[9], t[3]");
  Mat3 m;
  m << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
  return {m, Vec3(t[0], t[1], t[2])};
}

json result_to_json(const LocalizationResult& r) {
  json j;
  j["method"] = {{"icp", to_string(r.method.icp)}, {"scan", to_string(r.method.scan)}};
  j["outcome"] = r.localized() ? "localized" : "failed";
  const IcpResult* last = r.stages.empty() ? nullptr : &r.stages.back();
  if (const RigidTransform* t = r.transform()) {
    j["transform"] = transform_to_json(*t);
  } else if (last != nullptr) {
    j["transform"] = transform_to_json(last->transform);
  }
  j["iterations"] = last != nullptr ? last->iterations : 0;
  j["residual_m"] = last != nullptr ? last->residual_rms : 0.0;
  j["matches"] = last != nullptr ? last->correspondences : 0;
  if (auto f = r.failure()) j["failure_reason"] = to_string(*f);
  json stages = json::array();
  for (const auto& st : r.stages) {
    stages.push_back({{"transform", transform_to_json(st.transform)},
                      {"converged", st.converged},
                      {"iterations", st.iterations},
                      {"residual_m", st.residual_rms},
                      {"matches", st.correspondences}});
  }
  j["stages"] = std::move(stages);
  return j;
}

RigidTransform parse_pose_string(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParseError, "bad pose component '" + item + "'");
    }
  }
  if (v.size() == 4) return RigidTransform::RotZ(v[3] * kDegToRad, Vec3(v[0], v[1], v[2]));
  if (v.size() == 7) return RigidTransform::FromQuaternion({v[3], v[4], v[5], v[6]}, {v[0], v[1], v[2]});
  throw Error(ErrorCode::kParseError, "pose needs x,y,z,yaw_deg or x,y,z,qw,qx,qy,qz");
}

MatrixResult run_methods(const ExperimentConfig& cfg, const std::vector<Method>& methods,
                         const TrialSink& sink) {
  cfg.validate();
  const ExperimentScene scene = build_experiment_scene(cfg);
  const LocalizationMaps maps =
      build_maps(scene.as_planned, scene.reference_ids, cfg.map_density, cfg.map_seed);
  const Vec3 gt_prism = ground_truth_correction(prism_position(cfg.robot_pose, cfg.rig.prism),
                                                cfg.ground_truth_offset);

  std::vector<MethodRun> runs;
  for (const auto& m : methods) runs.push_back({m, {}, {}, {}});

  for (std::size_t e = 0; e < cfg.n_executions; ++e) {
    // Trial k of execution e uses seed + e * n_scans + k.
    const std::uint64_t exec_seed = cfg.seed + e * cfg.n_scans;
    std::vector<RigidTransform> prev(runs.size(), cfg.initial_guess());
    for (auto& r : runs) r.records.emplace_back();
    for (std::size_t k = 0; k < cfg.n_scans; ++k) {
      const TrialFrame frame = generate_trial(scene.scene, cfg.robot_pose, k, cfg.rig, exec_seed);
      Scan fused;
      if (cfg.rig.cameras.empty()) {
        fused.points = transform_points(cfg.rig.lidar_mount, frame.scan.points);
      } else {
        fused = fuse_into_body(frame.scan, frame.images, cfg.rig, cfg.fusion).scan;
      }
      for (std::size_t m = 0; m < runs.size(); ++m) {
        LocalizationResult result;
        std::string error;
        try {
          result = localize(fused, maps.full, maps.reference, prev[m], runs[m].method, cfg.localize);
        } catch (const Error& err) {
          // Scan variants that leave nothing to align (e.g. every density
          // filtered out) count as failed scans, not as run errors.
          result.method = runs[m].method;
          result.outcome = Failed{FailureReason::kFullIcpDiverged};
          error = err.what();
        }
        if (const RigidTransform* t = result.transform()) prev[m] = *t;
        TrialRecord record(k, std::move(result), cfg.robot_pose, gt_prism, cfg.rig.prism);
        if (sink) {
          json j = result_to_json(record.result());
          j["execution"] = e;
          j["scan_index"] = k;
          j["gt_prism"] = vec_json(record.ground_truth_prism());
          if (record.estimated_prism()) j["est_prism"] = vec_json(*record.estimated_prism());
          if (!error.empty()) j["error"] = error;
          sink(j);
        }
        runs[m].records.back().push_back(std::move(record));
      }
    }
    for (auto& r : runs) r.per_execution.push_back(compute_metrics(r.records.back()));
  }
  for (auto& r : runs) r.averaged = average_executions(r.per_execution);

  MatrixResult out;
  out.report_csv = format_report_csv(runs);
  out.runs = std::move(runs);
  return out;
}

MatrixResult run_matrix(const ExperimentConfig& cfg, const TrialSink& sink) {
  return run_methods(cfg, all_methods(), sink);
}

SceneFiles write_scene(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  const ExperimentScene scene = build_experiment_scene(cfg);
  std::filesystem::create_directories(out_dir);
  SceneFiles files{out_dir / "as_planned.obj", out_dir / "as_built.obj", out_dir / "references.obj",
                   {}};
  save_model(scene.as_planned, files.as_planned);
  save_model(scene.as_built, files.as_built);
  save_model(scene.references, files.references);

  std::ostringstream inv;
  inv << "surface,area_m2,reference,deviated\n";
  std::set<std::string> deviated;
  for (const auto& g : cfg.deviation.groups) deviated.insert(g.surface_ids.begin(), g.surface_ids.end());
  for (const auto& s : scene.as_planned.surfaces()) {
    const bool is_ref = std::find(scene.reference_ids.begin(), scene.reference_ids.end(), s.id()) !=
                        scene.reference_ids.end();
    inv << s.id() << "," << format_double(std::round(s.area() * 1e3) / 1e3) << ","
        << (is_ref ? "yes" : "no") << "," << (deviated.contains(s.id()) ? "yes" : "no") << "\n";
  }
  for (const auto& c : scene.scene.clutter) inv << c.id() << "," << format_double(std::round(c.area() * 1e3) / 1e3) << ",clutter,no\n";
  for (const auto& a : scene.scene.actors) inv << a.shape.id() << ",-,actor,no\n";
  files.inventory = inv.str();
  return files;
}

LocalizationResult localize_once(const LocalizeOnceInput& in) {
  const auto refs = validate_reference_set(in.model, in.references,
                                           in.params.selective.parallel_tolerance);
  const LocalizationMaps maps = build_maps(in.model, refs.surface_ids(), in.map_density, in.map_seed);
  Scan scan;
  if (in.images.empty()) {
    scan.points = transform_points(in.rig.lidar_mount, in.scan.points);
  } else {
    scan = fuse_into_body(in.scan, in.images, in.rig, in.fusion).scan;
  }
  return localize(scan, maps.full, maps.reference, in.init, in.method, in.params);
}

}  // namespace bimloc
