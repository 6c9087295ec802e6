#include "bimloc/sensor_sim.h"

#include <gtest/gtest.h>

#include "bimloc/error.h"
#include "test_util.h"

namespace bimloc {
namespace {

using testing::deg;

// Wall whose near face is the plane x = 2, spanning y in [-3, 3], z in [-2, 3].
Scene wall_scene() {
  Scene s;
  s.as_built = BuildingModel({make_box_surface("wall", Vec3(2.0, -3.0, -2.0), Vec3(2.2, 3.0, 3.0))});
  return s;
}

LidarSpec noiseless(LidarSpec spec) {
  spec.range_noise = 0.0;
  return spec;
}

// Analytic ray/plane distance for the plane x = x0 from the origin.
double plane_range(const Vec3& dir, double x0) { return x0 / dir.x(); }

TEST(RaycastScan, EmptySceneGivesEmptyScan) {
  const RawScan s = raycast_scan(Scene{}, RigidTransform(), LidarSpec::Default(), 0.0, 1);
  EXPECT_TRUE(s.points.empty());
  EXPECT_TRUE(s.classes.empty());
}

TEST(RaycastScan, WallRangesMatchAnalyticIntersection) {
  const Scene scene = wall_scene();
  const RawScan s = raycast_scan(scene, RigidTransform(), noiseless(LidarSpec::Default()), 0.0, 1);
  ASSERT_FALSE(s.points.empty());
  for (const auto& p : s.points) {
    const Vec3 dir = p.normalized();
    EXPECT_GT(dir.x(), 0.0);
    EXPECT_NEAR(p.norm(), plane_range(dir, 2.0), 1e-12);
    EXPECT_NEAR(p.x(), 2.0, 1e-12);
  }
  for (auto c : s.classes) EXPECT_EQ(c, PointClass::kBuilding);
}

TEST(RaycastScan, SensorPoseIsApplied) {
  const Scene scene = wall_scene();
  const RigidTransform pose = RigidTransform::RotZ(deg(30), Vec3(0.5, 0.2, 0.1));
  const RawScan s = raycast_scan(scene, pose, noiseless(LidarSpec::Default()), 0.0, 1);
  ASSERT_FALSE(s.points.empty());
  for (const auto& p : s.points) EXPECT_NEAR((pose * p).x(), 2.0, 1e-12);
}

TEST(RaycastScan, ClutterBoxShadowsWall) {
  Scene scene = wall_scene();
  scene.clutter.push_back(make_box_surface("box", Vec3(1.0, -0.3, -0.5), Vec3(1.2, 0.3, 0.5)));
  const RawScan s = raycast_scan(scene, RigidTransform(), noiseless(LidarSpec::Default()), 0.0, 1);
  std::size_t clutter = 0;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const Vec3 dir = s.points[i].normalized();
    // Rays through the box front face footprint.
    const Vec3 at_box = dir * (1.0 / dir.x());
    const bool through_box = std::abs(at_box.y()) < 0.3 - 1e-9 && std::abs(at_box.z()) < 0.5 - 1e-9;
    if (through_box) {
      EXPECT_EQ(s.classes[i], PointClass::kClutter);
      EXPECT_NEAR(s.points[i].norm(), plane_range(dir, 1.0), 1e-12);
      EXPECT_LT(s.points[i].norm(), plane_range(dir, 2.0));
      ++clutter;
    } else if (s.classes[i] == PointClass::kBuilding) {
      EXPECT_NEAR(s.points[i].norm(), plane_range(dir, 2.0), 1e-12);
    }
  }
  EXPECT_GT(clutter, 10u);
}

TEST(RaycastScan, NoisePerturbsRangeOnlyWithinBounds) {
  const Scene scene = wall_scene();
  LidarSpec spec = LidarSpec::Default();
  spec.range_noise = 0.01;
  const RawScan s = raycast_scan(scene, RigidTransform(), spec, 0.0, 42);
  ASSERT_FALSE(s.points.empty());
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const Vec3 dir = s.points[i].normalized();
    const double err = s.points[i].norm() - plane_range(dir, 2.0);
    // Soundness: within 3 sigma of the surface along the ray (plus slack for
    // rare tails, checked separately below).
    sum += err;
    sq += err * err;
    EXPECT_EQ(s.classes[i], PointClass::kBuilding);
  }
  const double n = static_cast<double>(s.points.size());
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 4.0 * 0.01 / std::sqrt(n));
  EXPECT_NEAR(sd, 0.01, 0.001);
}

TEST(RaycastScan, PointsLieOnSceneAlongTheirRay) {
  // Every returned point, moved to the world, lies within 3 sigma + 1e-6 of
  // the surface along its ray: compare with the noise-free hit of the same ray.
  Scene scene = wall_scene();
  scene.clutter.push_back(make_box_surface("box", Vec3(1.0, -0.3, -0.5), Vec3(1.2, 0.3, 0.5)));
  const RigidTransform pose = RigidTransform::RotZ(deg(10), Vec3(0.1, 0.0, 0.3));
  LidarSpec spec = LidarSpec::Default();
  spec.range_noise = 0.002;
  const RawScan noisy = raycast_scan(scene, pose, spec, 0.0, 3);
  const SceneSnapshot snap(scene, 0.0);
  std::size_t outside = 0;
  for (const auto& p : noisy.points) {
    const Vec3 dir = pose.rotate(p.normalized());
    const auto hit = snap.cast(pose.translation(), dir, 100.0);
    ASSERT_TRUE(hit.has_value());
    if (std::abs(p.norm() - hit->range) > 3 * 0.002 + 1e-6) ++outside;
  }
  // Gaussian tails beyond 3 sigma occur for about 0.27 % of points.
  EXPECT_LT(static_cast<double>(outside), 0.01 * static_cast<double>(noisy.points.size()));
}

TEST(RaycastScan, MaxRangeDropsFarHits) {
  LidarSpec spec = noiseless(LidarSpec::Default());
  spec.max_range = 1.5;
  EXPECT_TRUE(raycast_scan(wall_scene(), RigidTransform(), spec, 0.0, 1).points.empty());
}

TEST(RaycastScan, ActorsMoveWithTime) {
  Scene scene;
  scene.as_built = BuildingModel({make_box_surface("wall", Vec3(5, -5, -1), Vec3(5.2, 5, 3))});
  scene.actors.push_back({make_box_surface("actor", Vec3(-0.2, -0.2, -1), Vec3(0.2, 0.2, 1)),
                          circular_trajectory(Vec2(0, 0), 2.0, 1.0, 0.0)});
  const LidarSpec spec = noiseless(LidarSpec::Default());
  const auto actor_azimuth = [&](double t) {
    const RawScan s = raycast_scan(scene, RigidTransform(), spec, t, 1);
    Vec3 c = Vec3::Zero();
    int n = 0;
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      if (s.classes[i] == PointClass::kActor) {
        c += s.points[i];
        ++n;
      }
    }
    EXPECT_GT(n, 0);
    return std::atan2(c.y(), c.x());
  };
  EXPECT_NEAR(actor_azimuth(0.0), 0.0, 0.05);
  EXPECT_NEAR(actor_azimuth(testing::kPi / 2), testing::kPi / 2, 0.05);
}

TEST(Scene, OverlappingIdsFail) {
  Scene scene = wall_scene();
  scene.clutter.push_back(make_box_surface("wall", Vec3(1, 0, 0), Vec3(2, 1, 1)));
  EXPECT_THROW(scene.validate(), Error);
}

CameraSpec forward_camera(int w = 64, int h = 48) {
  return CameraSpec::FromHorizontalFov(w, h, 90.0, CameraSpec::LookingAlongYaw(0.0, Vec3::Zero()));
}

TEST(CameraSpec, OpticalAxisProjectsToPrincipalPoint) {
  const CameraSpec c = forward_camera(65, 49);
  const auto px = c.pixel_of(Vec3(0, 0, 2));
  ASSERT_TRUE(px.has_value());
  EXPECT_EQ(px->first, 32);
  EXPECT_EQ(px->second, 24);
  EXPECT_DOUBLE_EQ(c.cx, 32.0);
  EXPECT_DOUBLE_EQ(c.cy, 24.0);
  EXPECT_FALSE(c.pixel_of(Vec3(0, 0, -1)).has_value());
  EXPECT_FALSE(c.pixel_of(Vec3(100, 0, 1)).has_value());
}

TEST(CameraSpec, BackProjectedRayRoundTrips) {
  const CameraSpec c = forward_camera();
  for (int v = 0; v < c.height; v += 7) {
    for (int u = 0; u < c.width; u += 5) {
      for (double depth : {0.1, 1.0, 37.5}) {
        const auto px = c.pixel_of(c.ray_through(u, v) * depth);
        ASSERT_TRUE(px.has_value());
        EXPECT_EQ(px->first, u);
        EXPECT_EQ(px->second, v);
      }
    }
  }
}

TEST(CameraSpec, LookingAlongYawAxes) {
  const RigidTransform t = CameraSpec::LookingAlongYaw(deg(90), Vec3(0, 0, 0.7));
  // Camera z (forward) maps to body +y, camera y (down) maps to body -z.
  EXPECT_LT((t.rotate(Vec3::UnitZ()) - Vec3::UnitY()).norm(), 1e-12);
  EXPECT_LT((t.rotate(Vec3::UnitY()) + Vec3::UnitZ()).norm(), 1e-12);
  EXPECT_LT((t.translation() - Vec3(0, 0, 0.7)).norm(), 1e-15);
}

TEST(RenderDensityImage, WallOnlyIsUniformBackground) {
  const Scene scene = wall_scene();
  DensityOracleParams o;
  o.sigma = 0.0;
  o.corruption = 0.0;
  const CameraSpec cam = CameraSpec::FromHorizontalFov(
      32, 24, 60.0, CameraSpec::LookingAlongYaw(0.0, Vec3::Zero()));
  const DensityImage img = render_density_image(scene, cam.extrinsic, cam, o, 0.0, 1);
  for (double d : img.scores) EXPECT_EQ(d, 0.8);
}

TEST(RenderDensityImage, ClutterSilhouetteIsForeground) {
  Scene scene = wall_scene();
  scene.clutter.push_back(make_box_surface("box", Vec3(1.0, -0.3, -0.3), Vec3(1.2, 0.3, 0.3)));
  DensityOracleParams o;
  o.sigma = 0.0;
  o.corruption = 0.0;
  const CameraSpec cam = CameraSpec::FromHorizontalFov(
      64, 48, 60.0, CameraSpec::LookingAlongYaw(0.0, Vec3::Zero()));
  const DensityImage img = render_density_image(scene, cam.extrinsic, cam, o, 0.0, 1);
  std::size_t fg = 0;
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const Vec3 r = cam.ray_through(u, v);  // camera frame: x right, y down, z forward
      const double x = r.x() / r.z(), y = r.y() / r.z();
      const bool on_box = std::abs(x) < 0.3 && std::abs(y) < 0.3;
      const bool clear = std::abs(x) > 0.3 + 0.02 || std::abs(y) > 0.3 + 0.02;
      if (on_box) {
        EXPECT_EQ(img.at(u, v), 0.2);
        ++fg;
      } else if (clear) {
        EXPECT_EQ(img.at(u, v), 0.8);
      }
    }
  }
  EXPECT_GT(fg, 20u);
}

TEST(RenderDensityImage, FullCorruptionMakesBuildingForeground) {
  DensityOracleParams o;
  o.sigma = 0.0;
  o.corruption = 1.0;
  const CameraSpec cam = forward_camera();
  const DensityImage img = render_density_image(wall_scene(), cam.extrinsic, cam, o, 0.0, 1);
  for (double d : img.scores) EXPECT_EQ(d, 0.2);

  o.corruption = 0.0;
  o.corruption_by_surface["wall"] = 1.0;
  const DensityImage per = render_density_image(wall_scene(), cam.extrinsic, cam, o, 0.0, 1);
  EXPECT_EQ(per.scores, img.scores);
}

TEST(RenderDensityImage, BackgroundMeanMatchesOracle) {
  DensityOracleParams o;
  o.sigma = 0.1;
  o.corruption = 0.0;
  const CameraSpec cam = CameraSpec::FromHorizontalFov(
      128, 96, 60.0, CameraSpec::LookingAlongYaw(0.0, Vec3::Zero()));
  const DensityImage img = render_density_image(wall_scene(), cam.extrinsic, cam, o, 0.0, 7);
  double mean = 0.0;
  for (double d : img.scores) {
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
    mean += d;
  }
  const double n = static_cast<double>(img.scores.size());
  mean /= n;
  // Clamping at 1 sits 2 sigma above the mean, so its bias is far below the bound.
  EXPECT_NEAR(mean, 0.8, 3.0 * 0.1 / std::sqrt(n));
}

TEST(PrismPosition, Examples) {
  const PrismSpec up{Vec3(0, 0, 0.5)};
  EXPECT_EQ(prism_position(RigidTransform(), up), Vec3(0, 0, 0.5));
  EXPECT_EQ(prism_position(RigidTransform::FromTranslation(Vec3(1, 0, 0)), up), Vec3(1, 0, 0.5));
  const Vec3 p = prism_position(RigidTransform::RotZ(deg(90)), PrismSpec{Vec3(1, 0, 0)});
  EXPECT_LT((p - Vec3(0, 1, 0)).norm(), 1e-12);
}

SensorRig small_rig() {
  SensorRig rig;
  rig.lidar = LidarSpec::Uniform(4, -10, 10);
  rig.lidar.azimuth_step_deg = 2.0;
  rig.cameras = SensorRig::DefaultCameras(16, 12);
  return rig;
}

TEST(GenerateTrialSequence, StationaryGroundTruth) {
  const SensorRig rig = small_rig();
  const RigidTransform pose = RigidTransform::RotZ(0.1, Vec3(0.2, 0.1, 0));
  const auto frames = generate_trial_sequence(wall_scene(), pose, 300, rig, 5);
  ASSERT_EQ(frames.size(), 300u);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    EXPECT_EQ(frames[i].index, i);
    EXPECT_EQ(frames[i].robot_pose.matrix(), pose.matrix());
    EXPECT_EQ(frames[i].prism, prism_position(pose, rig.prism));
    EXPECT_EQ(frames[i].images.size(), 3u);
  }
  EXPECT_THROW(generate_trial_sequence(wall_scene(), pose, 0, rig, 5), Error);
}

TEST(GenerateTrialSequence, NoiseFreeSingleScanEqualsRaycast) {
  SensorRig rig = small_rig();
  rig.lidar.range_noise = 0.0;
  const RigidTransform pose = RigidTransform::FromTranslation(Vec3(0.3, 0, 0));
  const auto frames = generate_trial_sequence(wall_scene(), pose, 1, rig, 5);
  const RawScan direct = raycast_scan(wall_scene(), pose * rig.lidar_mount, rig.lidar, 0.0, 99);
  EXPECT_EQ(frames[0].scan.points, direct.points);
  EXPECT_EQ(frames[0].scan.classes, direct.classes);
}

TEST(GenerateTrialSequence, SameSeedIsBitIdentical) {
  const SensorRig rig = small_rig();
  const auto a = generate_trial_sequence(wall_scene(), RigidTransform(), 3, rig, 8);
  const auto b = generate_trial_sequence(wall_scene(), RigidTransform(), 3, rig, 8);
  const auto c = generate_trial_sequence(wall_scene(), RigidTransform(), 3, rig, 9);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].scan.points, b[i].scan.points);
    for (std::size_t k = 0; k < a[i].images.size(); ++k) {
      EXPECT_EQ(a[i].images[k].scores, b[i].images[k].scores);
    }
  }
  EXPECT_NE(a[0].scan.points, c[0].scan.points);
  EXPECT_NE(a[0].scan.points, a[1].scan.points);
}

TEST(LidarSpec, ValidationAndDefaults) {
  const LidarSpec d = LidarSpec::Default();
  EXPECT_EQ(d.ring_elevations_deg.size(), 16u);
  EXPECT_DOUBLE_EQ(d.ring_elevations_deg.front(), -15.0);
  EXPECT_DOUBLE_EQ(d.ring_elevations_deg.back(), 15.0);
  EXPECT_EQ(d.azimuth_steps(), 900u);
  LidarSpec bad = d;
  bad.azimuth_step_deg = 0.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = d;
  bad.ring_elevations_deg.clear();
  EXPECT_THROW(bad.validate(), Error);
}

TEST(PointClass, StringRoundTrip) {
  for (auto c : {PointClass::kBuilding, PointClass::kClutter, PointClass::kActor, PointClass::kUnknown}) {
    EXPECT_EQ(point_class_from_string(to_string(c)), c);
  }
  EXPECT_THROW(point_class_from_string("tree"), Error);
}

}  // namespace
}  // namespace bimloc
