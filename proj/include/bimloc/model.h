#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bimloc/geometry.h"

namespace bimloc {

using Vec2 = Eigen::Vector2d;

struct Triangle {
  std::array<Vec3, 3> v;

  // Unnormalized cross product (b - a) x (c - a); its norm is twice the area.
  Vec3 cross() const { return (v[1] - v[0]).cross(v[2] - v[0]); }
  double area() const { return 0.5 * cross().norm(); }
};

/// Named closed (or planar) piece of the building model.
///
/// Normals follow the triangle winding (counter-clockwise seen from the
/// outside) and are always derived, never supplied, so they cannot disagree
/// with the geometry.
class Surface {
 public:
  static constexpr double kMinTriangleArea = 1e-12;

  Surface(std::string id, std::vector<Triangle> triangles);

  const std::string& id() const { return id_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<Vec3>& normals() const { return normals_; }
  double area() const;

  Surface transformed(const RigidTransform& t) const;
  Surface renamed(std::string id) const { return {std::move(id), triangles_}; }

 private:
  std::string id_;
  std::vector<Triangle> triangles_;
  std::vector<Vec3> normals_;
};

class BuildingModel {
 public:
  BuildingModel() = default;
  BuildingModel(std::vector<Surface> surfaces, std::string frame = "plan");

  const std::vector<Surface>& surfaces() const { return surfaces_; }
  const std::string& frame() const { return frame_; }
  const Surface* find(const std::string& id) const;
  const Surface& at(const std::string& id) const;  // throws UnknownSurfaceId
  std::vector<std::string> surface_ids() const;
  double total_area() const;

  /// Model restricted to the given ids (in the given order).
  BuildingModel subset(const std::vector<std::string>& ids) const;

 private:
  std::vector<Surface> surfaces_;
  std::string frame_ = "plan";
};

struct ReferenceSet {
  std::vector<std::string> surface_ids;
};

/// A reference set proven to contain three pairwise non-parallel surfaces.
/// Only obtainable through validate_reference_set().
class ValidatedReferenceSet {
 public:
  const std::vector<std::string>& surface_ids() const { return ids_; }
  // Indices into surface_ids() of one witnessing non-parallel triple.
  const std::array<std::size_t, 3>& witness() const { return witness_; }

 private:
  friend ValidatedReferenceSet validate_reference_set(const BuildingModel&, const ReferenceSet&,
                                                      double);
  ValidatedReferenceSet(std::vector<std::string> ids, std::array<std::size_t, 3> witness)
      : ids_(std::move(ids)), witness_(witness) {}

  std::vector<std::string> ids_;
  std::array<std::size_t, 3> witness_;
};

struct WallSegment {
  Vec2 start = Vec2::Zero();
  Vec2 end = Vec2::Zero();
  double thickness = 0.2;
  std::string id;  // empty: assigned "wall_<index>"
};

struct Floorplan2D {
  std::vector<WallSegment> walls;
  double wall_height = 2.5;
  std::vector<Vec2> floor;  // outline polygon, either orientation
};

/// Sampled point map with per-point normals and surface labels.
struct MapCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<std::uint32_t> surface_index;  // into surface_names
  std::vector<std::string> surface_names;
  double sampling_density = 0.0;  // points per m^2

  std::size_t size() const { return points.size(); }
};

struct DeviationGroup {
  std::vector<std::string> surface_ids;
  RigidTransform offset;
};

struct DeviationSpec {
  std::vector<DeviationGroup> groups;
};

inline constexpr double kDefaultParallelTolerance = 1e-3;
inline constexpr double kDefaultMapDensity = 400.0;

/// Closed box surface from a counter-clockwise base quad extruded in z.
Surface make_prism_surface(std::string id, const std::array<Vec2, 4>& base, double z_min,
                           double z_max);
Surface make_box_surface(std::string id, const Vec3& min_corner, const Vec3& max_corner);
/// Planar surface over a simple polygon at height z, normal +z.
Surface make_floor_surface(std::string id, const std::vector<Vec2>& outline, double z = 0.0);

/// Walls become closed boxes of uniform height; the outline becomes a floor at z = 0.
BuildingModel extrude_floorplan(const Floorplan2D& plan);

/// Principal normal direction of a surface: the dominant eigenvector of the
/// area-weighted normal scatter matrix. Sign is arbitrary.
Vec3 dominant_normal(const Surface& surface);

ValidatedReferenceSet validate_reference_set(const BuildingModel& model, const ReferenceSet& refs,
                                             double parallel_tolerance = kDefaultParallelTolerance);

/// True if some three of the directions are pairwise non-parallel.
std::optional<std::array<std::size_t, 3>> find_non_parallel_triple(
    const std::vector<Vec3>& directions, double parallel_tolerance = kDefaultParallelTolerance);

MapCloud sample_model(const BuildingModel& model, double density, std::uint64_t seed = 0);

BuildingModel apply_deviation(const BuildingModel& model, const DeviationSpec& dev);

// Mesh text format: "g <id>", "v x y z", "f i j k" (1-based, global indices).
BuildingModel load_model(const std::filesystem::path& path);
BuildingModel parse_model(const std::string& text);
void save_model(const BuildingModel& model, const std::filesystem::path& path);
std::string format_model(const BuildingModel& model);

Floorplan2D parse_floorplan_json(const std::string& text);
Floorplan2D load_floorplan(const std::filesystem::path& path);
ReferenceSet parse_reference_set_json(const std::string& text);
ReferenceSet load_reference_set(const std::filesystem::path& path);

}  // namespace bimloc
