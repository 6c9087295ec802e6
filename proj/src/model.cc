#include "bimloc/model.h"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "bimloc/error.h"

namespace bimloc {
namespace {

double signed_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

double cross2(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

bool inside_triangle(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  return cross2(a, b, p) >= 0.0 && cross2(b, c, p) >= 0.0 && cross2(c, a, p) >= 0.0;
}

// Ear clipping over a counter-clockwise simple polygon.
std::vector<std::array<std::size_t, 3>> triangulate(const std::vector<Vec2>& poly) {
  std::vector<std::size_t> idx(poly.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<std::array<std::size_t, 3>> tris;
  std::size_t guard = 0;
  while (idx.size() > 3 && guard < 10 * poly.size() * poly.size()) {
    ++guard;
    bool clipped = false;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t ip = idx[(k + idx.size() - 1) % idx.size()];
      const std::size_t ic = idx[k];
      const std::size_t in = idx[(k + 1) % idx.size()];
      if (cross2(poly[ip], poly[ic], poly[in]) <= 0.0) continue;
      bool ear = true;
      for (std::size_t j : idx) {
        if (j == ip || j == ic || j == in) continue;
        if (inside_triangle(poly[j], poly[ip], poly[ic], poly[in])) {
          ear = false;
          break;
        }
      }
      if (!ear) continue;
      tris.push_back({ip, ic, in});
      idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(k));
      clipped = true;
      break;
    }
    if (!clipped) break;
  }
  if (idx.size() == 3) tris.push_back({idx[0], idx[1], idx[2]});
  if (idx.size() != 3) {
    throw Error(ErrorCode::kInvalidArgument, "floor outline is not a simple polygon");
  }
  return tris;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Vec2 read_vec2(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) {
    throw Error(ErrorCode::kParseError, std::string(what) + " must be [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

Surface::Surface(std::string id, std::vector<Triangle> triangles)
    : id_(std::move(id)), triangles_(std::move(triangles)) {
  if (id_.empty()) throw Error(ErrorCode::kInvalidArgument, "surface id must not be empty");
  if (triangles_.empty()) throw Error(ErrorCode::kInvalidArgument, "surface " + id_ + " is empty");
  normals_.reserve(triangles_.size());
  for (const auto& t : triangles_) {
    for (const auto& v : t.v) {
      if (!v.allFinite()) throw Error(ErrorCode::kInvalidArgument, "non-finite vertex in " + id_);
    }
    const Vec3 c = t.cross();
    if (0.5 * c.norm() <= kMinTriangleArea) {
      throw Error(ErrorCode::kInvalidArgument, "degenerate triangle in surface " + id_);
    }
    normals_.push_back(c.normalized());
  }
}

double Surface::area() const {
  double a = 0.0;
  for (const auto& t : triangles_) a += t.area();
  return a;
}

Surface Surface::transformed(const RigidTransform& t) const {
  std::vector<Triangle> tris = triangles_;
  for (auto& tri : tris) {
    for (auto& v : tri.v) v = t * v;
  }
  return {id_, std::move(tris)};
}

BuildingModel::BuildingModel(std::vector<Surface> surfaces, std::string frame)
    : surfaces_(std::move(surfaces)), frame_(std::move(frame)) {
  std::unordered_set<std::string> seen;
  for (const auto& s : surfaces_) {
    if (!seen.insert(s.id()).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate surface id " + s.id());
    }
  }
}

const Surface* BuildingModel::find(const std::string& id) const {
  for (const auto& s : surfaces_) {
    if (s.id() == id) return &s;
  }
  return nullptr;
}

const Surface& BuildingModel::at(const std::string& id) const {
  const Surface* s = find(id);
  if (s == nullptr) throw Error(ErrorCode::kUnknownSurfaceId, id);
  return *s;
}

std::vector<std::string> BuildingModel::surface_ids() const {
  std::vector<std::string> ids;
  ids.reserve(surfaces_.size());
  for (const auto& s : surfaces_) ids.push_back(s.id());
  return ids;
}

double BuildingModel::total_area() const {
  double a = 0.0;
  for (const auto& s : surfaces_) a += s.area();
  return a;
}

BuildingModel BuildingModel::subset(const std::vector<std::string>& ids) const {
  std::vector<Surface> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(at(id));
  return {std::move(out), frame_};
}

Surface make_prism_surface(std::string id, const std::array<Vec2, 4>& base, double z_min,
                           double z_max) {
  if (!(z_max > z_min)) throw Error(ErrorCode::kInvalidArgument, "prism height must be positive");
  std::array<Vec2, 4> b = base;
  if (signed_area({b.begin(), b.end()}) < 0.0) std::reverse(b.begin(), b.end());
  std::array<Vec3, 4> lo;
  std::array<Vec3, 4> hi;
  for (std::size_t i = 0; i < 4; ++i) {
    lo[i] = {b[i].x(), b[i].y(), z_min};
    hi[i] = {b[i].x(), b[i].y(), z_max};
  }
  std::vector<Triangle> tris;
  tris.reserve(12);
  tris.push_back({{lo[0], lo[2], lo[1]}});
  tris.push_back({{lo[0], lo[3], lo[2]}});
  tris.push_back({{hi[0], hi[1], hi[2]}});
  tris.push_back({{hi[0], hi[2], hi[3]}});
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t j = (i + 1) % 4;
    tris.push_back({{lo[i], lo[j], hi[j]}});
    tris.push_back({{lo[i], hi[j], hi[i]}});
  }
  return {std::move(id), std::move(tris)};
}

Surface make_box_surface(std::string id, const Vec3& min_corner, const Vec3& max_corner) {
  const std::array<Vec2, 4> base = {Vec2(min_corner.x(), min_corner.y()),
                                    Vec2(max_corner.x(), min_corner.y()),
                                    Vec2(max_corner.x(), max_corner.y()),
                                    Vec2(min_corner.x(), max_corner.y())};
  return make_prism_surface(std::move(id), base, min_corner.z(), max_corner.z());
}

Surface make_floor_surface(std::string id, const std::vector<Vec2>& outline, double z) {
  if (outline.size() < 3) throw Error(ErrorCode::kInvalidArgument, "floor needs >= 3 vertices");
  std::vector<Vec2> poly = outline;
  if (signed_area(poly) < 0.0) std::reverse(poly.begin(), poly.end());
  std::vector<Triangle> tris;
  for (const auto& t : triangulate(poly)) {
    tris.push_back({{Vec3(poly[t[0]].x(), poly[t[0]].y(), z), Vec3(poly[t[1]].x(), poly[t[1]].y(), z),
                     Vec3(poly[t[2]].x(), poly[t[2]].y(), z)}});
  }
  return {std::move(id), std::move(tris)};
}

BuildingModel extrude_floorplan(const Floorplan2D& plan) {
  if (plan.walls.empty()) throw Error(ErrorCode::kEmptyPlan, "floorplan has no wall segments");
  if (!(plan.wall_height > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "wall_height must be positive");
  }
  std::vector<Surface> surfaces;
  surfaces.reserve(plan.walls.size() + 1);
  for (std::size_t i = 0; i < plan.walls.size(); ++i) {
    const WallSegment& w = plan.walls[i];
    if (!(w.thickness > 0.0)) throw Error(ErrorCode::kInvalidArgument, "wall thickness must be > 0");
    if (!w.start.allFinite() || !w.end.allFinite()) {
      throw Error(ErrorCode::kInvalidArgument, "non-finite wall segment");
    }
    const Vec2 d = w.end - w.start;
    if (d.norm() <= 0.0) throw Error(ErrorCode::kInvalidArgument, "zero-length wall segment");
    const Vec2 u = d.normalized();
    const Vec2 off = 0.5 * w.thickness * Vec2(-u.y(), u.x());
    const std::array<Vec2, 4> base = {w.start - off, w.end - off, w.end + off, w.start + off};
    std::string id = w.id.empty() ? "wall_" + std::to_string(i) : w.id;
    surfaces.push_back(make_prism_surface(std::move(id), base, 0.0, plan.wall_height));
  }
  if (!plan.floor.empty()) surfaces.push_back(make_floor_surface("floor", plan.floor, 0.0));
  return BuildingModel(std::move(surfaces), "plan");
}

Vec3 dominant_normal(const Surface& surface) {
  // The area-weighted mean normal of a closed box is zero, so use the
  // sign-invariant scatter matrix instead.
  Mat3 scatter = Mat3::Zero();
  for (std::size_t i = 0; i < surface.triangles().size(); ++i) {
    const Vec3& n = surface.normals()[i];
    scatter += surface.triangles()[i].area() * n * n.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(scatter);
  return es.eigenvectors().col(2).normalized();
}

std::optional<std::array<std::size_t, 3>> find_non_parallel_triple(
    const std::vector<Vec3>& directions, double parallel_tolerance) {
  const auto non_parallel = [&](std::size_t a, std::size_t b) {
    return std::abs(directions[a].dot(directions[b])) < 1.0 - parallel_tolerance;
  };
  const std::size_t n = directions.size();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (!non_parallel(a, b)) continue;
      for (std::size_t c = b + 1; c < n; ++c) {
        if (non_parallel(a, c) && non_parallel(b, c)) return std::array<std::size_t, 3>{a, b, c};
      }
    }
  }
  return std::nullopt;
}

ValidatedReferenceSet validate_reference_set(const BuildingModel& model, const ReferenceSet& refs,
                                             double parallel_tolerance) {
  if (refs.surface_ids.empty()) {
    throw Error(ErrorCode::kInsufficientConstraints, "reference set is empty");
  }
  std::vector<Vec3> normals;
  normals.reserve(refs.surface_ids.size());
  for (const auto& id : refs.surface_ids) normals.push_back(dominant_normal(model.at(id)));
  const auto triple = find_non_parallel_triple(normals, parallel_tolerance);
  if (!triple) {
    throw Error(ErrorCode::kInsufficientConstraints,
                "reference set needs three pairwise non-parallel surfaces");
  }
  return ValidatedReferenceSet(refs.surface_ids, *triple);
}

MapCloud sample_model(const BuildingModel& model, double density, std::uint64_t seed) {
  if (!(density > 0.0) || !std::isfinite(density)) {
    throw Error(ErrorCode::kInvalidArgument, "sampling density must be > 0");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  MapCloud cloud;
  cloud.sampling_density = density;
  cloud.points.reserve(static_cast<std::size_t>(model.total_area() * density * 1.01) + 16);
  cloud.normals.reserve(cloud.points.capacity());
  cloud.surface_index.reserve(cloud.points.capacity());
  for (std::size_t s = 0; s < model.surfaces().size(); ++s) {
    const Surface& surface = model.surfaces()[s];
    cloud.surface_names.push_back(surface.id());
    for (std::size_t t = 0; t < surface.triangles().size(); ++t) {
      const Triangle& tri = surface.triangles()[t];
      const double expected = tri.area() * density;
      auto count = static_cast<std::size_t>(std::floor(expected));
      if (uni(rng) < expected - static_cast<double>(count)) ++count;
      for (std::size_t k = 0; k < count; ++k) {
        const double r1 = std::sqrt(uni(rng));
        const double r2 = uni(rng);
        cloud.points.push_back((1.0 - r1) * tri.v[0] + r1 * (1.0 - r2) * tri.v[1] +
                               r1 * r2 * tri.v[2]);
        cloud.normals.push_back(surface.normals()[t]);
        cloud.surface_index.push_back(static_cast<std::uint32_t>(s));
      }
    }
  }
  return cloud;
}

BuildingModel apply_deviation(const BuildingModel& model, const DeviationSpec& dev) {
  std::vector<Surface> surfaces = model.surfaces();
  for (const auto& group : dev.groups) {
    const bool identity = group.offset.rotation() == Mat3::Identity() &&
                          group.offset.translation() == Vec3::Zero();
    for (const auto& id : group.surface_ids) {
      auto it = std::find_if(surfaces.begin(), surfaces.end(),
                             [&](const Surface& s) { return s.id() == id; });
      if (it == surfaces.end()) throw Error(ErrorCode::kUnknownSurfaceId, id);
      if (!identity) *it = it->transformed(group.offset);
    }
  }
  return BuildingModel(std::move(surfaces), model.frame());
}

Floorplan2D parse_floorplan_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("floorplan: ") + e.what());
  }
  try {
    Floorplan2D plan;
    for (const auto& w : j.at("walls")) {
      WallSegment seg;
      seg.start = read_vec2(w.at("start"), "walls[].start");
      seg.end = read_vec2(w.at("end"), "walls[].end");
      seg.thickness = w.at("thickness").get<double>();
      if (w.contains("id")) seg.id = w.at("id").get<std::string>();
      plan.walls.push_back(std::move(seg));
    }
    plan.wall_height = j.at("wall_height").get<double>();
    if (j.contains("floor")) {
      for (const auto& p : j.at("floor")) plan.floor.push_back(read_vec2(p, "floor[]"));
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("floorplan: ") + e.what());
  }
}

Floorplan2D load_floorplan(const std::filesystem::path& path) {
  return parse_floorplan_json(read_file(path));
}

ReferenceSet parse_reference_set_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ReferenceSet refs;
    refs.surface_ids = j.get<std::vector<std::string>>();
    return refs;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("reference set: ") + e.what());
  }
}

ReferenceSet load_reference_set(const std::filesystem::path& path) {
  return parse_reference_set_json(read_file(path));
}

}  // namespace bimloc
