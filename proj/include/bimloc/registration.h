#pragma once

#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "bimloc/fusion.h"
#include "bimloc/geometry.h"
#include "bimloc/map_index.h"

namespace bimloc {

enum class CostKernel { kSquared, kHuber };

struct IcpConfig {
  int max_iterations = 50;
  double max_correspondence_distance = 0.5;  // m
  double translation_epsilon = 1e-4;         // m
  double rotation_epsilon = 1e-5;            // rad
  CostKernel kernel = CostKernel::kHuber;
  double huber_scale = 0.05;  // m
  std::size_t min_correspondences = 30;
  int max_step_halvings = 10;

  void validate() const;
};

struct IcpResult {
  RigidTransform transform;
  bool converged = false;
  int iterations = 0;
  double residual_rms = 0.0;  // weighted RMS point-to-plane residual, m
  std::size_t correspondences = 0;
  std::vector<std::size_t> surface_matches;  // per map surface, at the final pose
  std::vector<Twist> increments;             // applied increment of each iteration
};

struct Correspondence {
  std::size_t scan_index = 0;
  std::size_t map_index = 0;
  double weight = 1.0;  // scan weight w_i
};

/// Signed distance of T(p) to the tangent plane at map point m with normal n.
double point_to_plane_residual(const Vec3& p, const RigidTransform& t, const Vec3& m,
                               const Vec3& n);

/// d residual / d xi of the residual at Exp(xi) * T, evaluated at xi = 0;
/// xi = (v, w) as in se3_exp.
Eigen::Matrix<double, 1, 6> point_to_plane_jacobian(const Vec3& p, const RigidTransform& t,
                                                    const Vec3& n);

/// Kernel value c(r) and IRLS weight c'(r) / r.
double kernel_cost(const IcpConfig& cfg, double r);
double kernel_weight(const IcpConfig& cfg, double r);

/// Nearest-neighbour matches of T(scan) within the gating distance; points
/// with zero weight are skipped. Ordered by scan index.
std::vector<Correspondence> find_correspondences(const Scan& scan, const MapIndex& map,
                                                 const RigidTransform& t, double max_distance);

/// sum_i w_i c(r_i) over fixed correspondences.
double robust_cost(const Scan& scan, const MapIndex& map, const RigidTransform& t,
                   std::span<const Correspondence> corr, const IcpConfig& cfg);

/// One iteratively reweighted Gauss-Newton solve on fixed correspondences.
/// Rank-deficient directions get a zero increment.
Twist gauss_newton_increment(const Scan& scan, const MapIndex& map, const RigidTransform& t,
                             std::span<const Correspondence> corr, const IcpConfig& cfg);

/// Repeated safeguarded Gauss-Newton steps on fixed correspondences. The cost
/// after each step is appended to cost_trace when given (first entry: start cost).
RigidTransform refine_fixed_correspondences(const Scan& scan, const MapIndex& map,
                                            const RigidTransform& init,
                                            std::span<const Correspondence> corr,
                                            const IcpConfig& cfg, int steps,
                                            std::vector<double>* cost_trace = nullptr);

/// Weighted point-to-plane ICP. Never throws on divergence or starvation;
/// reports converged = false instead.
IcpResult point_to_plane_icp(const Scan& scan, const MapIndex& map, const RigidTransform& init,
                             const IcpConfig& cfg = {});

enum class FailureReason {
  kFullIcpDiverged,
  kSelectiveIcpDiverged,
  kTooFewReferenceMatches,
  kRejectedInconsistent,
};
std::string_view to_string(FailureReason r);

enum class IcpMode { kFull, kSelective };
enum class ScanMode { kFull, kFiltered, kWeighted };
std::string_view to_string(IcpMode m);
std::string_view to_string(ScanMode m);
IcpMode icp_mode_from_string(std::string_view s);
ScanMode scan_mode_from_string(std::string_view s);

struct Method {
  IcpMode icp = IcpMode::kFull;
  ScanMode scan = ScanMode::kFull;
  bool operator==(const Method&) const = default;
};

/// The six method combinations in report order.
std::vector<Method> all_methods();

struct SelectiveConfig {
  double tau_trans = 0.15;  // m
  double tau_rot = 0.05;    // rad
  // A reference surface counts as observed with at least this many matches.
  std::size_t min_reference_matches = 30;
  double parallel_tolerance = kDefaultParallelTolerance;
  // Feed the reference stage only scan points whose nearest full-model
  // neighbour (at the full alignment) lies on a reference surface.
  bool segment_with_full_model = true;
  IcpConfig full_icp;
  IcpConfig selective_icp;

  void validate() const;
};

struct Localized {
  RigidTransform transform;
};

struct Failed {
  FailureReason reason;
};

struct LocalizationResult {
  Method method;
  std::variant<Localized, Failed> outcome;
  std::vector<IcpResult> stages;  // full stage first, selective stage second

  bool localized() const { return std::holds_alternative<Localized>(outcome); }
  const RigidTransform* transform() const;
  std::optional<FailureReason> failure() const;
};

/// Points of `scan` that, placed by `t`, match a reference surface of the
/// full map within `max_distance`. Weights and densities are carried along.
Scan reference_points(const Scan& scan, const MapIndex& full_map, const MapIndex& reference_map,
                      const RigidTransform& t, double max_distance);

/// Step 2 and 3 of selective localization given an accepted full alignment.
LocalizationResult refine_to_references(const Scan& scan, const MapIndex& reference_map,
                                        const IcpResult& full, const SelectiveConfig& cfg);

/// Full alignment, reference refinement from it, then a consistency check
/// between both poses.
LocalizationResult selective_localize(const Scan& scan, const MapIndex& full_map,
                                      const MapIndex& reference_map, const RigidTransform& prev,
                                      const SelectiveConfig& cfg);

struct LocalizeParams {
  double delta = kDefaultDelta;
  double delta_prime = kDefaultDeltaPrime;
  IcpConfig icp;  // used by icp = full
  SelectiveConfig selective;
};

/// Weight variant of a fused scan for the given scan mode. Full clears weights.
Scan prepare_scan(const Scan& fused, ScanMode mode, double delta, double delta_prime);

/// Applies the scan mode's weighting and dispatches on the icp mode.
LocalizationResult localize(const Scan& fused, const MapIndex& full_map,
                            const MapIndex& reference_map, const RigidTransform& prev,
                            const Method& method, const LocalizeParams& params);

}  // namespace bimloc
