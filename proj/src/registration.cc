#include "bimloc/registration.h"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

#include "bimloc/error.h"

namespace bimloc {
namespace {

double scan_weight(const Scan& scan, std::size_t i) {
  return scan.weights ? (*scan.weights)[i] : 1.0;
}

bool small_increment(const Twist& xi, const IcpConfig& cfg) {
  return xi.head<3>().norm() < cfg.translation_epsilon && xi.tail<3>().norm() < cfg.rotation_epsilon;
}

Twist safeguarded_step(const Scan& scan, const MapIndex& map, const RigidTransform& t,
                       std::span<const Correspondence> corr, const IcpConfig& cfg,
                       double* cost_out) {
  const double cost0 = robust_cost(scan, map, t, corr, cfg);
  Twist xi = gauss_newton_increment(scan, map, t, corr, cfg);
  for (int h = 0; h <= cfg.max_step_halvings; ++h) {
    const double cost = robust_cost(scan, map, se3_exp(xi) * t, corr, cfg);
    if (cost <= cost0) {
      if (cost_out != nullptr) *cost_out = cost;
      return xi;
    }
    xi *= 0.5;
  }
  if (cost_out != nullptr) *cost_out = cost0;
  return Twist::Zero();
}

}  // namespace

void IcpConfig::validate() const {
  if (max_iterations <= 0 || !(max_correspondence_distance > 0.0) ||
      !(translation_epsilon > 0.0) || !(rotation_epsilon > 0.0) || min_correspondences == 0 ||
      max_step_halvings < 0) {
    throw Error(ErrorCode::kInvalidArgument, "ICP parameters must be positive");
  }
  if (kernel == CostKernel::kHuber && !(huber_scale > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "Huber scale must be positive");
  }
}

void SelectiveConfig::validate() const {
  if (!(tau_trans > 0.0) || !(tau_rot > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "rejection thresholds must be positive");
  }
  full_icp.validate();
  selective_icp.validate();
}

double point_to_plane_residual(const Vec3& p, const RigidTransform& t, const Vec3& m,
                               const Vec3& n) {
  return (t * p - m).dot(n);
}

Eigen::Matrix<double, 1, 6> point_to_plane_jacobian(const Vec3& p, const RigidTransform& t,
                                                    const Vec3& n) {
  // Exp(xi) q ~ q + v + w x q, and n . (w x q) = w . (q x n).
  const Vec3 q = t * p;
  Eigen::Matrix<double, 1, 6> j;
  j.head<3>() = n.transpose();
  j.tail<3>() = q.cross(n).transpose();
  return j;
}

double kernel_cost(const IcpConfig& cfg, double r) {
  const double a = std::abs(r);
  if (cfg.kernel == CostKernel::kSquared || a <= cfg.huber_scale) return 0.5 * r * r;
  return cfg.huber_scale * (a - 0.5 * cfg.huber_scale);
}

double kernel_weight(const IcpConfig& cfg, double r) {
  const double a = std::abs(r);
  if (cfg.kernel == CostKernel::kSquared || a <= cfg.huber_scale) return 1.0;
  return cfg.huber_scale / a;
}

std::vector<Correspondence> find_correspondences(const Scan& scan, const MapIndex& map,
                                                 const RigidTransform& t, double max_distance) {
  std::vector<Correspondence> corr;
  corr.reserve(scan.size());
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const double w = scan_weight(scan, i);
    if (!(w > 0.0)) continue;
    if (auto nn = map.nearest(t * scan.points[i], max_distance)) {
      corr.push_back({i, nn->index, w});
    }
  }
  return corr;
}

double robust_cost(const Scan& scan, const MapIndex& map, const RigidTransform& t,
                   std::span<const Correspondence> corr, const IcpConfig& cfg) {
  double cost = 0.0;
  for (const auto& c : corr) {
    const double r =
        point_to_plane_residual(scan.points[c.scan_index], t, map.point(c.map_index),
                                map.normal(c.map_index));
    cost += c.weight * kernel_cost(cfg, r);
  }
  return cost;
}

Twist gauss_newton_increment(const Scan& scan, const MapIndex& map, const RigidTransform& t,
                             std::span<const Correspondence> corr, const IcpConfig& cfg) {
  Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
  Twist g = Twist::Zero();
  for (const auto& c : corr) {
    const Vec3& p = scan.points[c.scan_index];
    const Vec3& n = map.normal(c.map_index);
    const double r = point_to_plane_residual(p, t, map.point(c.map_index), n);
    const auto j = point_to_plane_jacobian(p, t, n);
    const double w = c.weight * kernel_weight(cfg, r);
    h.noalias() += w * j.transpose() * j;
    g.noalias() += w * r * j.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(h);
  const auto& lambda = es.eigenvalues();
  const double lambda_max = lambda.maxCoeff();
  Twist xi = Twist::Zero();
  if (!(lambda_max > 0.0)) return xi;
  for (int k = 0; k < 6; ++k) {
    if (lambda[k] <= 1e-12 * lambda_max) continue;
    const auto v = es.eigenvectors().col(k);
    xi -= v * (v.dot(g) / lambda[k]);
  }
  return xi;
}

RigidTransform refine_fixed_correspondences(const Scan& scan, const MapIndex& map,
                                            const RigidTransform& init,
                                            std::span<const Correspondence> corr,
                                            const IcpConfig& cfg, int steps,
                                            std::vector<double>* cost_trace) {
  RigidTransform t = init;
  if (cost_trace != nullptr) cost_trace->push_back(robust_cost(scan, map, t, corr, cfg));
  for (int s = 0; s < steps; ++s) {
    double cost = 0.0;
    const Twist xi = safeguarded_step(scan, map, t, corr, cfg, &cost);
    t = se3_exp(xi) * t;
    if (cost_trace != nullptr) cost_trace->push_back(robust_cost(scan, map, t, corr, cfg));
  }
  return t;
}

IcpResult point_to_plane_icp(const Scan& scan, const MapIndex& map, const RigidTransform& init,
                             const IcpConfig& cfg) {
  cfg.validate();
  if (scan.weights && scan.weights->size() != scan.size()) {
    throw Error(ErrorCode::kInvalidArgument, "weight count does not match point count");
  }
  IcpResult result;
  result.transform = init;
  bool threshold_reached = false;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const auto corr =
        find_correspondences(scan, map, result.transform, cfg.max_correspondence_distance);
    if (corr.size() < cfg.min_correspondences) break;
    const Twist xi = safeguarded_step(scan, map, result.transform, corr, cfg, nullptr);
    result.transform = se3_exp(xi) * result.transform;
    result.increments.push_back(xi);
    result.iterations = it;
    if (small_increment(xi, cfg)) {
      threshold_reached = true;
      break;
    }
  }

  const auto corr =
      find_correspondences(scan, map, result.transform, cfg.max_correspondence_distance);
  result.correspondences = corr.size();
  result.surface_matches.assign(map.surface_count(), 0);
  double wsum = 0.0;
  double wr2 = 0.0;
  for (const auto& c : corr) {
    ++result.surface_matches[map.surface(c.map_index)];
    const double r = point_to_plane_residual(scan.points[c.scan_index], result.transform,
                                             map.point(c.map_index), map.normal(c.map_index));
    wsum += c.weight;
    wr2 += c.weight * r * r;
  }
  result.residual_rms = wsum > 0.0 ? std::sqrt(wr2 / wsum) : 0.0;
  result.converged = threshold_reached && result.correspondences >= cfg.min_correspondences;
  return result;
}

std::string_view to_string(FailureReason r) {
  switch (r) {
    case FailureReason::kFullIcpDiverged: return "full_icp_diverged";
    case FailureReason::kSelectiveIcpDiverged: return "selective_icp_diverged";
    case FailureReason::kTooFewReferenceMatches: return "too_few_reference_matches";
    case FailureReason::kRejectedInconsistent: return "rejected_inconsistent";
  }
  return "unknown";
}

std::string_view to_string(IcpMode m) { return m == IcpMode::kFull ? "full" : "selective"; }

std::string_view to_string(ScanMode m) {
  switch (m) {
    case ScanMode::kFull: return "full";
    case ScanMode::kFiltered: return "filtered";
    case ScanMode::kWeighted: return "weighted";
  }
  return "full";
}

IcpMode icp_mode_from_string(std::string_view s) {
  if (s == "full") return IcpMode::kFull;
  if (s == "selective") return IcpMode::kSelective;
  throw Error(ErrorCode::kInvalidArgument, "icp mode must be full|selective, got " + std::string(s));
}

ScanMode scan_mode_from_string(std::string_view s) {
  if (s == "full") return ScanMode::kFull;
  if (s == "filtered") return ScanMode::kFiltered;
  if (s == "weighted") return ScanMode::kWeighted;
  throw Error(ErrorCode::kInvalidArgument,
              "scan mode must be full|filtered|weighted, got " + std::string(s));
}

std::vector<Method> all_methods() {
  std::vector<Method> m;
  for (IcpMode icp : {IcpMode::kFull, IcpMode::kSelective}) {
    for (ScanMode scan : {ScanMode::kFull, ScanMode::kFiltered, ScanMode::kWeighted}) {
      m.push_back({icp, scan});
    }
  }
  return m;
}

const RigidTransform* LocalizationResult::transform() const {
  const auto* l = std::get_if<Localized>(&outcome);
  return l != nullptr ? &l->transform : nullptr;
}

std::optional<FailureReason> LocalizationResult::failure() const {
  const auto* f = std::get_if<Failed>(&outcome);
  if (f == nullptr) return std::nullopt;
  return f->reason;
}

Scan reference_points(const Scan& scan, const MapIndex& full_map, const MapIndex& reference_map,
                      const RigidTransform& t, double max_distance) {
  const auto& ref_names = reference_map.cloud().surface_names;
  std::vector<bool> is_ref(full_map.surface_count(), false);
  for (std::size_t s = 0; s < is_ref.size(); ++s) {
    is_ref[s] = std::find(ref_names.begin(), ref_names.end(), full_map.cloud().surface_names[s]) !=
                ref_names.end();
  }
  Scan out;
  if (scan.densities) out.densities.emplace();
  if (scan.weights) out.weights.emplace();
  for (const auto& c : find_correspondences(scan, full_map, t, max_distance)) {
    if (!is_ref[full_map.surface(c.map_index)]) continue;
    out.points.push_back(scan.points[c.scan_index]);
    if (scan.densities) out.densities->push_back((*scan.densities)[c.scan_index]);
    if (scan.weights) out.weights->push_back((*scan.weights)[c.scan_index]);
  }
  return out;
}

LocalizationResult refine_to_references(const Scan& scan, const MapIndex& reference_map,
                                        const IcpResult& full, const SelectiveConfig& cfg) {
  LocalizationResult out{{IcpMode::kSelective, ScanMode::kFull}, Failed{}, {full}};
  IcpResult sel = point_to_plane_icp(scan, reference_map, full.transform, cfg.selective_icp);

  std::vector<Vec3> observed;
  for (std::size_t s = 0; s < sel.surface_matches.size(); ++s) {
    if (sel.surface_matches[s] >= cfg.min_reference_matches) {
      observed.push_back(reference_map.surface_directions()[s]);
    }
  }
  const bool starved = sel.correspondences < cfg.selective_icp.min_correspondences ||
                       !find_non_parallel_triple(observed, cfg.parallel_tolerance);
  const PoseDelta delta = pose_delta(sel.transform, full.transform);
  const RigidTransform estimate = sel.transform;
  const bool converged = sel.converged;
  out.stages.push_back(std::move(sel));

  if (starved) {
    out.outcome = Failed{FailureReason::kTooFewReferenceMatches};
  } else if (!converged) {
    out.outcome = Failed{FailureReason::kSelectiveIcpDiverged};
  } else if (delta.translation_norm > cfg.tau_trans || delta.rotation_angle > cfg.tau_rot) {
    out.outcome = Failed{FailureReason::kRejectedInconsistent};
  } else {
    out.outcome = Localized{estimate};
  }
  return out;
}

LocalizationResult selective_localize(const Scan& scan, const MapIndex& full_map,
                                      const MapIndex& reference_map, const RigidTransform& prev,
                                      const SelectiveConfig& cfg) {
  cfg.validate();
  IcpResult full = point_to_plane_icp(scan, full_map, prev, cfg.full_icp);
  if (!full.converged) {
    return {{IcpMode::kSelective, ScanMode::kFull},
            Failed{FailureReason::kFullIcpDiverged},
            {std::move(full)}};
  }
  if (!cfg.segment_with_full_model) return refine_to_references(scan, reference_map, full, cfg);
  const Scan ref_scan = reference_points(scan, full_map, reference_map, full.transform,
                                         cfg.full_icp.max_correspondence_distance);
  return refine_to_references(ref_scan, reference_map, full, cfg);
}

Scan prepare_scan(const Scan& fused, ScanMode mode, double delta, double delta_prime) {
  switch (mode) {
    case ScanMode::kFull: {
      Scan s = fused;
      s.weights.reset();
      return s;
    }
    case ScanMode::kFiltered: return weights_binary(fused, delta);
    case ScanMode::kWeighted: return weights_linear(fused, delta_prime);
  }
  return fused;
}

LocalizationResult localize(const Scan& fused, const MapIndex& full_map,
                            const MapIndex& reference_map, const RigidTransform& prev,
                            const Method& method, const LocalizeParams& params) {
  const Scan scan = prepare_scan(fused, method.scan, params.delta, params.delta_prime);
  LocalizationResult out;
  if (method.icp == IcpMode::kFull) {
    IcpResult r = point_to_plane_icp(scan, full_map, prev, params.icp);
    out.outcome = r.converged ? decltype(out.outcome){Localized{r.transform}}
                              : decltype(out.outcome){Failed{FailureReason::kFullIcpDiverged}};
    out.stages.push_back(std::move(r));
  } else {
    out = selective_localize(scan, full_map, reference_map, prev, params.selective);
  }
  out.method = method;
  return out;
}

}  // namespace bimloc
