#include "bimloc/eval.h"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <limits>

#include "bimloc/error.h"

namespace bimloc {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt_value(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

TrialRecord::TrialRecord(std::size_t scan_index, LocalizationResult result,
                         const RigidTransform& ground_truth_pose, const Vec3& ground_truth_prism,
                         const PrismSpec& prism, const RigidTransform& body_from_estimate)
    : scan_index_(scan_index),
      result_(std::move(result)),
      gt_pose_(ground_truth_pose),
      gt_prism_(ground_truth_prism) {
  if (const RigidTransform* t = result_.transform()) {
    est_pose_ = *t * body_from_estimate;
    est_prism_ = prism_position(*est_pose_, prism);
  }
}

TrialRecord TrialRecord::FromPose(std::size_t scan_index,
                                  const std::optional<RigidTransform>& estimate,
                                  const Vec3& ground_truth_prism, const PrismSpec& prism) {
  LocalizationResult r;
  if (estimate) {
    r.outcome = Localized{*estimate};
  } else {
    r.outcome = Failed{FailureReason::kFullIcpDiverged};
  }
  return {scan_index, std::move(r), RigidTransform(), ground_truth_prism, prism};
}

Repeatability covariance_summary(std::span<const Vec3> samples) {
  if (samples.size() < 2) {
    throw Error(ErrorCode::kInsufficientSamples, "repeatability needs >= 2 localized scans");
  }
  Vec3 mean = Vec3::Zero();
  for (const auto& s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& s : samples) {
    const Vec3 d = s - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(samples.size() - 1);
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov, Eigen::EigenvaluesOnly);
  return {std::max(0.0, es.eigenvalues().maxCoeff()), cov.trace()};
}

Repeatability position_repeatability(std::span<const TrialRecord> records) {
  std::vector<Vec3> mm;
  for (const auto& r : records) {
    if (r.estimated_prism()) mm.push_back(*r.estimated_prism() * 1e3);
  }
  return covariance_summary(mm);
}

Mat3 chordal_mean(std::span<const Mat3> rotations) {
  Mat3 sum = Mat3::Zero();
  for (const auto& r : rotations) sum += r;
  return orthonormalize(sum);
}

Repeatability rotation_repeatability(std::span<const TrialRecord> records) {
  std::vector<Mat3> rot;
  for (const auto& r : records) {
    if (r.estimated_pose()) rot.push_back(r.estimated_pose()->rotation());
  }
  if (rot.size() < 2) {
    throw Error(ErrorCode::kInsufficientSamples, "repeatability needs >= 2 localized scans");
  }
  const Mat3 mean_t = chordal_mean(rot).transpose();
  std::vector<Vec3> mrad;
  mrad.reserve(rot.size());
  for (const auto& r : rot) mrad.push_back(rotation_log(mean_t * r) * 1e3);
  return covariance_summary(mrad);
}

double accuracy_rmse(std::span<const TrialRecord> records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (!r.estimated_prism()) continue;
    sum += (*r.estimated_prism() - r.ground_truth_prism()).squaredNorm();
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::kInsufficientSamples, "accuracy needs >= 1 localized scan");
  return std::sqrt(sum / static_cast<double>(n)) * 1e3;
}

double failure_rate(std::span<const TrialRecord> records) {
  if (records.empty()) throw Error(ErrorCode::kInsufficientSamples, "no records");
  std::size_t failed = 0;
  for (const auto& r : records) failed += r.localized() ? 0 : 1;
  return 100.0 * static_cast<double>(failed) / static_cast<double>(records.size());
}

MetricsReport compute_metrics(std::span<const TrialRecord> records) {
  MetricsReport m;
  m.n_total = records.size();
  m.failure_rate_pct = failure_rate(records);
  std::size_t localized = 0;
  for (const auto& r : records) localized += r.localized() ? 1 : 0;
  m.n_localized = static_cast<double>(localized);
  if (localized >= 2) {
    m.position = position_repeatability(records);
    m.rotation = rotation_repeatability(records);
  } else {
    m.position = {kNaN, kNaN};
    m.rotation = {kNaN, kNaN};
  }
  m.accuracy_rmse_mm = localized >= 1 ? accuracy_rmse(records) : kNaN;
  return m;
}

MetricsReport average_executions(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw Error(ErrorCode::kMismatchedTrials, "no reports to average");
  for (const auto& r : reports) {
    if (r.n_total != reports.front().n_total) {
      throw Error(ErrorCode::kMismatchedTrials, "reports cover different trial counts");
    }
  }
  MetricsReport out;
  out.n_total = reports.front().n_total;
  const auto field_mean = [&](auto getter) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : reports) {
      const double v = getter(r);
      if (std::isnan(v)) continue;
      sum += v;
      ++n;
    }
    return n > 0 ? sum / static_cast<double>(n) : kNaN;
  };
  out.position.max_eigenvalue = field_mean([](const MetricsReport& r) { return r.position.max_eigenvalue; });
  out.position.trace = field_mean([](const MetricsReport& r) { return r.position.trace; });
  out.rotation.max_eigenvalue = field_mean([](const MetricsReport& r) { return r.rotation.max_eigenvalue; });
  out.rotation.trace = field_mean([](const MetricsReport& r) { return r.rotation.trace; });
  out.accuracy_rmse_mm = field_mean([](const MetricsReport& r) { return r.accuracy_rmse_mm; });
  out.failure_rate_pct = field_mean([](const MetricsReport& r) { return r.failure_rate_pct; });
  out.n_localized = field_mean([](const MetricsReport& r) { return r.n_localized; });
  return out;
}

Vec3 ground_truth_correction(const Vec3& gt_prism, const Vec3& measured_wall_offset) {
  return gt_prism + measured_wall_offset;
}

std::string report_csv_header() {
  return "icp,scan,pos_max_eig_mm2,pos_trace_mm2,rot_max_eig_mrad2,rot_trace_mrad2,rmse_mm,"
         "failure_pct";
}

std::string report_csv_row(const Method& method, const MetricsReport& r) {
  std::string row = std::string(to_string(method.icp)) + "," + std::string(to_string(method.scan));
  for (double v : {r.position.max_eigenvalue, r.position.trace, r.rotation.max_eigenvalue,
                   r.rotation.trace, r.accuracy_rmse_mm, r.failure_rate_pct}) {
    row += "," + fmt_value(v);
  }
  return row;
}

}  // namespace bimloc
