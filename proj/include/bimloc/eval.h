#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bimloc/geometry.h"
#include "bimloc/registration.h"
#include "bimloc/sensor_sim.h"

namespace bimloc {

/// One localized (or failed) scan with its ground truth.
class TrialRecord {
 public:
  /// The estimated prism is derived from the result, so it exists exactly
  /// when the scan was localized. `estimated_robot_pose` maps the result's
  /// transform to the robot body frame (identity if they coincide).
  TrialRecord(std::size_t scan_index, LocalizationResult result,
              const RigidTransform& ground_truth_pose, const Vec3& ground_truth_prism,
              const PrismSpec& prism, const RigidTransform& body_from_estimate = {});

  /// Builds a record directly from an estimated robot pose (nullopt = failed).
  static TrialRecord FromPose(std::size_t scan_index, const std::optional<RigidTransform>& estimate,
                              const Vec3& ground_truth_prism, const PrismSpec& prism);

  std::size_t scan_index() const { return scan_index_; }
  const LocalizationResult& result() const { return result_; }
  bool localized() const { return result_.localized(); }
  const RigidTransform& ground_truth_pose() const { return gt_pose_; }
  const Vec3& ground_truth_prism() const { return gt_prism_; }
  const std::optional<Vec3>& estimated_prism() const { return est_prism_; }
  const std::optional<RigidTransform>& estimated_pose() const { return est_pose_; }

 private:
  std::size_t scan_index_;
  LocalizationResult result_;
  RigidTransform gt_pose_;
  Vec3 gt_prism_;
  std::optional<RigidTransform> est_pose_;
  std::optional<Vec3> est_prism_;
};

struct Repeatability {
  double max_eigenvalue = 0.0;
  double trace = 0.0;
};

struct MetricsReport {
  Repeatability position;  // mm^2
  Repeatability rotation;  // mrad^2
  double accuracy_rmse_mm = 0.0;
  double failure_rate_pct = 0.0;
  double n_localized = 0.0;  // averaged reports may hold a fractional count
  std::size_t n_total = 0;
};

/// Largest eigenvalue and trace of the unbiased sample covariance of 3-vectors.
Repeatability covariance_summary(std::span<const Vec3> samples);

Repeatability position_repeatability(std::span<const TrialRecord> records);
Repeatability rotation_repeatability(std::span<const TrialRecord> records);
double accuracy_rmse(std::span<const TrialRecord> records);
double failure_rate(std::span<const TrialRecord> records);

/// Chordal L2 mean of rotations.
Mat3 chordal_mean(std::span<const Mat3> rotations);

/// Repeatability and accuracy are NaN when too few scans were localized.
MetricsReport compute_metrics(std::span<const TrialRecord> records);

/// Field-wise mean. NaN entries are skipped; a field is NaN only if every
/// report has it NaN.
MetricsReport average_executions(std::span<const MetricsReport> reports);

Vec3 ground_truth_correction(const Vec3& gt_prism, const Vec3& measured_wall_offset);

/// Header row of the report CSV.
std::string report_csv_header();
std::string report_csv_row(const Method& method, const MetricsReport& report);

}  // namespace bimloc
