#include "bimloc/geometry.h"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bimloc/error.h"

namespace bimloc {
namespace {

constexpr double kDriftTolerance = 1e-9;

Vec3 vee(const Mat3& m) { return {m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)}; }

}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kEmptyPlan: return "EmptyPlan";
    case ErrorCode::kInsufficientConstraints: return "InsufficientConstraints";
    case ErrorCode::kUnknownSurfaceId: return "UnknownSurfaceId";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kMissingGroupNames: return "MissingGroupNames";
    case ErrorCode::kMissingDensities: return "MissingDensities";
    case ErrorCode::kDegenerateDensities: return "DegenerateDensities";
    case ErrorCode::kInsufficientSamples: return "InsufficientSamples";
    case ErrorCode::kMismatchedTrials: return "MismatchedTrials";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "non-finite transform");
  }
  if (orthonormality_error(rotation_) > kDriftTolerance) {
    rotation_ = orthonormalize(rotation_);
  }
}

RigidTransform RigidTransform::FromQuaternion(const Eigen::Vector4d& wxyz, const Vec3& t) {
  const double n = wxyz.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::kInvalidArgument, "quaternion must have non-zero finite norm");
  }
  const Eigen::Quaterniond q(wxyz[0] / n, wxyz[1] / n, wxyz[2] / n, wxyz[3] / n);
  return {q.toRotationMatrix(), t};
}

RigidTransform RigidTransform::FromAxisAngle(const Vec3& axis, double angle_rad, const Vec3& t) {
  const double n = axis.norm();
  if (n == 0.0) return FromTranslation(t);
  return {Eigen::AngleAxisd(angle_rad, axis / n).toRotationMatrix(), t};
}

RigidTransform RigidTransform::RotZ(double angle_rad, const Vec3& t) {
  return FromAxisAngle(Vec3::UnitZ(), angle_rad, t);
}

RigidTransform RigidTransform::FromYawPitchRoll(double yaw, double pitch, double roll,
                                                const Vec3& t) {
  const Mat3 r = (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                  Eigen::AngleAxisd(roll, Vec3::UnitX()))
                     .toRotationMatrix();
  return {r, t};
}

Eigen::Vector4d RigidTransform::quaternion_wxyz() const {
  Eigen::Quaterniond q(rotation_);
  q.normalize();
  // Canonical hemisphere keeps serialized output stable.
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return {q.w(), q.x(), q.y(), q.z()};
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidTransform RigidTransform::inverse() const { return invert(*this); }

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation()};
}

RigidTransform invert(const RigidTransform& t) {
  const Mat3 rt = t.rotation().transpose();
  return {rt, -(rt * t.translation())};
}

PoseDelta pose_delta(const RigidTransform& a, const RigidTransform& b) {
  PoseDelta d;
  d.translation_norm = (a.translation() - b.translation()).norm();
  d.rotation_angle = rotation_angle(a.rotation() * b.rotation().transpose());
  return d;
}

Mat3 orthonormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Mat3 r = u * v.transpose();
  if (r.determinant() < 0.0) {
    u.col(2) *= -1.0;
    r = u * v.transpose();
  }
  return r;
}

double orthonormality_error(const Mat3& m) {
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(m.determinant() - 1.0));
}

Mat3 skew(const Vec3& w) {
  Mat3 k;
  k << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return k;
}

double rotation_angle(const Mat3& r) {
  // atan2 of (sin, cos) stays well conditioned near 0 and near pi, where
  // acos of the trace alone loses precision.
  const double s = 0.5 * vee(r).norm();
  const double c = 0.5 * (r.trace() - 1.0);
  return std::atan2(s, c);
}

Vec3 rotation_log(const Mat3& r) {
  const double theta = rotation_angle(r);
  if (theta < 1e-8) return 0.5 * vee(r);
  if (theta > std::numbers::pi - 1e-4) {
    const Eigen::AngleAxisd aa(Eigen::Quaterniond(r).normalized());
    return aa.axis() * aa.angle();
  }
  return theta / (2.0 * std::sin(theta)) * vee(r);
}

Mat3 rotation_exp(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 k = skew(w);
  if (theta < 1e-8) return orthonormalize(Mat3::Identity() + k + 0.5 * k * k);
  return Mat3::Identity() + std::sin(theta) / theta * k +
         (1.0 - std::cos(theta)) / (theta * theta) * k * k;
}

RigidTransform se3_exp(const Twist& xi) {
  const Vec3 v = xi.head<3>();
  const Vec3 w = xi.tail<3>();
  const double theta = w.norm();
  const Mat3 k = skew(w);
  Mat3 left_jacobian;
  if (theta < 1e-8) {
    left_jacobian = Mat3::Identity() + 0.5 * k + k * k / 6.0;
  } else {
    const double t2 = theta * theta;
    left_jacobian = Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * k +
                    (theta - std::sin(theta)) / (t2 * theta) * k * k;
  }
  return {rotation_exp(w), left_jacobian * v};
}

std::vector<Vec3> transform_points(const RigidTransform& t, std::span<const Vec3> points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(t * p);
  return out;
}

}  // namespace bimloc
