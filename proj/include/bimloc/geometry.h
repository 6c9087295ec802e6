#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <span>
#include <vector>

namespace bimloc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// 6-vector (v, w): translational part first, rotational part second.
using Twist = Eigen::Matrix<double, 6, 1>;

/// Proper rigid-body motion x -> R x + t.
///
/// The rotation is held as an orthonormal matrix. Construction from an
/// arbitrary 3x3 matrix projects it onto SO(3) if it has drifted.
class RigidTransform {
 public:
  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform Identity() { return {}; }
  static RigidTransform FromTranslation(const Vec3& t) { return {Mat3::Identity(), t}; }
  // Quaternion given as (w, x, y, z); normalized on input.
  static RigidTransform FromQuaternion(const Eigen::Vector4d& wxyz, const Vec3& t);
  static RigidTransform FromAxisAngle(const Vec3& axis, double angle_rad,
                                      const Vec3& t = Vec3::Zero());
  static RigidTransform RotZ(double angle_rad, const Vec3& t = Vec3::Zero());
  // Yaw-pitch-roll (Z-Y-X) in radians.
  static RigidTransform FromYawPitchRoll(double yaw, double pitch, double roll,
                                         const Vec3& t = Vec3::Zero());

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Eigen::Vector4d quaternion_wxyz() const;
  Eigen::Matrix4d matrix() const;

  Vec3 operator*(const Vec3& x) const { return rotation_ * x + translation_; }
  // Rotate only (for directions and normals).
  Vec3 rotate(const Vec3& d) const { return rotation_ * d; }

  RigidTransform inverse() const;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

struct PoseDelta {
  double translation_norm = 0.0;  // m
  double rotation_angle = 0.0;    // rad, in [0, pi]
};

/// (a * b)(x) == a(b(x)).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  return compose(a, b);
}
RigidTransform invert(const RigidTransform& t);

/// Translation distance and relative rotation angle between two poses.
PoseDelta pose_delta(const RigidTransform& a, const RigidTransform& b);

/// Nearest rotation matrix in the Frobenius sense (SVD projection, det = +1).
Mat3 orthonormalize(const Mat3& m);
/// max |R^T R - I| and |det R - 1|.
double orthonormality_error(const Mat3& m);

Mat3 skew(const Vec3& w);

/// Rotation angle in [0, pi], stable at both ends of the range.
double rotation_angle(const Mat3& r);
/// Rotation vector (axis * angle).
Vec3 rotation_log(const Mat3& r);
Mat3 rotation_exp(const Vec3& w);

/// SE(3) exponential of a twist (v, w).
RigidTransform se3_exp(const Twist& xi);

std::vector<Vec3> transform_points(const RigidTransform& t, std::span<const Vec3> points);

}  // namespace bimloc
