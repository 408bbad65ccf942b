#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace vps {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec7 = Eigen::Matrix<double, 7, 1>;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

// SO(3) helpers. Rotation vectors are axis * angle, angle in radians.
Mat3 skew(const Vec3& v);
Quat so3_exp(const Vec3& omega);
Vec3 so3_log(const Quat& q);
// Geodesic angle between two rotations, in [0, pi].
double rotation_angle(const Quat& a, const Quat& b);
// Inverse of the left/right Jacobians of SO(3) at rotation vector `omega`.
Mat3 so3_left_jacobian_inverse(const Vec3& omega);
Mat3 so3_right_jacobian_inverse(const Vec3& omega);

// Rigid transform from a local frame into the world frame. For cameras the
// local frame is the camera frame (x right, y down, z forward) and
// `translation` is the camera centre in world coordinates.
class Pose {
 public:
  Pose() : rotation_(Quat::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Quat& rotation, const Vec3& translation);
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose identity() { return {}; }
  // Takes the quaternion as is, for data that was normalised when written, so
  // that deserialisation is bit-exact.
  static Pose from_normalized(const Quat& rotation, const Vec3& translation) {
    Pose p;
    p.rotation_ = rotation;
    p.translation_ = translation;
    return p;
  }

  const Quat& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat3 rotation_matrix() const { return rotation_.toRotationMatrix(); }

  // local -> world
  Vec3 apply(const Vec3& local) const { return rotation_ * local + translation_; }
  // world -> local
  Vec3 apply_inverse(const Vec3& world) const {
    return rotation_.conjugate() * (world - translation_);
  }

  Pose inverse() const;
  Pose operator*(const Pose& rhs) const;

  // Tangent update: rotation is perturbed on the right (body frame), the
  // translation additively. delta = [d_rotation, d_translation].
  Pose retract(const Vec6& delta) const;

 private:
  Quat rotation_;
  Vec3 translation_;
};

// Similarity transform x -> scale * R * x + t.
class Sim3 {
 public:
  Sim3() : rotation_(Quat::Identity()), translation_(Vec3::Zero()), scale_(1.0) {}
  Sim3(const Quat& rotation, const Vec3& translation, double scale);

  static Sim3 identity() { return {}; }
  static Sim3 from_pose(const Pose& pose) { return {pose.rotation(), pose.translation(), 1.0}; }

  const Quat& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  double scale() const { return scale_; }

  Vec3 apply(const Vec3& x) const { return scale_ * (rotation_ * x) + translation_; }
  // Maps a pose expressed in the source frame into the target frame. Scale
  // acts on the position only.
  Pose apply(const Pose& pose) const;

  Sim3 inverse() const;
  Sim3 operator*(const Sim3& rhs) const;

  // Left-multiplicative tangent update:
  // R <- Exp(d_rot) R, t <- t + d_trans, s <- s * exp(d_log_scale).
  Sim3 retract(const Vec7& delta) const;

  // [qw, qx, qy, qz, tx, ty, tz, s]
  Eigen::Matrix<double, 8, 1> to_vector() const;
  static Sim3 from_vector(const Eigen::Matrix<double, 8, 1>& v);

 private:
  Quat rotation_;
  Vec3 translation_;
  double scale_;
};

// Rotation of the form Rz(yaw) that maps world-frame x to the given heading.
Quat yaw_rotation(double yaw);

// Camera-to-world rotation for an upright camera whose optical axis points
// along `heading` (radians from +x, counter-clockwise) with optional pitch
// (positive looks up). World z is up.
Quat camera_rotation_from_heading(double heading, double pitch = 0.0);

// Heading of the optical axis projected onto the horizontal plane.
double camera_heading(const Quat& camera_to_world);

}  // namespace vps
