#include "vps/geometry/pose.hpp"

#include <cmath>

namespace vps {

namespace {
constexpr double kSmallAngle = 1e-10;

Quat canonical(Quat q) {
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

double inverse_jacobian_coeff(double theta) {
  if (theta < 1e-5) return 1.0 / 12.0 + theta * theta / 720.0;
  return 1.0 / (theta * theta) - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
}
}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Quat so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < kSmallAngle) {
    Quat q(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    return q.normalized();
  }
  return Quat(Eigen::AngleAxisd(theta, omega / theta));
}

Vec3 so3_log(const Quat& q_in) {
  const Quat q = canonical(q_in);
  const Vec3 v = q.vec();
  const double sin_half = v.norm();
  if (sin_half < kSmallAngle) return 2.0 * v / q.w();
  const double theta = 2.0 * std::atan2(sin_half, q.w());
  return v * (theta / sin_half);
}

double rotation_angle(const Quat& a, const Quat& b) {
  return so3_log(a.conjugate() * b).norm();
}

Mat3 so3_left_jacobian_inverse(const Vec3& omega) {
  const Mat3 w = skew(omega);
  return Mat3::Identity() - 0.5 * w + inverse_jacobian_coeff(omega.norm()) * w * w;
}

Mat3 so3_right_jacobian_inverse(const Vec3& omega) {
  const Mat3 w = skew(omega);
  return Mat3::Identity() + 0.5 * w + inverse_jacobian_coeff(omega.norm()) * w * w;
}

Pose::Pose(const Quat& rotation, const Vec3& translation)
    : rotation_(rotation.normalized()), translation_(translation) {}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(Quat(rotation).normalized()), translation_(translation) {}

Pose Pose::inverse() const {
  const Quat inv = rotation_.conjugate();
  return Pose(inv, -(inv * translation_));
}

Pose Pose::operator*(const Pose& rhs) const {
  return Pose(rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_);
}

Pose Pose::retract(const Vec6& delta) const {
  return Pose(rotation_ * so3_exp(delta.head<3>()), translation_ + delta.tail<3>());
}

Sim3::Sim3(const Quat& rotation, const Vec3& translation, double scale)
    : rotation_(rotation.normalized()), translation_(translation), scale_(scale) {}

Pose Sim3::apply(const Pose& pose) const {
  return Pose(rotation_ * pose.rotation(), apply(pose.translation()));
}

Sim3 Sim3::inverse() const {
  const Quat inv = rotation_.conjugate();
  const double inv_scale = 1.0 / scale_;
  return Sim3(inv, -inv_scale * (inv * translation_), inv_scale);
}

Sim3 Sim3::operator*(const Sim3& rhs) const {
  return Sim3(rotation_ * rhs.rotation_, scale_ * (rotation_ * rhs.translation_) + translation_,
              scale_ * rhs.scale_);
}

Sim3 Sim3::retract(const Vec7& delta) const {
  return Sim3(so3_exp(delta.head<3>()) * rotation_, translation_ + delta.segment<3>(3),
              scale_ * std::exp(delta(6)));
}

Eigen::Matrix<double, 8, 1> Sim3::to_vector() const {
  Eigen::Matrix<double, 8, 1> v;
  v << rotation_.w(), rotation_.x(), rotation_.y(), rotation_.z(), translation_, scale_;
  return v;
}

Sim3 Sim3::from_vector(const Eigen::Matrix<double, 8, 1>& v) {
  Sim3 s(Quat(v(0), v(1), v(2), v(3)), v.segment<3>(4), v(7));
  // Keep the stored quaternion when it is already unit length, so that a
  // to_vector/from_vector round trip is bit-exact.
  if (std::abs(Quat(v(0), v(1), v(2), v(3)).squaredNorm() - 1.0) < 1e-12) {
    s.rotation_ = Quat(v(0), v(1), v(2), v(3));
  }
  return s;
}

Quat yaw_rotation(double yaw) { return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ())); }

Quat camera_rotation_from_heading(double heading, double pitch) {
  const Vec3 forward(std::cos(heading) * std::cos(pitch), std::sin(heading) * std::cos(pitch),
                     std::sin(pitch));
  const Vec3 right(std::sin(heading), -std::cos(heading), 0.0);
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return Quat(r).normalized();
}

double camera_heading(const Quat& camera_to_world) {
  const Vec3 forward = camera_to_world * Vec3::UnitZ();
  return std::atan2(forward.y(), forward.x());
}

}  // namespace vps
