#include "vps/geometry/camera.hpp"

#include <cmath>

namespace vps {

bool Camera::valid() const {
  return focal > 0.0 && image_size.x() > 0.0 && image_size.y() > 0.0 &&
         principal_point.x() >= 0.0 && principal_point.y() >= 0.0 &&
         principal_point.x() <= image_size.x() && principal_point.y() <= image_size.y();
}

bool Camera::in_image(const Vec2& pixel) const {
  return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < image_size.x() &&
         pixel.y() < image_size.y();
}

Camera Camera::from_fov(double horizontal_fov, double width, double height) {
  Camera c;
  c.focal = 0.5 * width / std::tan(0.5 * horizontal_fov);
  c.principal_point = Vec2(0.5 * width, 0.5 * height);
  c.image_size = Vec2(width, height);
  return c;
}

std::optional<Vec2> project_camera_point(const Vec3& p, const Camera& camera) {
  if (p.z() <= kMinDepth) return std::nullopt;
  return Vec2(camera.focal * p.x() / p.z() + camera.principal_point.x(),
              camera.focal * p.y() / p.z() + camera.principal_point.y());
}

std::optional<Vec2> project(const Vec3& landmark, const Pose& pose, const Camera& camera) {
  return project_camera_point(pose.apply_inverse(landmark), camera);
}

Vec3 pixel_bearing(const Vec2& pixel, const Camera& camera) {
  return Vec3((pixel.x() - camera.principal_point.x()) / camera.focal,
              (pixel.y() - camera.principal_point.y()) / camera.focal, 1.0)
      .normalized();
}

Vec3 unproject(const Vec2& pixel, double depth, const Pose& pose, const Camera& camera) {
  const Vec3 p((pixel.x() - camera.principal_point.x()) / camera.focal * depth,
               (pixel.y() - camera.principal_point.y()) / camera.focal * depth, depth);
  return pose.apply(p);
}

std::optional<ProjectionJacobian> project_with_jacobian(const Vec3& landmark, const Pose& pose,
                                                        const Camera& camera) {
  const Mat3 rt = pose.rotation_matrix().transpose();
  const Vec3 pc = rt * (landmark - pose.translation());
  if (pc.z() <= kMinDepth) return std::nullopt;

  const double inv_z = 1.0 / pc.z();
  Eigen::Matrix<double, 2, 3> d_proj;
  d_proj << camera.focal * inv_z, 0.0, -camera.focal * pc.x() * inv_z * inv_z,
            0.0, camera.focal * inv_z, -camera.focal * pc.y() * inv_z * inv_z;

  ProjectionJacobian out;
  out.pixel = Vec2(camera.focal * pc.x() * inv_z + camera.principal_point.x(),
                   camera.focal * pc.y() * inv_z + camera.principal_point.y());
  // pc(delta) = Exp(-d_rot) R^T (X - t - d_trans)
  out.d_pose.leftCols<3>() = d_proj * skew(pc);
  out.d_pose.rightCols<3>() = -d_proj * rt;
  out.d_point = d_proj * rt;
  return out;
}

}  // namespace vps
