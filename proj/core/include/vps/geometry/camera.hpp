#pragma once

#include <optional>

#include <Eigen/Core>

#include "vps/geometry/pose.hpp"

namespace vps {

// Ideal pinhole camera, no distortion. Pixel (0,0) is the top-left corner.
struct Camera {
  double focal = 500.0;
  Vec2 principal_point{320.0, 240.0};
  Vec2 image_size{640.0, 480.0};

  bool valid() const;
  bool in_image(const Vec2& pixel) const;

  // Camera with the given horizontal field of view (radians) and image size,
  // principal point at the image centre.
  static Camera from_fov(double horizontal_fov, double width, double height);
};

// Points at or closer than this depth (camera frame) are treated as behind
// the camera.
inline constexpr double kMinDepth = 1e-6;

// Pixel of a world point seen by a camera at `pose` (camera-to-world).
// std::nullopt marks a point behind the camera.
std::optional<Vec2> project(const Vec3& landmark, const Pose& pose, const Camera& camera);

// Same as project() but for a point already in the camera frame.
std::optional<Vec2> project_camera_point(const Vec3& point_camera, const Camera& camera);

// World point at camera-frame depth `depth` along the ray through `pixel`.
Vec3 unproject(const Vec2& pixel, double depth, const Pose& pose, const Camera& camera);

// Unit-length viewing ray, camera frame.
Vec3 pixel_bearing(const Vec2& pixel, const Camera& camera);

// Jacobians of the projection of `landmark` with respect to the pose tangent
// [d_rot, d_trans] (see Pose::retract) and to the landmark position. Only
// meaningful when the point is in front of the camera.
struct ProjectionJacobian {
  Vec2 pixel;
  Eigen::Matrix<double, 2, 6> d_pose;
  Eigen::Matrix<double, 2, 3> d_point;
};
std::optional<ProjectionJacobian> project_with_jacobian(const Vec3& landmark, const Pose& pose,
                                                        const Camera& camera);

}  // namespace vps
