#pragma once

#include <span>

#include "vps/geometry/camera.hpp"
#include "vps/geometry/pose.hpp"
#include "vps/geometry/robust.hpp"

namespace vps {

struct PoseFit {
  Pose pose;
  double cost = 0.0;
  int iterations = 0;
};

// Camera-to-world rotation of a camera looking along `heading` whose measured
// gravity direction in the camera frame is `gravity_camera`.
Quat gravity_aligned_rotation(double heading, const Vec3& gravity_camera);

// Minimises Huber-robust pixel reprojection error over the pose. Points
// behind the camera contribute a constant penalty.
PoseFit refine_pose_pixels(const Pose& initial, std::span<const Vec3> points,
                           std::span<const Vec2> pixels, const Camera& camera,
                           double huber_px = kReprojectionHuberPx, int max_iterations = 50);

// Minimises the chord distance between observed unit bearings (camera frame)
// and predicted ones. Unlike pixel error it is smooth for points behind the
// camera, so it converges from coarse initial guesses.
PoseFit refine_pose_bearings(const Pose& initial, std::span<const Vec3> points,
                             std::span<const Vec3> bearings, double huber = 0.05,
                             int max_iterations = 50);

// Coarse-to-fine pose from a position guess: each of `yaw_samples` headings
// is refined on bearings and the lowest cost wins.
PoseFit fit_pose_from_position(const Vec3& position, const Vec3& gravity_camera,
                               std::span<const Vec3> points, std::span<const Vec3> bearings,
                               int yaw_samples = 8);

}  // namespace vps
