#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vps/geometry/pose.hpp"

namespace vps {

// Pose of camera 2 in the frame of camera 1 (x1 = R x2 + t) with a unit-length
// baseline, from unit bearing correspondences.
struct RelativePose {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::UnitX();
  std::vector<int> inliers;
};

// Eight-point essential matrix inside RANSAC, refit on the inliers, then the
// decomposition with the most points in front of both cameras. `threshold` is
// the angular distance (radians) of a bearing from its epipolar plane.
std::optional<RelativePose> estimate_relative_pose(std::span<const Vec3> bearings1,
                                                   std::span<const Vec3> bearings2,
                                                   int iterations, double threshold,
                                                   uint64_t seed);

// Point closest (least squares) to rays c_i + s d_i, d_i unit. std::nullopt
// for fewer than two rays or (near) parallel rays.
std::optional<Vec3> triangulate_midpoint(std::span<const Vec3> centers,
                                         std::span<const Vec3> directions);

// Largest pairwise angle between unit directions, radians.
double max_ray_angle(std::span<const Vec3> directions);

}  // namespace vps
