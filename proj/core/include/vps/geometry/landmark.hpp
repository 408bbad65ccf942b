#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

#include "vps/geometry/pose.hpp"

namespace vps {

inline constexpr int kDescriptorDim = 16;
using Descriptor = Eigen::Matrix<double, kDescriptorDim, 1>;

struct Landmark {
  int64_t id = 0;
  Vec3 position = Vec3::Zero();
  Descriptor descriptor = Descriptor::Zero();
};

// Root-mean-square per-dimension difference, so thresholds are expressed in
// units of the per-dimension descriptor noise.
inline double descriptor_distance(const Descriptor& a, const Descriptor& b) {
  return (a - b).norm() / std::sqrt(static_cast<double>(kDescriptorDim));
}

}  // namespace vps
