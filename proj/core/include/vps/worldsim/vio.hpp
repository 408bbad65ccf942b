#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "vps/geometry/pose.hpp"
#include "vps/worldsim/experience.hpp"

namespace vps {

struct TimedPose {
  double timestamp = 0.0;
  Pose pose;
};

// Odometry in a device-local frame. The first pose is the identity.
struct VioLog {
  std::vector<TimedPose> poses;
  double drift_rate = 0.0;  // fraction of distance travelled
};

// Local poses are the true poses, re-expressed relative to the first one,
// with a position error that grows by drift_rate * distance along a slowly
// wandering horizontal direction and a small heading random walk.
VioLog simulate_vio(std::span<const TimedPose> truth, double drift_rate, uint64_t seed);

std::vector<TimedPose> true_trajectory(const Experience& experience);

// Ground-truth lookup over a set of experiences. For tests and evaluation
// only.
class Oracle {
 public:
  Oracle() = default;
  explicit Oracle(std::span<const Experience> experiences) { add(experiences); }

  void add(std::span<const Experience> experiences);
  void add(const Experience& experience);
  void add_pose(int64_t frame_id, const Pose& pose) { poses_[frame_id] = pose; }

  // Throws UnknownFrame.
  const Pose& pose(int64_t frame_id) const;
  bool contains(int64_t frame_id) const { return poses_.count(frame_id) != 0; }
  size_t size() const { return poses_.size(); }

 private:
  std::unordered_map<int64_t, Pose> poses_;
};

inline Pose oracle_pose(const Oracle& oracle, int64_t frame_id) { return oracle.pose(frame_id); }

}  // namespace vps
