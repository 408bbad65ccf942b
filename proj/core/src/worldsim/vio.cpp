#include "vps/worldsim/vio.hpp"

#include <cmath>
#include <random>

#include "vps/error.hpp"
#include "vps/random.hpp"

namespace vps {

namespace {
// Random-walk rates per sqrt(meter).
constexpr double kDirectionWalk = 0.05;
constexpr double kHeadingWalkPerDrift = 0.02;
}  // namespace

VioLog simulate_vio(std::span<const TimedPose> truth, double drift_rate, uint64_t seed) {
  VioLog log;
  log.drift_rate = drift_rate;
  if (truth.empty()) return log;

  std::mt19937_64 rng(derive_seed({seed, 0x5100}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);

  const Pose origin_inv = truth.front().pose.inverse();
  double direction = angle(rng);
  double heading_error = 0.0;
  Vec3 position_error = Vec3::Zero();
  log.poses.reserve(truth.size());
  for (size_t k = 0; k < truth.size(); ++k) {
    if (k > 0 && drift_rate > 0.0) {
      const double step =
          (truth[k].pose.translation() - truth[k - 1].pose.translation()).norm();
      direction += kDirectionWalk * std::sqrt(step) * gauss(rng);
      heading_error += kHeadingWalkPerDrift * drift_rate * std::sqrt(step) * gauss(rng);
      position_error += drift_rate * step * Vec3(std::cos(direction), std::sin(direction), 0.0);
    }
    const Pose& t = truth[k].pose;
    const Pose drifted(yaw_rotation(heading_error) * t.rotation(), t.translation() + position_error);
    log.poses.push_back({truth[k].timestamp, origin_inv * drifted});
  }
  return log;
}

std::vector<TimedPose> true_trajectory(const Experience& experience) {
  std::vector<TimedPose> out;
  out.reserve(experience.frames.size());
  for (const auto& f : experience.frames) out.push_back({f.timestamp, f.truth.pose});
  return out;
}

void Oracle::add(std::span<const Experience> experiences) {
  for (const auto& e : experiences) add(e);
}

void Oracle::add(const Experience& experience) {
  for (const auto& f : experience.frames) poses_[f.id] = f.truth.pose;
}

const Pose& Oracle::pose(int64_t frame_id) const {
  auto it = poses_.find(frame_id);
  if (it == poses_.end()) throw UnknownFrame("unknown frame " + std::to_string(frame_id));
  return it->second;
}

}  // namespace vps
