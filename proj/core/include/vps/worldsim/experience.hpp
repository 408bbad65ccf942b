#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vps/geometry/camera.hpp"
#include "vps/geometry/landmark.hpp"
#include "vps/geometry/pose.hpp"
#include "vps/worldsim/world.hpp"

namespace vps {

enum class Platform { vehicle, pedestrian };

std::string to_string(Platform p);
Platform platform_from_string(const std::string& s);

struct Observation {
  Vec2 pixel = Vec2::Zero();
  Descriptor descriptor = Descriptor::Zero();
};

struct GpsFix {
  Vec3 position = Vec3::Zero();
  double sigma = 1.0;
};

struct InsReading {
  // Unit gravity direction in the camera frame.
  Vec3 gravity = Vec3(0, 1, 0);
  // Rotation of this frame's camera relative to the previous frame's camera
  // (R_prev^T R_this); identity for the first frame.
  Quat relative_rotation = Quat::Identity();
};

// Ground truth that only the oracle and tests may read.
struct FrameTruth {
  Pose pose;
  // Landmark id per observation; -1 where the observation is not of a landmark.
  std::vector<int64_t> landmark_ids;
};

struct Frame {
  int64_t id = 0;
  int experience_id = 0;
  double timestamp = 0.0;
  double condition = 0.0;
  GpsFix gps;
  InsReading ins;
  std::vector<Observation> observations;
  FrameTruth truth;
};

struct Experience {
  int id = 0;
  std::string label;
  double condition = 0.0;
  Platform platform = Platform::vehicle;
  Camera camera;
  std::vector<Frame> frames;
};

// Frame ids are unique across experiences.
inline int64_t make_frame_id(int experience_id, int index) {
  return static_cast<int64_t>(experience_id) * 1000000 + index;
}

// Waypoints along streets; every leg must lie on a single street.
struct Route {
  std::vector<Vec2> waypoints;
};

// Route following the given streets in order, turning at their
// intersections. Throws RouteNotInWorld for unknown or non-intersecting
// streets. `reverse` walks the first street from its far end.
Route make_route(const World& world, const std::vector<int>& street_ids, bool reverse = false);
// Throws RouteNotInWorld when a leg does not lie on any street.
void validate_route(const World& world, const Route& route);

struct NoiseConfig {
  double gps_sigma = 5.0;
  // Vertical GPS noise as a fraction of the horizontal sigma.
  double gps_vertical_factor = 0.3;
  double canyon_bias = 8.0;
  double pixel_sigma = 1.0;
  double descriptor_sigma = 0.05;
  double ins_rotation_sigma_deg = 0.1;
  // Probability that a visible landmark is not observed.
  double dropout = 0.0;

  static NoiseConfig none();
};

enum class YawPattern { fixed, alternate, sweep };

struct CaptureConfig {
  int experience_id = 0;
  std::string label = "day";
  double condition = 0.0;
  Platform platform = Platform::vehicle;
  double speed = 8.0;       // m/s
  double frame_rate = 2.0;  // Hz
  double start_time = 0.0;
  // Lateral offset to the right of the centreline (pedestrians walk on the
  // sidewalk).
  double lateral_offset = 0.0;
  double camera_height = 2.0;
  YawPattern yaw_pattern = YawPattern::alternate;
  double yaw_amplitude_deg = 45.0;
  double sweep_period = 8.0;  // s, for YawPattern::sweep
  double turn_radius = 20.0;
  double max_view_distance = 60.0;
  // RMS per descriptor dimension of the condition offset at condition 1.
  double condition_offset_magnitude = 1.0;
  Camera camera = Camera::from_fov(120.0 * M_PI / 180.0, 640.0, 480.0);
  uint64_t seed = 1;

  static CaptureConfig vehicle(int experience_id, double condition, uint64_t seed);
  static CaptureConfig pedestrian(int experience_id, double condition, uint64_t seed);
};

Experience simulate_experience(const World& world, const Route& route, const CaptureConfig& capture,
                               const NoiseConfig& noise);

// Noise-free observations of the world from an arbitrary pose.
std::vector<std::pair<int64_t, Vec2>> visible_landmarks(const World& world, const Pose& pose,
                                                        const Camera& camera, double max_distance);

}  // namespace vps
