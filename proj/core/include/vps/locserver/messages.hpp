#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vps/geometry/camera.hpp"
#include "vps/geometry/landmark.hpp"
#include "vps/geometry/pose.hpp"

namespace vps {

struct Feature {
  Vec2 pixel = Vec2::Zero();
  Descriptor descriptor = Descriptor::Zero();
};

struct LocalizeRequest {
  std::string device_id;
  double timestamp = 0.0;
  Vec3 gps = Vec3::Zero();
  double gps_sigma = 5.0;
  std::vector<Feature> features;
  Camera camera;
};

enum class LocalizeStatus : uint8_t { success = 0, no_submap = 1, insufficient_inliers = 2 };

std::string to_string(LocalizeStatus s);

struct LocalizeResponse {
  LocalizeStatus status = LocalizeStatus::no_submap;
  Pose pose;  // camera-to-global, valid on success
  uint32_t inliers = 0;
  int64_t submap_id = -1;
  double server_ms = 0.0;
};

struct ContentRecord {
  int64_t id = 0;
  Pose pose;
  std::string payload;
  std::string creator;
  double timestamp = 0.0;
};

struct ContentGet {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

struct PoseAnnounce {
  std::string device_id;
  double timestamp = 0.0;
  Pose pose;
};

struct PoseSubscribe {
  std::string device_id;
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

// Pose of another device. The server acknowledges a subscription with an
// event whose device id is empty.
using PoseEvent = PoseAnnounce;

}  // namespace vps
