#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vps/edgeclient/sync.hpp"
#include "vps/locserver/messages.hpp"
#include "vps/locserver/server.hpp"
#include "vps/worldsim/experience.hpp"
#include "vps/worldsim/vio.hpp"

namespace vps {

struct KeyframePolicy {
  double distance = 2.0;  // m travelled
  double interval = 2.0;  // s elapsed
};

// Indices of the samples that become keyframes: one whenever the path
// length or the time since the previous keyframe (initially the first
// sample) reaches the policy limits.
std::vector<size_t> select_keyframes(std::span<const TimedPose> stream, const KeyframePolicy& policy = {});

// Simulated mobile link. Delays are logical seconds.
struct NetworkModel {
  double latency = 0.05;      // s, each way
  double bandwidth = 1.0e6;   // bytes/s
  double drop = 0.0;          // probability a request is lost
  uint64_t seed = 1;

  // Throws BadConfig.
  void validate() const;
  double transfer_time(size_t bytes) const { return latency + static_cast<double>(bytes) / bandwidth; }
};

// Sum of map, localisation and odometry error terms: the odometry drift rate
// eps_vo (m/s) accumulates over dt / r_loc between successful fixes. Throws
// BadRate unless r_loc lies in (0, 1].
double predict_error(double eps_map, double eps_loc, double eps_vo, double dt, double r_loc);

struct SessionOptions {
  std::string device_id = "device";
  KeyframePolicy keyframes;
  NetworkModel network;
  SyncOptions sync;
  // Logical server processing time added to every round trip.
  double server_time = 0.77;
};

struct TraceRequest {
  int seq = 0;
  int64_t frame_id = 0;
  double sent = 0.0;
  size_t bytes = 0;
  double uplink = 0.0;  // transfer delay
  bool dropped = false;
};

struct TraceResponse {
  int seq = 0;
  int64_t frame_id = 0;
  double received = 0.0;
  LocalizeStatus status = LocalizeStatus::no_submap;
  Pose pose;
  uint32_t inliers = 0;
  int64_t submap_id = -1;
  double server_ms = 0.0;
  // Sync outcome for successful results, empty otherwise.
  std::string sync;
};

struct TracePose {
  int64_t frame_id = 0;
  double timestamp = 0.0;
  Pose local;
  std::optional<Pose> global;  // empty while uninitialised
};

struct TraceEvent {
  double timestamp = 0.0;
  std::string kind;  // "connection_lost"
  std::string message;
};

struct SessionTrace {
  std::string device_id;
  std::vector<TraceRequest> requests;
  std::vector<TraceResponse> responses;
  std::vector<TracePose> poses;
  std::vector<TraceEvent> events;

  bool connection_lost() const;
};

using Localizer = std::function<LocalizeResponse(const LocalizeRequest&)>;

// Replays a capture on one logical timeline: odometry poses are consumed at
// their timestamps, keyframe requests travel through the network model and
// are answered by `localize` (called asynchronously, so requests stay in
// flight while poses are recorded). A ConnectionLost from the localizer ends
// further requests; the session continues on odometry alone. `frames` and
// `vio.poses` correspond one to one.
SessionTrace run_session(const Experience& capture, const VioLog& vio, const Localizer& localize,
                         const SessionOptions& options = {});
// Same, against a server. A failed connect is recorded, not thrown.
SessionTrace run_session(const Experience& capture, const VioLog& vio, const Endpoint& server,
                         const SessionOptions& options = {});

LocalizeRequest make_request(const Frame& frame, const Camera& camera, const std::string& device_id);

// JSON Lines, one record per line tagged by "type". Throw IoFailure.
void write_trace(const SessionTrace& trace, const std::filesystem::path& path);
SessionTrace read_trace(const std::filesystem::path& path);

}  // namespace vps
