#pragma once

#include <cstdint>
#include <vector>

#include "vps/locserver/messages.hpp"
#include "vps/mapstore/mapstore.hpp"

namespace vps {

struct LocalizeParams {
  double r_query = 50.0;
  uint32_t min_inliers = 12;
  int ransac_iterations = 200;
  int sample_size = 4;
  double inlier_px = 4.0;
  // RMS descriptor distance for a feature-to-landmark match.
  double match_threshold = 0.15;
  int yaw_samples = 8;
  uint64_t seed = 1;
};

struct CandidateResult {
  int64_t submap_id = 0;
  size_t matches = 0;
  uint32_t inliers = 0;
  Pose pose;  // global frame
};

// Per-candidate outcome, filled when requested.
struct LocalizeDebug {
  std::vector<CandidateResult> candidates;
};

// Matches the request against every submap within r_query of its GPS prior
// and answers with the candidate that has the most inliers. Deterministic for
// a given request and map.
LocalizeResponse localize_image(const MapHandle& map, const LocalizeRequest& request,
                                const LocalizeParams& params = {}, LocalizeDebug* debug = nullptr);

}  // namespace vps
