#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vps/mapbuild/frame_store.hpp"
#include "vps/mapbuild/split.hpp"

namespace vps {

struct TrackObservation {
  int64_t frame_id = 0;
  int index = 0;  // into the frame's observations

  bool operator==(const TrackObservation&) const = default;
};

// Observations of one (putative) landmark across frames.
struct Track {
  int64_t id = 0;
  std::vector<TrackObservation> observations;  // ascending frame id
  std::optional<Vec3> position;
};

struct TrackOptions {
  // Descriptor distance (RMS per dimension) below which two observations
  // match: three times the descriptor noise.
  double match_threshold = 0.15;
  // Only frames closer than this (GPS, horizontal) are matched.
  double gating_radius = 100.0;
};

// Mutual nearest-neighbour descriptor matching between every pair of gated
// frames, transitive closure, then splitting of components that hold two
// observations of one frame or descriptors further apart than the threshold.
// Tracks have at least two observations; ids are 0..n-1 in a deterministic
// order.
std::vector<Track> build_tracks(const FrameSubset& subset, const FrameStore& frames,
                                const TrackOptions& options = {});

}  // namespace vps
