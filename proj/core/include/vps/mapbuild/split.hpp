#pragma once

#include <cstdint>
#include <vector>

#include "vps/mapbuild/frame_store.hpp"

namespace vps {

// A spatially compact group of frames reconstructed as one submap.
struct FrameSubset {
  int64_t id = 0;
  int experience_id = 0;
  // Frames owned by this subset, ascending. Across one experience the member
  // lists partition the frames that survive sub-sampling.
  std::vector<int64_t> members;
  // Tail of the previous subset of the same experience (overlap region).
  std::vector<int64_t> overlap_frames;
  // Frames from neighbouring subsets of the same experience and from other
  // experiences, added by augment_subsets.
  std::vector<int64_t> augmented_same;
  std::vector<int64_t> augmented_cross;
  // Circle around the GPS positions of members and overlap frames.
  Vec2 center = Vec2::Zero();
  double radius = 0.0;

  size_t origin_size() const { return members.size() + overlap_frames.size(); }
  // Members, overlap and augmented frames, ascending and unique.
  std::vector<int64_t> all_frames() const;
};

struct SplitOptions {
  size_t max_size = 1000;
  double min_radius = 20.0;
  // Length of the tail of the previous subset repeated at the start of the
  // next one.
  double overlap_distance = 20.0;
};

inline int64_t make_subset_id(int experience_id, int index) {
  return static_cast<int64_t>(experience_id) * 1000 + index;
}

// Greedy sweep over the GPS track in capture order. A subset grows until it
// holds max_size frames and spans min_radius; if it had to grow past
// max_size to reach min_radius, its members are randomly sub-sampled.
std::vector<FrameSubset> split_experience(const Experience& experience, const SplitOptions& options,
                                          uint64_t seed);

// Adds up to `budget` frames from other subsets of the same experience and up
// to `budget` frames from other experiences whose GPS lies inside each
// subset's circle. Deterministic under `seed`, independent of subset order.
void augment_subsets(std::vector<FrameSubset>& subsets, const FrameStore& frames, size_t budget,
                     uint64_t seed);

}  // namespace vps
