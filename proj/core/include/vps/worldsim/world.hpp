#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vps/geometry/landmark.hpp"
#include "vps/geometry/pose.hpp"

namespace vps {

struct Street {
  int id = 0;
  std::vector<Vec2> points;  // polyline, meters
  double width = 24.0;

  double length() const;
};

// Axis-aligned building footprint used for line-of-sight tests.
struct Block {
  Vec2 min;
  Vec2 max;
};

struct WorldConfig {
  double width = 300.0;
  double height = 300.0;
  double street_spacing = 100.0;
  // Landmarks per 100 m of facade, per street side.
  double landmarks_per_100m = 40.0;
  // Distance of the facades from the street centreline.
  double facade_offset = 12.0;
  double min_landmark_height = 0.5;
  double max_landmark_height = 15.0;
  uint64_t seed = 7;
  // When non-empty these replace the grid; no occluding blocks are built.
  std::vector<Street> streets;
};

struct World {
  WorldConfig config;
  std::vector<Street> streets;
  std::vector<Block> blocks;
  std::vector<Landmark> landmarks;  // sorted by id, ids 0..n-1
  uint64_t seed = 0;

  const Street* street(int id) const;
  // True when the open segment between a and b crosses a building block.
  bool occluded(const Vec3& a, const Vec3& b) const;
};

// Throws BadConfig on non-positive extents, spacing or density.
World generate_world(const WorldConfig& config);

// Spatially smooth GPS offset (urban canyon) at a position; horizontal only.
Vec3 canyon_bias(const World& world, const Vec2& position, double amplitude);

// Offset added to a landmark's descriptor under a visual condition in [0, 1].
// Pure function of (landmark id, condition); its RMS per dimension equals
// condition * magnitude.
Descriptor condition_offset(int64_t landmark_id, double condition, double magnitude);

}  // namespace vps
