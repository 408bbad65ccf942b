#pragma once

#include "vps/mapbuild/frame_store.hpp"
#include "vps/mapbuild/submap.hpp"

namespace vps {

struct VerificationThresholds {
  double max_relative_rotation_deg = 2.0;  // median over consecutive pairs
  double max_gravity_deg = 5.0;            // median over frames
  double max_speed = 15.0;                 // m/s
  double max_acceleration = 5.0;           // m/s^2
  // Shortest time span over which velocities are taken for acceleration.
  double kinematic_window = 1.0;  // s
};

// Checks the origin frames of a submap against INS relative rotations,
// INS gravity and a simple motion model. Only consecutive captures of the
// origin experience are compared. Fills and returns submap.verification.
VerificationReport verify_submap(Submap& submap, const FrameStore& frames,
                                 const VerificationThresholds& thresholds = {});

}  // namespace vps
