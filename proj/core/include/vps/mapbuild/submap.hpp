#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vps/geometry/camera.hpp"
#include "vps/geometry/landmark.hpp"
#include "vps/geometry/pose.hpp"
#include "vps/mapbuild/frame_store.hpp"
#include "vps/mapbuild/split.hpp"
#include "vps/mapbuild/tracks.hpp"

namespace vps {

enum class SubmapStatus { built, discarded };

struct SubmapFrame {
  int64_t frame_id = 0;
  Pose pose;  // camera-to-submap
  Camera camera;
  GpsFix gps;
  // INS gravity direction in the camera frame.
  Vec3 gravity = Vec3(0, 1, 0);
  double timestamp = 0.0;
  // True for the subset's own frames (members and overlap), false for
  // augmented ones.
  bool origin = false;
};

struct LandmarkObservation {
  int64_t frame_id = 0;
  int index = 0;
  Vec2 pixel = Vec2::Zero();
};

struct SubmapLandmark {
  int64_t id = 0;  // source track id
  Vec3 position = Vec3::Zero();
  Descriptor descriptor = Descriptor::Zero();  // mean of the observations
  std::vector<LandmarkObservation> observations;
};

struct VerificationReport {
  bool checked = false;
  bool passed = false;
  double median_relative_rotation_deg = 0.0;
  double median_gravity_deg = 0.0;
  double max_speed = 0.0;
  double max_acceleration = 0.0;
  std::vector<std::string> failures;
};

struct Submap {
  int64_t id = 0;
  int experience_id = 0;
  SubmapStatus status = SubmapStatus::discarded;
  std::string failure;
  std::vector<SubmapFrame> frames;         // ascending frame id
  std::vector<SubmapLandmark> landmarks;   // ascending id
  double reprojection_rmse = 0.0;
  double cost = 0.0;                       // objective of the final adjustment
  double outlier_fraction = 0.0;
  int attempted_origin_frames = 0;
  VerificationReport verification;
  // Objective after every accepted step of the final adjustment. Not
  // persisted.
  std::vector<double> cost_history;

  const SubmapFrame* find_frame(int64_t frame_id) const;
  bool usable() const { return status == SubmapStatus::built && verification.passed; }
};

struct BuildOptions {
  // GPS weight per fix is lambda_scale / sigma^2, sigma floored at min_gps_sigma.
  double lambda_scale = 1.0;
  double min_gps_sigma = 0.1;
  double huber_px = 2.0;
  // Prior tying each camera's vertical axis to its INS gravity reading; zero
  // disables it.
  double gravity_sigma_deg = 1.0;
  double min_triangulation_angle_deg = 1.0;
  double min_seed_parallax_deg = 2.0;
  size_t min_seed_tracks = 8;
  size_t min_registration_points = 8;
  // Quality gates.
  double outlier_px = 6.0;
  double max_outlier_fraction = 0.2;
  double min_registered_fraction = 0.5;
  // Shuffles the pixels of corruption_fraction of the observations, applied
  // to a subset with probability corruption_probability (moving-object chaos).
  double corruption_probability = 0.0;
  double corruption_fraction = 0.6;
  int max_iterations = 100;
};

// Incremental SfM over one subset followed by adjustment of reprojection
// error plus GPS prior. Quality-gate failures give status=discarded with a
// reason. Throws InsufficientOverlap when no frame pair can seed the
// reconstruction and SolverDiverged on numerical failure.
Submap build_submap(const FrameSubset& subset, const std::vector<Track>& tracks,
                    const FrameStore& frames, const BuildOptions& options, uint64_t seed);

// Huber-robust reprojection cost over all landmark observations.
double reprojection_cost(const Submap& submap, double huber_px = 2.0);
double reprojection_rmse(const Submap& submap);
// Reprojection cost plus the weighted GPS term. The gravity prior used while
// building is not included.
double submap_objective(const Submap& submap, const BuildOptions& options = {});

// Submap with every pose and landmark mapped through `s`.
Submap transform_submap(const Submap& submap, const Sim3& s);

// Yaw, scale and translation (gravity preserved) that best maps `from` onto
// `to` in the least-squares sense.
Sim3 align_yaw_scale(const std::vector<Vec3>& from, const std::vector<Vec3>& to);

}  // namespace vps
