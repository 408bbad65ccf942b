#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "vps/fusion/fusion.hpp"
#include "vps/mapbuild/split.hpp"
#include "vps/mapbuild/submap.hpp"
#include "vps/mapbuild/tracks.hpp"
#include "vps/mapbuild/verify.hpp"
#include "vps/worldsim/experience.hpp"

namespace vps {

struct PipelineOptions {
  SplitOptions split;
  size_t augment_budget = 50;
  TrackOptions tracks;
  BuildOptions build;
  VerificationThresholds verify;
  FusionOptions fusion;
  uint64_t seed = 1;
  int workers = 1;
};

struct SubmapOutcome {
  int64_t id = 0;
  int experience_id = 0;
  // built (and verified), discarded, unverified or failed (exception).
  std::string status;
  std::string reason;
  size_t frames = 0;
  size_t landmarks = 0;
  double reprojection_rmse = 0.0;
  // GPS circle of the subset.
  Vec2 center = Vec2::Zero();
  double radius = 0.0;
};

struct StageTimings {
  double split = 0, augment = 0, tracks = 0, submaps = 0, verify = 0, fuse = 0;
};

struct BuildReport {
  std::vector<SubmapOutcome> submaps;  // ascending id
  StageTimings seconds;
  size_t attempted() const { return submaps.size(); }
  size_t usable() const;
  double success_rate() const;
};

// Splits and augments every experience, then reconstructs and verifies the
// subsets of the experiences in `build_ids` (all when empty) on `workers`
// threads. Results do not depend on the worker count.
std::vector<SubmapPtr> build_submaps(std::span<const Experience> experiences, const std::set<int>& build_ids,
                                     const PipelineOptions& options, BuildReport* report = nullptr);

GlobalMap build_global_map(std::span<const Experience> experiences, const PipelineOptions& options,
                           BuildReport* report = nullptr);

// Builds the submaps of `new_ids` (their subsets are augmented with frames
// of every experience) and fuses them into `map`.
GlobalMap update_global_map(const GlobalMap& map, std::span<const Experience> experiences,
                            const std::set<int>& new_ids, const PipelineOptions& options,
                            BuildReport* report = nullptr);

}  // namespace vps
