#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "vps/fusion/tile_index.hpp"
#include "vps/geometry/pose.hpp"
#include "vps/mapbuild/submap.hpp"

namespace vps {

using SubmapPtr = std::shared_ptr<const Submap>;

struct LinkEntry {
  int64_t submap_id = 0;
  Pose pose;  // the frame's pose in that submap
};

// A frame reconstructed in two or more submaps.
struct SharedFrameLink {
  int64_t frame_id = 0;
  std::vector<LinkEntry> entries;  // ascending submap id
};

// One link per frame that appears in at least two of the submaps, ascending
// frame id.
std::vector<SharedFrameLink> collect_links(std::span<const SubmapPtr> submaps);

struct FusionOptions {
  // Weight of the GPS term relative to the shared-frame term.
  double lambda = 0.01;
  // Meters per radian of orientation disagreement between linked frames.
  double rotation_weight = 1.0;
  // Prior tying transformed camera orientations to their INS gravity
  // readings, weight 1/sigma^2 per frame; zero disables it.
  double gravity_sigma_deg = 1.0;
  double tile_size = 100.0;
  double bounds_margin = 20.0;
  int max_iterations = 100;
  double relative_tolerance = 1e-14;
};

struct LinkResidual {
  int64_t frame_id = 0;
  // Largest position disagreement between any two entries, before and after.
  double displacement_before = 0.0;
  double displacement_after = 0.0;
  double rotation_after_deg = 0.0;
};

struct FusionReport {
  std::vector<LinkResidual> links;
  // Mean distance between transformed frame positions and their GPS fixes.
  std::map<int64_t, double> gps_residual_before;
  std::map<int64_t, double> gps_residual_after;
  // Full objective (shared-frame, GPS and gravity terms) over the solved
  // components.
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int components = 0;
  int iterations = 0;
};

struct FusionResult {
  std::map<int64_t, Sim3> transforms;
  FusionReport report;
};

// Jointly estimates one Sim3 per submap minimising
//   sum over links, entry pairs k<l:  |T_k c_k - T_l c_l|^2 + w_rot^2 |Log(R_l^T R_k)|^2
//   + lambda * sum over frames |T_k c - gps|^2 + gravity prior,
// independently for each connected component of the link graph. Missing
// initial transforms start at the identity. Throws SolverDiverged.
FusionResult fuse(std::span<const SubmapPtr> submaps, const std::vector<SharedFrameLink>& links,
                  const FusionOptions& options = {}, const std::map<int64_t, Sim3>& initial = {});

// Objective of `fuse` at the given transforms (identity where missing).
double fusion_cost(std::span<const SubmapPtr> submaps, const std::vector<SharedFrameLink>& links,
                   const std::map<int64_t, Sim3>& transforms, const FusionOptions& options = {});

// Horizontal bounding circle of the transformed frame positions plus margin.
Circle submap_bounds(const Submap& submap, const Sim3& transform, double margin);

// The fused map. Copies share submap payloads.
struct GlobalMap {
  FusionOptions options;
  std::map<int64_t, SubmapPtr> submaps;
  std::map<int64_t, Sim3> transforms;
  std::map<int64_t, Circle> bounds;
  TileIndex index;
  FusionReport report;
  // Submaps offered to the map but not usable (discarded or unverified).
  std::vector<int64_t> rejected;

  GlobalMap() = default;
  explicit GlobalMap(const FusionOptions& o) : options(o), index(o.tile_size) {}

  bool empty() const { return submaps.empty(); }
  std::vector<SubmapPtr> submap_list() const;
  // Throws UnknownSubmap.
  const Submap& submap(int64_t id) const;
  const Sim3& transform(int64_t id) const;
  // Landmark position in the global frame.
  Vec3 landmark_position(int64_t submap_id, const SubmapLandmark& landmark) const;
};

GlobalMap build_map(std::vector<SubmapPtr> submaps, const FusionOptions& options = {});

// Adds usable submaps and re-fuses the connected components that contain
// them, warm-started from the current transforms. Components without a new
// submap keep their transforms unchanged. Throws SolverDiverged.
GlobalMap update_map(const GlobalMap& map, std::vector<SubmapPtr> new_submaps);

// Removes submaps and re-fuses the components they belonged to. Throws
// UnknownSubmap.
GlobalMap remove_submaps(const GlobalMap& map, const std::vector<int64_t>& ids);

}  // namespace vps
