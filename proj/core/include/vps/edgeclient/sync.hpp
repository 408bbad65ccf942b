#pragma once

#include <cstdint>
#include <deque>
#include <optional>

#include "vps/geometry/least_squares.hpp"
#include "vps/geometry/pose.hpp"

namespace vps {

struct SyncOptions {
  // Weight of an entry is tau^(age in seconds).
  double tau = 0.95;
  double huber_delta = 0.5;      // m
  double rotation_weight = 1.0;  // m per rad
  size_t window = 50;
  int min_results = 2;
  // Results farther than this from the current prediction are rejected once
  // the transform is initialised. Zero disables the gate.
  double gate = 10.0;
  // When the last this-many results were all gated but agree with each
  // other, the history restarts from them, so a bad initialisation cannot
  // lock the device out.
  int gate_reset = 3;
  // Entries whose position residual exceeds this after the robust solve are
  // dropped and the transform re-solved. Zero disables the cut.
  double outlier_cutoff = 1.5;
  // Estimate scale as well (7 DoF) for scale-drifting odometry.
  bool estimate_scale = false;
  int max_iterations = 50;
};

struct SyncEntry {
  double timestamp = 0.0;
  Pose local;   // odometry pose p_vo
  Pose global;  // localisation result p_M
  uint32_t inliers = 0;
};

enum class SyncOutcome { accepted, pending, gated, diverged };
const char* to_string(SyncOutcome o);

struct SyncSolve {
  Sim3 transform;
  SolverResult robust;  // Huber stage
  std::optional<SolverResult> refit;  // after the outlier cut, when any was cut
  size_t cut = 0;
};

// Weighted robust cost of mapping `local` onto `global` by T, with weights
// tau^(t_now - t_i) times `weight_scale`. Entries flagged in `excluded` are
// skipped.
double sync_cost(const std::deque<SyncEntry>& history, const Sim3& transform, const SyncOptions& options,
                 double t_now, double weight_scale = 1.0, const std::vector<bool>& excluded = {});

// Minimises sync_cost from `initial`. Throws SolverDiverged.
SyncSolve solve_sync(const std::deque<SyncEntry>& history, const SyncOptions& options, double t_now,
                     const Sim3& initial, double weight_scale = 1.0);

// Local-to-global transform maintained from successive localisations.
class SyncState {
 public:
  explicit SyncState(SyncOptions options = {});

  // Adds a localisation and re-solves. History stays sorted by timestamp;
  // a repeated timestamp is ignored. On divergence the previous transform is
  // kept.
  SyncOutcome update(const SyncEntry& entry);

  bool initialized() const { return initialized_; }
  // Throws Uninitialized.
  const Sim3& transform() const;
  Pose current_pose(const Pose& local) const;
  // Distance between a global result and the current prediction for it.
  double residual(const SyncEntry& entry) const;

  const std::deque<SyncEntry>& history() const { return history_; }
  const std::optional<SyncSolve>& last_solve() const { return last_solve_; }
  const SyncOptions& options() const { return options_; }
  int diverged_count() const { return diverged_; }

 private:
  bool restart_candidate();

  SyncOptions options_;
  std::deque<SyncEntry> history_;
  std::vector<SyncEntry> gated_;
  Sim3 transform_;
  bool initialized_ = false;
  std::optional<SyncSolve> last_solve_;
  int diverged_ = 0;
};

}  // namespace vps
