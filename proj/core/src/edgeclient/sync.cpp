#include "vps/edgeclient/sync.hpp"

#include <algorithm>
#include <cmath>

#include "vps/error.hpp"

namespace vps {

const char* to_string(SyncOutcome o) {
  switch (o) {
    case SyncOutcome::accepted: return "accepted";
    case SyncOutcome::pending: return "pending";
    case SyncOutcome::gated: return "gated";
    case SyncOutcome::diverged: return "diverged";
  }
  return "?";
}

namespace {

// Residuals per entry: position (3) then weighted rotation (3), each its own
// Huber block. Parameters are the Sim3 vector; the tangent drops the scale
// in rigid mode.
class SyncProblem : public LeastSquaresProblem {
 public:
  SyncProblem(const std::deque<SyncEntry>& history, const SyncOptions& options, double t_now,
              double weight_scale, const std::vector<bool>& excluded)
      : history_(history), options_(options) {
    for (size_t i = 0; i < history.size(); ++i) {
      const bool out = !excluded.empty() && excluded[i];
      const double w = out ? 0.0 : weight_scale * std::pow(options.tau, t_now - history[i].timestamp);
      blocks_.push_back({static_cast<Eigen::Index>(6 * i), 3, options.huber_delta, w});
      blocks_.push_back({static_cast<Eigen::Index>(6 * i + 3), 3, options.huber_delta, w});
    }
  }

  Eigen::Index parameter_size() const override { return 8; }
  Eigen::Index tangent_size() const override { return options_.estimate_scale ? 7 : 6; }
  Eigen::Index residual_size() const override { return static_cast<Eigen::Index>(6 * history_.size()); }
  std::vector<ResidualBlock> residual_blocks() const override { return blocks_; }

  void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r, Triplets*) const override {
    const Sim3 T = Sim3::from_vector(x);
    for (size_t i = 0; i < history_.size(); ++i) {
      const Pose predicted = T.apply(history_[i].local);
      r.segment<3>(6 * i) = history_[i].global.translation() - predicted.translation();
      r.segment<3>(6 * i + 3) =
          options_.rotation_weight * so3_log(history_[i].global.rotation().conjugate() * predicted.rotation());
    }
  }

  Eigen::VectorXd plus(const Eigen::VectorXd& x, const Eigen::VectorXd& delta) const override {
    Vec7 d = Vec7::Zero();
    d.head(delta.size()) = delta;
    return Sim3::from_vector(x).retract(d).to_vector();
  }

 private:
  const std::deque<SyncEntry>& history_;
  const SyncOptions& options_;
  std::vector<ResidualBlock> blocks_;
};

SolverResult run(const SyncProblem& problem, const Sim3& initial, const SyncOptions& options) {
  SolverOptions so;
  so.max_iterations = options.max_iterations;
  so.relative_tolerance = 1e-14;
  try {
    SolverResult r = solve_least_squares(problem, initial.to_vector(), so);
    if (!r.parameters.allFinite()) throw SolverDiverged("sync transform is not finite");
    return r;
  } catch (const NonFiniteError& e) {
    throw SolverDiverged(std::string("sync solve: ") + e.what());
  }
}

}  // namespace

double sync_cost(const std::deque<SyncEntry>& history, const Sim3& transform, const SyncOptions& options,
                 double t_now, double weight_scale, const std::vector<bool>& excluded) {
  const SyncProblem problem(history, options, t_now, weight_scale, excluded);
  Eigen::VectorXd r(problem.residual_size());
  problem.evaluate(transform.to_vector(), r, nullptr);
  return robust_cost(problem, r);
}

SyncSolve solve_sync(const std::deque<SyncEntry>& history, const SyncOptions& options, double t_now,
                     const Sim3& initial, double weight_scale) {
  if (history.empty()) throw SolverDiverged("sync solve needs at least one entry");
  SyncSolve out;
  out.robust = run(SyncProblem(history, options, t_now, weight_scale, {}), initial, options);
  out.transform = Sim3::from_vector(out.robust.parameters);
  if (options.outlier_cutoff <= 0.0) return out;

  std::vector<bool> excluded(history.size(), false);
  for (size_t i = 0; i < history.size(); ++i) {
    const Vec3 p = out.transform.apply(history[i].local.translation());
    if ((history[i].global.translation() - p).norm() > options.outlier_cutoff) {
      excluded[i] = true;
      ++out.cut;
    }
  }
  // Keep the robust answer when the cut would leave nothing to fit.
  if (out.cut == 0 || out.cut == history.size()) {
    out.cut = 0;
    return out;
  }
  out.refit = run(SyncProblem(history, options, t_now, weight_scale, excluded), out.transform, options);
  out.transform = Sim3::from_vector(out.refit->parameters);
  return out;
}

SyncState::SyncState(SyncOptions options) : options_(options) {
  if (!(options_.tau > 0.0 && options_.tau <= 1.0)) throw BadConfig("sync tau must lie in (0, 1]");
  if (!(options_.huber_delta > 0.0)) throw BadConfig("sync Huber delta must be positive");
  if (options_.window == 0) throw BadConfig("sync window must be positive");
  if (options_.min_results < 1) throw BadConfig("sync min_results must be at least 1");
}

const Sim3& SyncState::transform() const {
  if (!initialized_) throw Uninitialized("no global transform yet");
  return transform_;
}

Pose SyncState::current_pose(const Pose& local) const { return transform().apply(local); }

double SyncState::residual(const SyncEntry& entry) const {
  return (entry.global.translation() - transform().apply(entry.local.translation())).norm();
}

bool SyncState::restart_candidate() {
  while (static_cast<int>(gated_.size()) > options_.gate_reset) gated_.erase(gated_.begin());
  const std::deque<SyncEntry> recent(gated_.begin(), gated_.end());
  const SyncEntry& last = recent.back();
  const double limit = options_.outlier_cutoff > 0.0 ? options_.outlier_cutoff : options_.gate;
  try {
    const Sim3 T = solve_sync(recent, options_, last.timestamp, Sim3::from_pose(last.global * last.local.inverse())).transform;
    for (const auto& e : recent) {
      if ((e.global.translation() - T.apply(e.local.translation())).norm() > limit) return false;
    }
  } catch (const SolverDiverged&) {
    return false;
  }
  return true;
}

SyncOutcome SyncState::update(const SyncEntry& entry) {
  if (!entry.local.translation().allFinite() || !entry.global.translation().allFinite() ||
      !entry.local.rotation().coeffs().allFinite() || !entry.global.rotation().coeffs().allFinite() ||
      !std::isfinite(entry.timestamp)) {
    throw NonFiniteError("sync update with non-finite values");
  }
  std::deque<SyncEntry> history = history_;
  bool restart = false;
  if (initialized_ && options_.gate > 0.0 && residual(entry) > options_.gate) {
    gated_.push_back(entry);
    if (static_cast<int>(gated_.size()) < options_.gate_reset || !restart_candidate()) {
      return SyncOutcome::gated;
    }
    // Persistent, self-consistent disagreement: restart from those results.
    restart = true;
    history.assign(gated_.begin(), gated_.end());
    std::sort(history.begin(), history.end(),
              [](const SyncEntry& a, const SyncEntry& b) { return a.timestamp < b.timestamp; });
  } else {
    auto pos = std::lower_bound(history.begin(), history.end(), entry.timestamp,
                                [](const SyncEntry& e, double t) { return e.timestamp < t; });
    if (pos != history.end() && pos->timestamp == entry.timestamp) return SyncOutcome::pending;
    history.insert(pos, entry);
  }
  while (history.size() > options_.window) history.pop_front();

  // Warm start from the current transform, or from the newest pair.
  Sim3 initial = transform_;
  if (!initialized_ || restart) {
    const SyncEntry& e = history.back();
    initial = Sim3::from_pose(e.global * e.local.inverse());
  }
  try {
    SyncSolve solve = solve_sync(history, options_, history.back().timestamp, initial);
    history_ = std::move(history);
    gated_.clear();
    transform_ = solve.transform;
    last_solve_ = std::move(solve);
  } catch (const SolverDiverged&) {
    ++diverged_;
    return SyncOutcome::diverged;
  }
  if (static_cast<int>(history_.size()) < options_.min_results) return SyncOutcome::pending;
  initialized_ = true;
  return SyncOutcome::accepted;
}

}  // namespace vps
