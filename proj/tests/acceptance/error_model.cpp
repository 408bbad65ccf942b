#include <algorithm>

#include "acceptance.hpp"
#include "vps/cli/eval.hpp"
#include "vps/edgeclient/session.hpp"
#include "vps/locserver/localize.hpp"
#include "vps/pipeline/pipeline.hpp"

namespace vps::acceptance {

namespace {

constexpr double kDrift = 0.02;  // odometry drift per metre
constexpr int kCalibrationSessions = 4;
constexpr int kSessions = 20;
constexpr double kRelativeFactor = 2.0;  // relative error bound in units of drift

struct Town {
  World world = generate_world(WorldConfig{});
  Route route = make_route(world, {0, 7, 3});
  NoiseConfig noise;
  Town() { noise.canyon_bias = 0.0; }
};

struct SessionRun {
  SessionTrace trace;
  Oracle oracle;
};

SessionRun run_one(const Town& town, const MapHandle& map, int id) {
  const Experience q =
      simulate_experience(town.world, town.route, CaptureConfig::pedestrian(id, 0.0, 900 + id), town.noise);
  const VioLog vio = simulate_vio(true_trajectory(q), kDrift, 1900 + id);
  SessionOptions options;
  options.device_id = "walker-" + std::to_string(id);
  SessionRun r;
  r.trace = run_session(q, vio, [&](const LocalizeRequest& req) { return localize_image(map, req); }, options);
  r.oracle.add(q);
  return r;
}

}  // namespace

Outcome error_model() {
  Outcome out;
  const Town town;
  std::vector<Experience> mapping;
  for (int e = 1; e <= 2; ++e) {
    mapping.push_back(simulate_experience(town.world, town.route, CaptureConfig::vehicle(e, 0.0, 10 + e), town.noise));
  }
  PipelineOptions options;
  options.split.max_size = 40;
  const GlobalMap map = build_global_map(mapping, options);
  const auto handle = MapHandle::from_map(map);

  // Map error: fused frame positions against the oracle.
  const Oracle map_oracle(mapping);
  std::vector<double> map_errors;
  for (const auto& [id, s] : map.submaps) {
    for (const auto& f : s->frames) {
      map_errors.push_back((map.transform(id).apply(f.pose.translation()) - map_oracle.pose(f.frame_id).translation()).norm());
    }
  }
  const double eps_map = median(map_errors);

  // Localisation error and rate from separate calibration walks.
  std::vector<SessionTrace> calibration;
  Oracle calibration_oracle;
  for (int k = 0; k < kCalibrationSessions; ++k) {
    SessionRun r = run_one(town, *handle, 40 + k);
    for (const auto& p : r.trace.poses) calibration_oracle.add_pose(p.frame_id, r.oracle.pose(p.frame_id));
    calibration.push_back(std::move(r.trace));
  }
  const EvalReport cal = evaluate(calibration, calibration_oracle);
  const double eps_loc = cal.consistency;
  const double r_loc = cal.fix_rate;

  // Odometry error per second of walking, and the time between requests.
  const SessionOptions defaults;
  const double speed = CaptureConfig::pedestrian(0, 0.0, 0).speed;
  const double eps_vo = kDrift * speed;
  const double dt = std::min(defaults.keyframes.distance / speed, defaults.keyframes.interval);
  const double predicted = predict_error(eps_map, eps_loc, eps_vo, dt, r_loc);
  out.note("eps_map " + fmt(eps_map) + " m, eps_loc " + fmt(eps_loc) + " m, eps_vo " + fmt(eps_vo) + " m/s, dt " +
           fmt(dt) + " s, r_loc " + fmt(r_loc) + " => predicted " + fmt(predicted) + " m");

  std::vector<SessionTrace> traces;
  Oracle oracle;
  double worst = 0.0;
  int within = 0;
  for (int k = 0; k < kSessions; ++k) {
    SessionRun r = run_one(town, *handle, 60 + k);
    const EvalReport e = evaluate(std::span(&r.trace, 1), r.oracle);
    worst = std::max(worst, e.pose_error_median);
    within += e.pose_error_median <= predicted ? 1 : 0;
    for (const auto& p : r.trace.poses) oracle.add_pose(p.frame_id, r.oracle.pose(p.frame_id));
    traces.push_back(std::move(r.trace));
  }
  const EvalReport all = evaluate(traces, oracle);
  out.note("sessions: localisation rate " + fmt(all.localisation_rate) + ", pose error median " +
           fmt(all.pose_error_median) + " m, max " + fmt(all.pose_error_max) + " m");
  out.check("median session pose error within the prediction", within == kSessions,
            std::to_string(within) + "/" + std::to_string(kSessions) + " sessions, worst median " + fmt(worst) +
                " m <= " + fmt(predicted) + " m");
  out.check("relative error over 20 m", all.relative.mean_fraction <= kRelativeFactor * kDrift,
            "mean " + fmt(100 * all.relative.mean_fraction, 3) + "% of distance (" + fmt(all.relative.mean) + " m over " +
                std::to_string(all.relative.pairs) + " pairs) <= " + fmt(100 * kRelativeFactor * kDrift) + "%");
  return out;
}

}  // namespace vps::acceptance
