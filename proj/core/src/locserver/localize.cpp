#include "vps/locserver/localize.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <random>

#include "vps/geometry/absolute_pose.hpp"
#include "vps/random.hpp"

namespace vps {

namespace {

struct Matches {
  std::vector<Vec3> points;  // global frame
  std::vector<Vec2> pixels;
  std::vector<Vec3> bearings;
};

// Nearest landmark per feature under the squared-distance limit.
Matches match_features(const LocalizeRequest& request, const Submap& submap, const Sim3& transform,
                       double threshold) {
  const double limit = threshold * threshold * kDescriptorDim;
  Matches m;
  for (const auto& f : request.features) {
    double best = limit;
    const SubmapLandmark* hit = nullptr;
    for (const auto& l : submap.landmarks) {
      const double d = (l.descriptor - f.descriptor).squaredNorm();
      if (d < best) {
        best = d;
        hit = &l;
      }
    }
    if (hit == nullptr) continue;
    m.points.push_back(transform.apply(hit->position));
    m.pixels.push_back(f.pixel);
    m.bearings.push_back(pixel_bearing(f.pixel, request.camera));
  }
  return m;
}

std::vector<size_t> inliers_of(const Pose& pose, const Matches& m, const Camera& camera, double px) {
  std::vector<size_t> out;
  for (size_t i = 0; i < m.points.size(); ++i) {
    const auto p = project(m.points[i], pose, camera);
    if (p && (*p - m.pixels[i]).norm() < px) out.push_back(i);
  }
  return out;
}

template <typename T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (size_t i : idx) out.push_back(v[i]);
  return out;
}

uint64_t request_key(const LocalizeRequest& r) {
  uint64_t h = derive_seed({std::bit_cast<uint64_t>(r.timestamp), r.features.size()});
  for (char c : r.device_id) h = splitmix64(h ^ static_cast<uint8_t>(c));
  if (!r.features.empty()) h = splitmix64(h ^ std::bit_cast<uint64_t>(r.features.front().pixel.x()));
  return h;
}

CandidateResult solve_candidate(const LocalizeRequest& request, const Submap& submap, const Sim3& transform,
                                const LocalizeParams& params) {
  CandidateResult result;
  result.submap_id = submap.id;
  const Matches m = match_features(request, submap, transform, params.match_threshold);
  result.matches = m.points.size();
  const size_t k = static_cast<size_t>(params.sample_size);
  if (m.points.size() < k) return result;

  // Coarse pose from the GPS position, an upright camera and a yaw grid,
  // robust over all matches.
  const PoseFit coarse =
      fit_pose_from_position(request.gps, Vec3(0, 1, 0), m.points, m.bearings, params.yaw_samples);

  std::mt19937_64 rng(derive_seed({params.seed, static_cast<uint64_t>(submap.id), request_key(request)}));
  std::vector<size_t> best = inliers_of(coarse.pose, m, request.camera, params.inlier_px);
  Pose best_pose = coarse.pose;
  std::vector<size_t> all(m.points.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  for (int it = 0; it < params.ransac_iterations && best.size() < m.points.size(); ++it) {
    std::vector<size_t> sample;
    std::sample(all.begin(), all.end(), std::back_inserter(sample), k, rng);
    const auto pts = pick(m.points, sample);
    const auto brs = pick(m.bearings, sample);
    const PoseFit fit = refine_pose_bearings(coarse.pose, pts, brs, 0.05, 20);
    auto in = inliers_of(fit.pose, m, request.camera, params.inlier_px);
    if (in.size() > best.size()) {
      best = std::move(in);
      best_pose = fit.pose;
    }
  }
  // Refine on the consensus set until it stops growing.
  for (int round = 0; round < 3 && best.size() >= k; ++round) {
    const PoseFit fit = refine_pose_pixels(best_pose, pick(m.points, best), pick(m.pixels, best), request.camera);
    auto in = inliers_of(fit.pose, m, request.camera, params.inlier_px);
    if (in.size() < best.size()) break;
    const bool grew = in.size() > best.size();
    best = std::move(in);
    best_pose = fit.pose;
    if (!grew) break;
  }
  result.inliers = static_cast<uint32_t>(best.size());
  result.pose = best_pose;
  return result;
}

}  // namespace

LocalizeResponse localize_image(const MapHandle& map, const LocalizeRequest& request, const LocalizeParams& params,
                                LocalizeDebug* debug) {
  const auto start = std::chrono::steady_clock::now();
  LocalizeResponse response;
  const auto ids = map.query_radius(request.gps.head<2>(), params.r_query);
  if (ids.empty()) {
    response.status = LocalizeStatus::no_submap;
  } else {
    std::optional<CandidateResult> winner;
    for (int64_t id : ids) {
      const CandidateResult c = solve_candidate(request, *map.submap(id), map.transform(id), params);
      if (debug != nullptr) debug->candidates.push_back(c);
      if (!winner || c.inliers > winner->inliers) winner = c;
    }
    if (winner->inliers >= params.min_inliers) {
      response.status = LocalizeStatus::success;
      response.pose = winner->pose;
      response.inliers = winner->inliers;
      response.submap_id = winner->submap_id;
    } else {
      response.status = LocalizeStatus::insufficient_inliers;
      response.inliers = winner->inliers;
      response.submap_id = winner->submap_id;
    }
  }
  response.server_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return response;
}

}  // namespace vps
