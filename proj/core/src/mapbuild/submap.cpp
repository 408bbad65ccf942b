#include "vps/mapbuild/submap.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>

#include "vps/error.hpp"
#include "vps/geometry/absolute_pose.hpp"
#include "vps/geometry/least_squares.hpp"
#include "vps/geometry/robust.hpp"
#include "vps/geometry/two_view.hpp"
#include "vps/random.hpp"

namespace vps {

namespace {

constexpr double kDeg = M_PI / 180.0;
// Pixel residual per axis for points behind a camera.
constexpr double kBehindPenalty = 1e3;

struct BaObservation {
  int frame;
  int point;
  Vec2 pixel;
};

// Reprojection error over poses and points, plus optional GPS and gravity
// priors per pose. Parameters are [poses (q, t) x 7 | points x 3].
class BundleProblem : public LeastSquaresProblem {
 public:
  BundleProblem(std::vector<const Camera*> cameras, std::vector<BaObservation> observations,
                int points, std::vector<Vec3> gps, std::vector<double> gps_weight,
                std::vector<Vec3> gravity, double gravity_weight, double huber_px)
      : cameras_(std::move(cameras)),
        obs_(std::move(observations)),
        frames_(static_cast<int>(cameras_.size())),
        points_(points),
        gps_(std::move(gps)),
        gps_weight_(std::move(gps_weight)),
        gravity_(std::move(gravity)),
        gravity_weight_(gravity_weight),
        huber_(huber_px) {
    for (int f = 0; f < frames_; ++f) {
      if (!gps_weight_.empty() && gps_weight_[static_cast<size_t>(f)] > 0.0) gps_frames_.push_back(f);
    }
  }

  Eigen::Index parameter_size() const override { return 7 * frames_ + 3 * points_; }
  Eigen::Index tangent_size() const override { return 6 * frames_ + 3 * points_; }
  Eigen::Index residual_size() const override {
    return static_cast<Eigen::Index>(2 * obs_.size() + 3 * gps_frames_.size() + 3 * gravity_.size());
  }
  bool analytic_jacobian() const override { return true; }

  Eigen::VectorXd plus(const Eigen::VectorXd& x, const Eigen::VectorXd& d) const override {
    Eigen::VectorXd out = x;
    for (int f = 0; f < frames_; ++f) {
      const Pose p = pose(x, f).retract(d.segment<6>(6 * f));
      out.segment<4>(7 * f) << p.rotation().w(), p.rotation().x(), p.rotation().y(), p.rotation().z();
      out.segment<3>(7 * f + 4) = p.translation();
    }
    out.tail(3 * points_) += d.tail(3 * points_);
    return out;
  }

  std::vector<ResidualBlock> residual_blocks() const override {
    std::vector<ResidualBlock> blocks;
    blocks.reserve(obs_.size() + gps_frames_.size());
    for (size_t i = 0; i < obs_.size(); ++i) {
      blocks.push_back({static_cast<Eigen::Index>(2 * i), 2, huber_, 1.0});
    }
    for (size_t k = 0; k < gps_frames_.size(); ++k) {
      blocks.push_back({static_cast<Eigen::Index>(2 * obs_.size() + 3 * k), 3, 0.0,
                        gps_weight_[static_cast<size_t>(gps_frames_[k])]});
    }
    for (size_t f = 0; f < gravity_.size(); ++f) {
      blocks.push_back({gravity_row(f), 3, 0.0, gravity_weight_});
    }
    return blocks;
  }

  void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r, Triplets* jac) const override {
    std::vector<Pose> poses;
    poses.reserve(static_cast<size_t>(frames_));
    for (int f = 0; f < frames_; ++f) poses.push_back(pose(x, f));
    const Eigen::Index point_base = 7 * frames_;
    const int point_col = 6 * frames_;
    if (jac) jac->reserve(obs_.size() * 18 + gps_frames_.size() * 3);
    for (size_t i = 0; i < obs_.size(); ++i) {
      const auto& o = obs_[i];
      const int row = static_cast<int>(2 * i);
      const Vec3 X = x.segment<3>(point_base + 3 * o.point);
      const auto pj = project_with_jacobian(X, poses[static_cast<size_t>(o.frame)], *cameras_[static_cast<size_t>(o.frame)]);
      if (!pj) {
        r.segment<2>(row).setConstant(kBehindPenalty);
        continue;
      }
      r.segment<2>(row) = pj->pixel - o.pixel;
      if (!jac) continue;
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 6; ++b) jac->emplace_back(row + a, 6 * o.frame + b, pj->d_pose(a, b));
        for (int b = 0; b < 3; ++b) jac->emplace_back(row + a, point_col + 3 * o.point + b, pj->d_point(a, b));
      }
    }
    for (size_t k = 0; k < gps_frames_.size(); ++k) {
      const int f = gps_frames_[k];
      const int row = static_cast<int>(2 * obs_.size() + 3 * k);
      r.segment<3>(row) = poses[static_cast<size_t>(f)].translation() - gps_[static_cast<size_t>(f)];
      if (jac) {
        for (int a = 0; a < 3; ++a) jac->emplace_back(row + a, 6 * f + 3 + a, 1.0);
      }
    }
    // Predicted gravity in the camera frame, R^T (0, 0, -1), against INS.
    for (size_t f = 0; f < gravity_.size(); ++f) {
      const int row = static_cast<int>(gravity_row(f));
      const Vec3 g = poses[f].rotation().conjugate() * Vec3(0, 0, -1);
      r.segment<3>(row) = g - gravity_[f];
      if (jac) {
        const Mat3 d = skew(g);
        for (int a = 0; a < 3; ++a) {
          for (int b = 0; b < 3; ++b) jac->emplace_back(row + a, 6 * static_cast<int>(f) + b, d(a, b));
        }
      }
    }
  }

  Eigen::Index gravity_row(size_t f) const {
    return static_cast<Eigen::Index>(2 * obs_.size() + 3 * gps_frames_.size() + 3 * f);
  }

  static Pose pose(const Eigen::VectorXd& x, int f) {
    const auto s = x.segment<7>(7 * f);
    return Pose(Quat(s(0), s(1), s(2), s(3)), Vec3(s(4), s(5), s(6)));
  }

 private:
  std::vector<const Camera*> cameras_;
  std::vector<BaObservation> obs_;
  int frames_;
  int points_;
  std::vector<Vec3> gps_;
  std::vector<double> gps_weight_;
  std::vector<int> gps_frames_;
  std::vector<Vec3> gravity_;
  double gravity_weight_;
  double huber_;
};

class Reconstruction {
 public:
  Reconstruction(const FrameSubset& subset, const std::vector<Track>& tracks, const FrameStore& store,
                 const BuildOptions& options, uint64_t seed)
      : subset_(subset), tracks_(tracks), options_(options), seed_(seed) {
    ids_ = subset.all_frames();
    std::vector<int64_t> origin = subset.members;
    origin.insert(origin.end(), subset.overlap_frames.begin(), subset.overlap_frames.end());
    std::sort(origin.begin(), origin.end());
    std::map<int64_t, int> index;
    for (size_t i = 0; i < ids_.size(); ++i) {
      index[ids_[i]] = static_cast<int>(i);
      frames_.push_back(&store.frame(ids_[i]));
      cameras_.push_back(&store.camera(ids_[i]));
      origin_.push_back(std::binary_search(origin.begin(), origin.end(), ids_[i]));
      pixels_.emplace_back();
      for (const auto& o : frames_.back()->observations) pixels_.back().push_back(o.pixel);
    }
    corrupt();
    pose_.assign(ids_.size(), std::nullopt);
    failed_.assign(ids_.size(), false);
    point_.assign(tracks.size(), std::nullopt);
    track_obs_.resize(tracks.size());
    frame_tracks_.resize(ids_.size());
    for (size_t t = 0; t < tracks.size(); ++t) {
      for (const auto& o : tracks[t].observations) {
        auto it = index.find(o.frame_id);
        if (it == index.end()) continue;
        track_obs_[t].emplace_back(it->second, o.index);
        frame_tracks_[static_cast<size_t>(it->second)].emplace_back(static_cast<int>(t), o.index);
      }
    }
  }

  Submap run() {
    Submap out;
    out.id = subset_.id;
    out.experience_id = subset_.experience_id;
    out.attempted_origin_frames = static_cast<int>(std::count(origin_.begin(), origin_.end(), true));
    try {
      seed_pair();
      register_all();
      bundle_adjust(false);
      triangulate_pending();
      const double registered_origin = count_registered(true);
      if (registered_origin < options_.min_registered_fraction * out.attempted_origin_frames) {
        fill(out);
        out.status = SubmapStatus::discarded;
        out.failure = "registered " + std::to_string(static_cast<int>(registered_origin)) + " of " +
                      std::to_string(out.attempted_origin_frames) + " frames";
        return out;
      }
      align_to_gps();
      out.cost_history = bundle_adjust(true);
    } catch (const NonFiniteError& e) {
      throw SolverDiverged(std::string("submap ") + std::to_string(subset_.id) + ": " + e.what());
    }
    fill(out);
    out.cost = out.cost_history.empty() ? 0.0 : out.cost_history.back();
    if (out.outlier_fraction > options_.max_outlier_fraction) {
      out.status = SubmapStatus::discarded;
      out.failure = "outlier fraction " + std::to_string(out.outlier_fraction);
    } else if (out.landmarks.empty()) {
      out.status = SubmapStatus::discarded;
      out.failure = "no landmarks";
    } else {
      out.status = SubmapStatus::built;
    }
    return out;
  }

 private:
  void corrupt() {
    std::mt19937_64 rng(derive_seed({seed_, static_cast<uint64_t>(subset_.id), 0xc0, 0x77}));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (!(options_.corruption_probability > 0.0) || unit(rng) >= options_.corruption_probability) return;
    for (auto& px : pixels_) {
      std::vector<size_t> chosen;
      for (size_t i = 0; i < px.size(); ++i) {
        if (unit(rng) < options_.corruption_fraction) chosen.push_back(i);
      }
      std::vector<Vec2> values;
      for (size_t i : chosen) values.push_back(px[i]);
      std::shuffle(values.begin(), values.end(), rng);
      for (size_t k = 0; k < chosen.size(); ++k) px[chosen[k]] = values[k];
    }
  }

  Vec3 bearing(int f, int obs) const {
    return pixel_bearing(pixels_[static_cast<size_t>(f)][static_cast<size_t>(obs)], *cameras_[static_cast<size_t>(f)]);
  }

  Vec3 gps(int f) const { return frames_[static_cast<size_t>(f)]->gps.position; }

  void seed_pair() {
    std::map<std::pair<int, int>, std::vector<int>> shared;
    for (size_t t = 0; t < track_obs_.size(); ++t) {
      const auto& obs = track_obs_[t];
      for (size_t i = 0; i < obs.size(); ++i) {
        for (size_t j = i + 1; j < obs.size(); ++j) {
          const auto key = std::minmax(obs[i].first, obs[j].first);
          shared[{key.first, key.second}].push_back(static_cast<int>(t));
        }
      }
    }
    std::vector<std::pair<std::pair<int, int>, const std::vector<int>*>> pairs;
    for (const auto& [k, v] : shared) {
      if (v.size() >= options_.min_seed_tracks) pairs.emplace_back(k, &v);
    }
    // Pairs of the subset's own frames first: a seed among augmentation
    // frames of another condition may never reach them.
    auto own = [&](const auto& p) {
      return static_cast<int>(origin_[static_cast<size_t>(p.first.first)]) +
             static_cast<int>(origin_[static_cast<size_t>(p.first.second)]);
    };
    std::stable_sort(pairs.begin(), pairs.end(), [&](const auto& a, const auto& b) {
      if (own(a) != own(b)) return own(a) > own(b);
      return a.second->size() > b.second->size();
    });
    if (pairs.empty()) {
      throw InsufficientOverlap("subset " + std::to_string(subset_.id) + " has no frame pair with " +
                                std::to_string(options_.min_seed_tracks) + " shared tracks");
    }

    constexpr size_t kMaxSeedAttempts = 30;
    for (size_t attempt = 0; attempt < std::min(kMaxSeedAttempts, pairs.size()); ++attempt) {
      const auto [a, b] = pairs[attempt].first;
      std::vector<Vec3> b1, b2;
      std::vector<int> track_of;
      for (int t : *pairs[attempt].second) {
        int oa = -1, ob = -1;
        for (const auto& [f, o] : track_obs_[static_cast<size_t>(t)]) {
          if (f == a) oa = o;
          if (f == b) ob = o;
        }
        b1.push_back(bearing(a, oa));
        b2.push_back(bearing(b, ob));
        track_of.push_back(t);
      }
      const double focal = std::min(cameras_[static_cast<size_t>(a)]->focal, cameras_[static_cast<size_t>(b)]->focal);
      const auto rel = estimate_relative_pose(b1, b2, 200, 3.0 / focal,
                                              derive_seed({seed_, static_cast<uint64_t>(subset_.id), static_cast<uint64_t>(attempt)}));
      if (!rel || rel->inliers.size() < options_.min_seed_tracks) continue;

      std::vector<double> angles;
      for (int i : rel->inliers) {
        const Vec3 d2 = rel->rotation * b2[static_cast<size_t>(i)];
        angles.push_back(std::atan2(b1[static_cast<size_t>(i)].cross(d2).norm(), b1[static_cast<size_t>(i)].dot(d2)));
      }
      std::nth_element(angles.begin(), angles.begin() + static_cast<long>(angles.size() / 2), angles.end());
      if (angles[angles.size() / 2] < options_.min_seed_parallax_deg * kDeg) continue;

      const Pose pa(gravity_aligned_rotation(0.0, frames_[static_cast<size_t>(a)]->ins.gravity), gps(a));
      const double baseline = std::max(0.5, (gps(a) - gps(b)).norm());
      const Pose rel_pose(rel->rotation, baseline * rel->translation);
      pose_[static_cast<size_t>(a)] = pa;
      pose_[static_cast<size_t>(b)] = pa * rel_pose;
      triangulate_pending();
      if (std::count_if(point_.begin(), point_.end(), [](const auto& p) { return p.has_value(); }) <
          static_cast<long>(options_.min_seed_tracks)) {
        pose_[static_cast<size_t>(a)].reset();
        pose_[static_cast<size_t>(b)].reset();
        std::fill(point_.begin(), point_.end(), std::nullopt);
        continue;
      }
      return;
    }
    throw InsufficientOverlap("subset " + std::to_string(subset_.id) + " has no frame pair with enough parallax");
  }

  bool triangulate(size_t t) {
    std::vector<Vec3> centers, dirs;
    for (const auto& [f, o] : track_obs_[t]) {
      const auto& p = pose_[static_cast<size_t>(f)];
      if (!p) continue;
      centers.push_back(p->translation());
      dirs.push_back(p->rotation() * bearing(f, o));
    }
    if (centers.size() < 2) return false;
    if (max_ray_angle(dirs) < options_.min_triangulation_angle_deg * kDeg) return false;
    const auto x = triangulate_midpoint(centers, dirs);
    if (!x) return false;
    for (const auto& [f, o] : track_obs_[t]) {
      const auto& p = pose_[static_cast<size_t>(f)];
      if (p && p->apply_inverse(*x).z() <= kMinDepth) return false;
    }
    point_[t] = *x;
    return true;
  }

  void triangulate_pending() {
    for (size_t t = 0; t < track_obs_.size(); ++t) {
      if (!point_[t]) triangulate(t);
    }
  }

  double count_registered(bool origin_only) const {
    double n = 0;
    for (size_t f = 0; f < pose_.size(); ++f) {
      if (pose_[f] && (!origin_only || origin_[f])) n += 1;
    }
    return n;
  }

  bool register_frame(int f) {
    std::vector<Vec3> points, bearings;
    std::vector<Vec2> pixels;
    std::map<int, int> covisible;
    for (const auto& [t, o] : frame_tracks_[static_cast<size_t>(f)]) {
      if (!point_[static_cast<size_t>(t)]) continue;
      points.push_back(*point_[static_cast<size_t>(t)]);
      pixels.push_back(pixels_[static_cast<size_t>(f)][static_cast<size_t>(o)]);
      bearings.push_back(bearing(f, o));
      for (const auto& [g, unused] : track_obs_[static_cast<size_t>(t)]) {
        if (g != f && pose_[static_cast<size_t>(g)]) ++covisible[g];
      }
    }
    if (points.size() < options_.min_registration_points) return false;
    std::vector<std::pair<int, int>> neighbours;
    for (const auto& [g, n] : covisible) neighbours.emplace_back(n, -g);
    std::sort(neighbours.rbegin(), neighbours.rend());
    if (neighbours.size() > 3) neighbours.resize(3);

    PoseFit best;
    best.cost = std::numeric_limits<double>::infinity();
    const Vec3 gravity = frames_[static_cast<size_t>(f)]->ins.gravity;
    for (const auto& [n, neg] : neighbours) {
      const PoseFit fit = fit_pose_from_position(pose_[static_cast<size_t>(-neg)]->translation(), gravity, points, bearings);
      if (fit.cost < best.cost) best = fit;
    }
    const PoseFit refined = refine_pose_pixels(best.pose, points, pixels, *cameras_[static_cast<size_t>(f)], options_.huber_px);
    size_t inliers = 0;
    for (size_t i = 0; i < points.size(); ++i) {
      const auto px = project(points[i], refined.pose, *cameras_[static_cast<size_t>(f)]);
      if (px && (*px - pixels[i]).norm() < options_.outlier_px) ++inliers;
    }
    if (inliers < options_.min_registration_points || 2 * inliers < points.size()) return false;
    pose_[static_cast<size_t>(f)] = refined.pose;
    return true;
  }

  void register_all() {
    size_t last_ba = static_cast<size_t>(count_registered(false));
    while (true) {
      int best = -1;
      size_t best_count = 0;
      for (size_t f = 0; f < ids_.size(); ++f) {
        if (pose_[f] || failed_[f]) continue;
        size_t n = 0;
        for (const auto& [t, o] : frame_tracks_[f]) n += point_[static_cast<size_t>(t)] ? 1 : 0;
        if (n > best_count) {
          best_count = n;
          best = static_cast<int>(f);
        }
      }
      if (best < 0 || best_count < options_.min_registration_points) return;
      if (!register_frame(best)) {
        failed_[static_cast<size_t>(best)] = true;
        continue;
      }
      triangulate_pending();
      const size_t registered = static_cast<size_t>(count_registered(false));
      if (registered >= last_ba + std::max<size_t>(3, last_ba / 4)) {
        bundle_adjust(false);
        triangulate_pending();
        last_ba = registered;
        // Frames that failed against a poorer reconstruction get another try.
        std::fill(failed_.begin(), failed_.end(), false);
      }
    }
  }

  // Adjusts all registered poses and triangulated points. Returns the cost
  // history.
  std::vector<double> bundle_adjust(bool with_gps) {
    std::vector<int> frame_slot(ids_.size(), -1), point_slot(tracks_.size(), -1);
    std::vector<int> frames, points;
    std::vector<const Camera*> cams;
    std::vector<Vec3> gps_pos, gravity;
    std::vector<double> gps_w;
    for (size_t f = 0; f < ids_.size(); ++f) {
      if (!pose_[f]) continue;
      frame_slot[f] = static_cast<int>(frames.size());
      frames.push_back(static_cast<int>(f));
      cams.push_back(cameras_[f]);
      gps_pos.push_back(gps(static_cast<int>(f)));
      const double sigma = std::max(frames_[f]->gps.sigma, options_.min_gps_sigma);
      gps_w.push_back(with_gps ? options_.lambda_scale / (sigma * sigma) : 0.0);
      gravity.push_back(frames_[f]->ins.gravity.normalized());
    }
    std::vector<BaObservation> obs;
    for (size_t t = 0; t < tracks_.size(); ++t) {
      if (!point_[t]) continue;
      for (const auto& [f, o] : track_obs_[t]) {
        if (frame_slot[static_cast<size_t>(f)] < 0) continue;
        if (point_slot[t] < 0) {
          point_slot[t] = static_cast<int>(points.size());
          points.push_back(static_cast<int>(t));
        }
        obs.push_back({frame_slot[static_cast<size_t>(f)], point_slot[t], pixels_[static_cast<size_t>(f)][static_cast<size_t>(o)]});
      }
    }
    if (obs.empty()) return {};

    Eigen::VectorXd x(7 * frames.size() + 3 * points.size());
    for (size_t k = 0; k < frames.size(); ++k) {
      const Pose& p = *pose_[static_cast<size_t>(frames[k])];
      x.segment<7>(static_cast<Eigen::Index>(7 * k)) << p.rotation().w(), p.rotation().x(), p.rotation().y(),
          p.rotation().z(), p.translation();
    }
    const Eigen::Index base = static_cast<Eigen::Index>(7 * frames.size());
    for (size_t k = 0; k < points.size(); ++k) {
      x.segment<3>(base + static_cast<Eigen::Index>(3 * k)) = *point_[static_cast<size_t>(points[k])];
    }
    const double gravity_sigma = options_.gravity_sigma_deg * kDeg;
    const double gravity_weight = gravity_sigma > 0.0 ? 1.0 / (gravity_sigma * gravity_sigma) : 0.0;
    if (gravity_weight == 0.0) gravity.clear();
    const BundleProblem problem(cams, std::move(obs), static_cast<int>(points.size()), gps_pos, gps_w,
                                gravity, gravity_weight, options_.huber_px);
    SolverOptions so;
    so.max_iterations = options_.max_iterations;
    const SolverResult result = solve_least_squares(problem, x, so);
    for (size_t k = 0; k < frames.size(); ++k) {
      pose_[static_cast<size_t>(frames[k])] = BundleProblem::pose(result.parameters, static_cast<int>(k));
    }
    for (size_t k = 0; k < points.size(); ++k) {
      point_[static_cast<size_t>(points[k])] = result.parameters.segment<3>(base + static_cast<Eigen::Index>(3 * k));
    }
    return result.cost_history;
  }

  // Levels the reconstruction with the INS gravity readings, then fits yaw,
  // scale and translation to GPS. GPS alone cannot fix the roll of a
  // reconstruction along a straight street.
  void align_to_gps() {
    Vec3 down = Vec3::Zero();
    for (size_t f = 0; f < ids_.size(); ++f) {
      if (pose_[f]) down += pose_[f]->rotation() * frames_[f]->ins.gravity.normalized();
    }
    const Sim3 level(Quat::FromTwoVectors(down, Vec3(0, 0, -1)), Vec3::Zero(), 1.0);
    std::vector<Vec3> from, to;
    for (size_t f = 0; f < ids_.size(); ++f) {
      if (!pose_[f]) continue;
      from.push_back(level.apply(pose_[f]->translation()));
      to.push_back(gps(static_cast<int>(f)));
    }
    const Sim3 s = align_yaw_scale(from, to) * level;
    for (auto& p : pose_) {
      if (p) p = s.apply(*p);
    }
    for (auto& x : point_) {
      if (x) x = s.apply(*x);
    }
  }

  void fill(Submap& out) const {
    size_t total = 0, outliers = 0;
    double sq = 0.0;
    size_t kept = 0;
    for (size_t f = 0; f < ids_.size(); ++f) {
      if (!pose_[f]) continue;
      SubmapFrame sf;
      sf.frame_id = ids_[f];
      sf.pose = *pose_[f];
      sf.camera = *cameras_[f];
      sf.gps = frames_[f]->gps;
      sf.gravity = frames_[f]->ins.gravity;
      sf.timestamp = frames_[f]->timestamp;
      sf.origin = origin_[f];
      out.frames.push_back(sf);
    }
    for (size_t t = 0; t < tracks_.size(); ++t) {
      if (!point_[t]) continue;
      SubmapLandmark lm;
      lm.id = tracks_[t].id;
      lm.position = *point_[t];
      for (const auto& [f, o] : track_obs_[t]) {
        const auto& p = pose_[static_cast<size_t>(f)];
        if (!p) continue;
        const Vec2 pixel = pixels_[static_cast<size_t>(f)][static_cast<size_t>(o)];
        const auto px = project(lm.position, *p, *cameras_[static_cast<size_t>(f)]);
        ++total;
        const double err = px ? (*px - pixel).norm() : std::numeric_limits<double>::infinity();
        if (err > options_.outlier_px) {
          ++outliers;
          continue;
        }
        sq += err * err;
        ++kept;
        lm.observations.push_back({ids_[static_cast<size_t>(f)], o, pixel});
      }
      if (lm.observations.size() < 2) continue;
      Descriptor mean = Descriptor::Zero();
      for (const auto& o : lm.observations) {
        mean += frames_[static_cast<size_t>(index_of(o.frame_id))]->observations[static_cast<size_t>(o.index)].descriptor;
      }
      lm.descriptor = mean / static_cast<double>(lm.observations.size());
      out.landmarks.push_back(std::move(lm));
    }
    std::sort(out.landmarks.begin(), out.landmarks.end(),
              [](const SubmapLandmark& a, const SubmapLandmark& b) { return a.id < b.id; });
    out.outlier_fraction = total ? static_cast<double>(outliers) / static_cast<double>(total) : 1.0;
    out.reprojection_rmse = kept ? std::sqrt(sq / (2.0 * static_cast<double>(kept))) : 0.0;
  }

  int index_of(int64_t id) const {
    return static_cast<int>(std::lower_bound(ids_.begin(), ids_.end(), id) - ids_.begin());
  }

  const FrameSubset& subset_;
  const std::vector<Track>& tracks_;
  const BuildOptions& options_;
  uint64_t seed_;

  std::vector<int64_t> ids_;
  std::vector<const Frame*> frames_;
  std::vector<const Camera*> cameras_;
  std::vector<bool> origin_;
  std::vector<std::vector<Vec2>> pixels_;
  std::vector<std::optional<Pose>> pose_;
  std::vector<bool> failed_;
  std::vector<std::optional<Vec3>> point_;
  std::vector<std::vector<std::pair<int, int>>> track_obs_;     // (frame slot, obs index)
  std::vector<std::vector<std::pair<int, int>>> frame_tracks_;  // (track, obs index)
};

}  // namespace

const SubmapFrame* Submap::find_frame(int64_t frame_id) const {
  auto it = std::lower_bound(frames.begin(), frames.end(), frame_id,
                             [](const SubmapFrame& f, int64_t id) { return f.frame_id < id; });
  return it != frames.end() && it->frame_id == frame_id ? &*it : nullptr;
}

Submap build_submap(const FrameSubset& subset, const std::vector<Track>& tracks,
                    const FrameStore& frames, const BuildOptions& options, uint64_t seed) {
  if (subset.all_frames().size() < 2) {
    throw InsufficientOverlap("subset " + std::to_string(subset.id) + " has fewer than two frames");
  }
  Reconstruction r(subset, tracks, frames, options, seed);
  return r.run();
}

double reprojection_cost(const Submap& submap, double huber_px) {
  double cost = 0.0;
  for (const auto& lm : submap.landmarks) {
    for (const auto& o : lm.observations) {
      const SubmapFrame* f = submap.find_frame(o.frame_id);
      if (f == nullptr) continue;
      const auto px = project(lm.position, f->pose, f->camera);
      const double err = px ? (*px - o.pixel).norm() : kBehindPenalty * std::sqrt(2.0);
      cost += huber_px > 0.0 ? huber(err, huber_px).loss : 0.5 * err * err;
    }
  }
  return cost;
}

double reprojection_rmse(const Submap& submap) {
  double sq = 0.0;
  size_t n = 0;
  for (const auto& lm : submap.landmarks) {
    for (const auto& o : lm.observations) {
      const SubmapFrame* f = submap.find_frame(o.frame_id);
      if (f == nullptr) continue;
      const auto px = project(lm.position, f->pose, f->camera);
      if (!px) continue;
      sq += (*px - o.pixel).squaredNorm();
      ++n;
    }
  }
  return n ? std::sqrt(sq / (2.0 * static_cast<double>(n))) : 0.0;
}

double submap_objective(const Submap& submap, const BuildOptions& options) {
  double cost = reprojection_cost(submap, options.huber_px);
  for (const auto& f : submap.frames) {
    const double sigma = std::max(f.gps.sigma, options.min_gps_sigma);
    cost += 0.5 * options.lambda_scale / (sigma * sigma) * (f.pose.translation() - f.gps.position).squaredNorm();
  }
  return cost;
}

Submap transform_submap(const Submap& submap, const Sim3& s) {
  Submap out = submap;
  for (auto& f : out.frames) f.pose = s.apply(f.pose);
  for (auto& l : out.landmarks) l.position = s.apply(l.position);
  return out;
}

Sim3 align_yaw_scale(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  if (from.empty() || from.size() != to.size()) return Sim3::identity();
  Vec3 cf = Vec3::Zero(), ct = Vec3::Zero();
  for (size_t i = 0; i < from.size(); ++i) {
    cf += from[i];
    ct += to[i];
  }
  cf /= static_cast<double>(from.size());
  ct /= static_cast<double>(to.size());
  double a = 0.0, b = 0.0;
  for (size_t i = 0; i < from.size(); ++i) {
    const Vec3 p = from[i] - cf, q = to[i] - ct;
    a += p.x() * q.x() + p.y() * q.y();
    b += p.x() * q.y() - p.y() * q.x();
  }
  const Quat r = yaw_rotation(std::atan2(b, a));
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < from.size(); ++i) {
    const Vec3 p = r * (from[i] - cf);
    num += p.dot(to[i] - ct);
    den += p.squaredNorm();
  }
  const double scale = den > 1e-12 && num > 0.0 ? num / den : 1.0;
  return Sim3(r, ct - scale * (r * cf), scale);
}

}  // namespace vps
