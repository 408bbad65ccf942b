#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "vps/error.hpp"
#include "vps/worldsim/experience.hpp"
#include "vps/worldsim/io.hpp"
#include "vps/worldsim/vio.hpp"
#include "vps/worldsim/world.hpp"

using namespace vps;

namespace {

WorldConfig single_street(double length, double density) {
  WorldConfig c;
  c.landmarks_per_100m = density;
  c.streets = {Street{0, {Vec2(0, 0), Vec2(length, 0)}, 24.0}};
  return c;
}

bool same_experience(const Experience& a, const Experience& b) {
  if (a.frames.size() != b.frames.size()) return false;
  for (size_t i = 0; i < a.frames.size(); ++i) {
    const Frame& x = a.frames[i];
    const Frame& y = b.frames[i];
    if (x.id != y.id || x.timestamp != y.timestamp || x.gps.position != y.gps.position) return false;
    if (x.observations.size() != y.observations.size()) return false;
    for (size_t k = 0; k < x.observations.size(); ++k) {
      if (x.observations[k].pixel != y.observations[k].pixel) return false;
      if (x.observations[k].descriptor != y.observations[k].descriptor) return false;
    }
  }
  return true;
}

}  // namespace

TEST(World, DeterministicForFixedSeed) {
  WorldConfig c;
  c.width = 1000;
  c.height = 1000;
  c.landmarks_per_100m = 50;
  c.seed = 7;
  const World a = generate_world(c);
  const World b = generate_world(c);
  ASSERT_EQ(a.landmarks.size(), b.landmarks.size());
  for (size_t i = 0; i < a.landmarks.size(); ++i) {
    EXPECT_EQ(a.landmarks[i].position, b.landmarks[i].position);
    EXPECT_EQ(a.landmarks[i].descriptor, b.landmarks[i].descriptor);
  }
  EXPECT_EQ(a.streets.size(), 22u);
}

TEST(World, ZeroExtentsRejected) {
  WorldConfig c;
  c.width = 0;
  c.height = 0;
  EXPECT_THROW(generate_world(c), BadConfig);
  WorldConfig d;
  d.landmarks_per_100m = 0;
  EXPECT_THROW(generate_world(d), BadConfig);
}

TEST(World, FacadeCountPerSide) {
  const World w = generate_world(single_street(200.0, 50.0));
  int left = 0, right = 0;
  for (const auto& l : w.landmarks) (l.position.y() > 0 ? left : right)++;
  EXPECT_NEAR(left, 100, 10);
  EXPECT_NEAR(right, 100, 10);
}

TEST(World, LandmarksNearStreetsAndUnique) {
  WorldConfig c;
  const World w = generate_world(c);
  for (size_t i = 0; i < w.landmarks.size(); ++i) {
    EXPECT_EQ(w.landmarks[i].id, static_cast<int64_t>(i));
    double best = 1e9;
    for (const auto& s : w.streets) {
      const Vec2 a = s.points.front(), b = s.points.back();
      const Vec2 p = w.landmarks[i].position.head<2>();
      const double t = std::clamp((p - a).dot(b - a) / (b - a).squaredNorm(), 0.0, 1.0);
      best = std::min(best, (a + t * (b - a) - p).norm());
    }
    EXPECT_LE(best, c.facade_offset + 1e-9);
  }
}

TEST(Experience, ZeroNoiseFrameCountAndGps) {
  const World w = generate_world(single_street(100.0, 20.0));
  CaptureConfig cap = CaptureConfig::vehicle(1, 0.0, 3);
  cap.speed = 10.0;
  cap.frame_rate = 1.0;
  const Experience e = simulate_experience(w, make_route(w, {0}), cap, NoiseConfig::none());
  ASSERT_EQ(e.frames.size(), 11u);
  for (const auto& f : e.frames) {
    EXPECT_EQ(f.gps.position, f.truth.pose.translation());
  }
  for (size_t i = 1; i < e.frames.size(); ++i) {
    EXPECT_GT(e.frames[i].timestamp, e.frames[i - 1].timestamp);
  }
}

TEST(Experience, ZeroNoisePixelsAreProjections) {
  const World w = generate_world(WorldConfig{});
  const Experience e =
      simulate_experience(w, make_route(w, {0, 5}), CaptureConfig::vehicle(1, 0.0, 3), NoiseConfig::none());
  size_t n = 0;
  for (const auto& f : e.frames) {
    for (size_t k = 0; k < f.observations.size(); ++k) {
      const auto& lm = w.landmarks[static_cast<size_t>(f.truth.landmark_ids[k])];
      const auto px = project(lm.position, f.truth.pose, e.camera);
      ASSERT_TRUE(px.has_value());
      EXPECT_LT((*px - f.observations[k].pixel).norm(), 1e-9);
      EXPECT_TRUE(e.camera.in_image(f.observations[k].pixel));
      EXPECT_EQ(f.observations[k].descriptor, lm.descriptor);
      ++n;
    }
  }
  EXPECT_GT(n, 1000u);
}

TEST(Experience, GpsErrorStd) {
  const World w = generate_world(single_street(4000.0, 1.0));
  NoiseConfig noise = NoiseConfig::none();
  noise.gps_sigma = 5.0;
  const Experience e = simulate_experience(w, make_route(w, {0}), CaptureConfig::vehicle(1, 0.0, 11), noise);
  ASSERT_GE(e.frames.size(), 1000u);
  for (int axis = 0; axis < 2; ++axis) {
    double sum = 0, sq = 0;
    for (const auto& f : e.frames) {
      const double d = f.gps.position(axis) - f.truth.pose.translation()(axis);
      sum += d;
      sq += d * d;
    }
    const double n = static_cast<double>(e.frames.size());
    const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
    EXPECT_GE(sd, 4.0);
    EXPECT_LE(sd, 6.0);
  }
}

TEST(Experience, DeterministicAndSeedSensitive) {
  const World w = generate_world(WorldConfig{});
  const Route r = make_route(w, {1});
  const NoiseConfig noise;
  const Experience a = simulate_experience(w, r, CaptureConfig::vehicle(2, 0.0, 5), noise);
  const Experience b = simulate_experience(w, r, CaptureConfig::vehicle(2, 0.0, 5), noise);
  const Experience c = simulate_experience(w, r, CaptureConfig::vehicle(2, 0.0, 6), noise);
  EXPECT_TRUE(same_experience(a, b));
  EXPECT_FALSE(same_experience(a, c));
}

TEST(Experience, RouteNotInWorld) {
  const World w = generate_world(WorldConfig{});
  EXPECT_THROW(make_route(w, {999}), RouteNotInWorld);
  // Two parallel streets never meet.
  EXPECT_THROW(make_route(w, {0, 1}), RouteNotInWorld);
  Route off;
  off.waypoints = {Vec2(50, 50), Vec2(60, 60)};
  EXPECT_THROW(simulate_experience(w, off, CaptureConfig::vehicle(1, 0, 1), NoiseConfig{}), RouteNotInWorld);
}

TEST(Experience, VehicleKinematics) {
  const World w = generate_world(WorldConfig{});
  const Experience e =
      simulate_experience(w, make_route(w, {0, 4, 1}), CaptureConfig::vehicle(1, 0.0, 3), NoiseConfig::none());
  for (size_t i = 1; i < e.frames.size(); ++i) {
    const double dt = e.frames[i].timestamp - e.frames[i - 1].timestamp;
    const double d = (e.frames[i].truth.pose.translation() - e.frames[i - 1].truth.pose.translation()).norm();
    EXPECT_LE(d / dt, 15.0);
  }
}

TEST(Experience, PedestrianSidewalkOffset) {
  const World w = generate_world(single_street(100.0, 20.0));
  const Experience e =
      simulate_experience(w, make_route(w, {0}), CaptureConfig::pedestrian(1, 0.0, 3), NoiseConfig::none());
  for (const auto& f : e.frames) EXPECT_NEAR(std::abs(f.truth.pose.translation().y()), 4.0, 1e-9);
}

// Descriptor distances between observations of the same landmark in two
// conditions.
std::vector<double> cross_condition_distances(double day, double night, double magnitude) {
  const World w = generate_world(single_street(200.0, 40.0));
  const Route r = make_route(w, {0});
  NoiseConfig noise = NoiseConfig::none();
  noise.descriptor_sigma = 0.05;
  CaptureConfig a = CaptureConfig::vehicle(1, day, 1);
  CaptureConfig b = CaptureConfig::vehicle(2, night, 2);
  a.condition_offset_magnitude = b.condition_offset_magnitude = magnitude;
  const Experience ea = simulate_experience(w, r, a, noise);
  const Experience eb = simulate_experience(w, r, b, noise);
  std::map<int64_t, Descriptor> first;
  for (const auto& f : ea.frames) {
    for (size_t k = 0; k < f.observations.size(); ++k) first.emplace(f.truth.landmark_ids[k], f.observations[k].descriptor);
  }
  std::vector<double> out;
  for (const auto& f : eb.frames) {
    for (size_t k = 0; k < f.observations.size(); ++k) {
      auto it = first.find(f.truth.landmark_ids[k]);
      if (it != first.end()) out.push_back(descriptor_distance(it->second, f.observations[k].descriptor));
    }
  }
  return out;
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

TEST(Experience, NightDescriptorsExceedMatchThreshold) {
  constexpr double kSigma = 0.05;
  constexpr double kThreshold = 3.0 * kSigma;
  // Offset of exactly 3 sigma: typical distance is sqrt(9 + 2) sigma.
  const auto d3 = cross_condition_distances(0.0, 1.0, 3.0 * kSigma);
  ASSERT_GT(d3.size(), 100u);
  EXPECT_GT(median(d3), kThreshold);
  // Default magnitude separates every observation.
  const auto d = cross_condition_distances(0.0, 1.0, 1.0);
  EXPECT_GT(*std::min_element(d.begin(), d.end()), kThreshold);
  // Same condition stays matchable.
  const auto same = cross_condition_distances(1.0, 1.0, 1.0);
  EXPECT_LT(median(same), kThreshold);
}

TEST(Experience, ConditionOffsetIsPure) {
  const Descriptor a = condition_offset(42, 0.7, 1.0);
  const Descriptor b = condition_offset(42, 0.7, 1.0);
  EXPECT_EQ(a, b);
  EXPECT_NEAR(a.norm() / std::sqrt(16.0), 0.7, 1e-12);
  EXPECT_NE(condition_offset(43, 0.7, 1.0), a);
}

std::vector<TimedPose> straight_walk(double length, double step, double speed) {
  std::vector<TimedPose> out;
  const Quat r = camera_rotation_from_heading(0.3);
  for (int i = 0; i * step <= length + 1e-9; ++i) {
    out.push_back({i * step / speed, Pose(r, Vec3(5.0 + i * step * std::cos(0.3), 3.0 + i * step * std::sin(0.3), 1.6))});
  }
  return out;
}

TEST(Vio, ZeroDriftIsRigid) {
  const auto truth = straight_walk(50.0, 1.0, 1.4);
  const VioLog log = simulate_vio(truth, 0.0, 9);
  ASSERT_EQ(log.poses.size(), truth.size());
  EXPECT_LT(rotation_angle(log.poses[0].pose.rotation(), Quat::Identity()), 1e-12);
  EXPECT_LT(log.poses[0].pose.translation().norm(), 1e-12);
  // T = truth_k * local_k^-1 is the same for all k.
  const Pose t0 = truth[0].pose * log.poses[0].pose.inverse();
  for (size_t k = 0; k < truth.size(); ++k) {
    const Pose tk = truth[k].pose * log.poses[k].pose.inverse();
    EXPECT_LT((tk.translation() - t0.translation()).norm(), 1e-9);
    EXPECT_LT(rotation_angle(tk.rotation(), t0.rotation()), 1e-9);
  }
}

TEST(Vio, DriftTwoPercentOverTwentyMeters) {
  const auto truth = straight_walk(20.0, 0.5, 1.4);
  double sum = 0.0;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    const VioLog log = simulate_vio(truth, 0.02, seed);
    const Pose expected = truth.front().pose.inverse() * truth.back().pose;
    sum += (log.poses.back().pose.translation() - expected.translation()).norm();
  }
  const double mean = sum / 1000.0;
  EXPECT_GE(mean, 0.2);
  EXPECT_LE(mean, 0.6);
}

TEST(Vio, EmptyTrajectory) { EXPECT_TRUE(simulate_vio({}, 0.02, 1).poses.empty()); }

TEST(Vio, Deterministic) {
  const auto truth = straight_walk(30.0, 1.0, 1.4);
  const VioLog a = simulate_vio(truth, 0.02, 4);
  const VioLog b = simulate_vio(truth, 0.02, 4);
  for (size_t k = 0; k < a.poses.size(); ++k) {
    EXPECT_EQ(a.poses[k].pose.translation(), b.poses[k].pose.translation());
    EXPECT_EQ(a.poses[k].pose.rotation().coeffs(), b.poses[k].pose.rotation().coeffs());
  }
}

TEST(Oracle, FirstFrameBitExactAndUnknown) {
  const World w = generate_world(single_street(100.0, 20.0));
  CaptureConfig cap = CaptureConfig::vehicle(3, 0.0, 3);
  cap.speed = 10.0;
  cap.frame_rate = 1.0;
  const Experience e = simulate_experience(w, make_route(w, {0}), cap, NoiseConfig{});
  Oracle o(std::span<const Experience>(&e, 1));
  const Pose p = oracle_pose(o, make_frame_id(3, 0));
  EXPECT_EQ(p.translation(), e.frames[0].truth.pose.translation());
  EXPECT_EQ(p.rotation().coeffs(), e.frames[0].truth.pose.rotation().coeffs());
  EXPECT_EQ(p.translation(), Vec3(0, 0, cap.camera_height));
  EXPECT_THROW(oracle_pose(o, 12345), UnknownFrame);
}

TEST(Oracle, ConstantVelocityInterpolation) {
  const World w = generate_world(single_street(100.0, 20.0));
  CaptureConfig cap = CaptureConfig::vehicle(3, 0.0, 3);
  cap.yaw_pattern = YawPattern::fixed;
  const Experience e = simulate_experience(w, make_route(w, {0}), cap, NoiseConfig{});
  const Oracle o(std::span<const Experience>(&e, 1));
  for (int k = 1; k + 1 < static_cast<int>(e.frames.size()); ++k) {
    const Vec3 mid = 0.5 * (o.pose(make_frame_id(3, k - 1)).translation() + o.pose(make_frame_id(3, k + 1)).translation());
    EXPECT_LT((o.pose(make_frame_id(3, k)).translation() - mid).norm(), 1e-9);
  }
}

TEST(WorldsimIo, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "vps_worldsim_io";
  std::filesystem::remove_all(dir);
  const World w = generate_world(WorldConfig{});
  const Experience e = simulate_experience(w, make_route(w, {2}), CaptureConfig::pedestrian(4, 0.3, 8), NoiseConfig{});
  write_experience(e, dir / "exp_004.jsonl", dir / "exp_004.truth.jsonl");
  write_world(w, dir / "world.json");
  const auto logs = list_experience_logs(dir);
  ASSERT_EQ(logs.size(), 1u);
  EXPECT_EQ(truth_path_for(logs[0]), dir / "exp_004.truth.jsonl");
  const Experience r = read_experience(logs[0], truth_path_for(logs[0]));
  EXPECT_TRUE(same_experience(e, r));
  EXPECT_EQ(r.platform, Platform::pedestrian);
  EXPECT_EQ(r.frames.back().truth.pose.translation(), e.frames.back().truth.pose.translation());
  EXPECT_EQ(r.frames.back().ins.gravity, e.frames.back().ins.gravity);

  const World rw = read_world(dir / "world.json");
  ASSERT_EQ(rw.landmarks.size(), w.landmarks.size());
  EXPECT_EQ(rw.landmarks.back().descriptor, w.landmarks.back().descriptor);
  EXPECT_EQ(rw.blocks.size(), w.blocks.size());

  const VioLog v = simulate_vio(true_trajectory(e), 0.02, 1);
  write_vio(v, dir / "vio.jsonl");
  const VioLog rv = read_vio(dir / "vio.jsonl");
  ASSERT_EQ(rv.poses.size(), v.poses.size());
  EXPECT_EQ(rv.poses.back().pose.translation(), v.poses.back().pose.translation());
  EXPECT_THROW(read_experience(dir / "missing.jsonl"), IoFailure);
  std::filesystem::remove_all(dir);
}
