#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <random>

#include "loc_fixtures.hpp"
#include "sync_fixtures.hpp"
#include "test_util.hpp"
#include "vps/edgeclient/session.hpp"
#include "vps/edgeclient/sync.hpp"
#include "vps/error.hpp"
#include "vps/locserver/localize.hpp"

using namespace vps;
using vps::testing::exact_history;
using vps::testing::local_track;
using vps::testing::random_rigid;
using vps::testing::translation_error;

namespace {

std::vector<TimedPose> straight_walk(double speed, double duration, double dt) {
  std::vector<TimedPose> out;
  for (int i = 0; i * dt <= duration + 1e-9; ++i) {
    const double t = i * dt;
    out.push_back({t, Pose(Quat::Identity(), Vec3(speed * t, 0, 0))});
  }
  return out;
}

}  // namespace

TEST(Keyframes, TimeRule) {
  const auto stationary = straight_walk(0.0, 10.0, 0.1);
  EXPECT_EQ(select_keyframes(stationary, {2.0, 2.0}).size(), 5u);
}

TEST(Keyframes, DistanceRule) {
  const auto walk = straight_walk(1.0, 20.0, 0.1);
  const auto kf = select_keyframes(walk, {2.0, 100.0});
  ASSERT_EQ(kf.size(), 10u);
  for (size_t k = 0; k < kf.size(); ++k) EXPECT_NEAR(walk[kf[k]].pose.translation().x(), 2.0 * (k + 1), 1e-9);
}

TEST(Keyframes, EdgeCases) {
  EXPECT_TRUE(select_keyframes({}, {}).empty());
  const auto one = straight_walk(1.0, 0.0, 0.1);
  EXPECT_TRUE(select_keyframes(one, {}).empty());
  EXPECT_THROW(select_keyframes(one, {0.0, 2.0}), BadConfig);
  // Whichever rule fires first: fast motion is sampled by distance.
  const auto fast = straight_walk(8.0, 10.0, 0.05);
  EXPECT_EQ(select_keyframes(fast, {}).size(), 40u);
}

TEST(Sync, ExactTransformIsAFixedPoint) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const Sim3 truth = random_rigid(rng);
    SyncState state;
    for (const auto& e : exact_history(truth, local_track(rng, 30, 2.0))) state.update(e);
    ASSERT_TRUE(state.initialized());
    EXPECT_LT(translation_error(state.transform(), truth, Vec3::Zero()), 1e-9);
    EXPECT_LT(rotation_angle(state.transform().rotation(), truth.rotation()), 1e-9);
    EXPECT_EQ(state.transform().scale(), 1.0);
  }
}

TEST(Sync, ScaleModeRecoversSimilarity) {
  std::mt19937_64 rng(4);
  Sim3 truth = random_rigid(rng);
  truth = Sim3(truth.rotation(), truth.translation(), 1.07);
  SyncOptions options;
  options.estimate_scale = true;
  SyncState state(options);
  for (const auto& e : exact_history(truth, local_track(rng, 30, 2.0))) state.update(e);
  EXPECT_NEAR(state.transform().scale(), 1.07, 1e-9);
  EXPECT_LT(translation_error(state.transform(), truth, Vec3::Zero()), 1e-8);
}

TEST(Sync, ThirtyPercentOutliersOverManySeeds) {
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    const Sim3 truth = random_rigid(rng);
    const auto history = vps::testing::history_with_outliers(truth, rng);
    SyncState state;
    for (const auto& e : history) state.update(e);
    const Vec3 now = history.back().local.translation();
    worst = std::max(worst, translation_error(state.transform(), truth, now));
  }
  EXPECT_LT(worst, 0.05);
}

TEST(Sync, HuberBeatsLeastSquaresWithoutTheCut) {
  std::mt19937_64 rng(9);
  const Sim3 truth = random_rigid(rng);
  auto history = exact_history(truth, local_track(rng, 50, 2.0));
  for (size_t i = 0; i < history.size(); i += 3) {
    history[i].global = Pose(history[i].global.rotation(), history[i].global.translation() + Vec3(10, 0, 0));
  }
  SyncOptions huber;
  huber.outlier_cutoff = 0.0;
  SyncOptions squares = huber;
  squares.huber_delta = 1e6;
  const double t = history.back().timestamp;
  const Vec3 at = history.back().local.translation();
  const double e_huber = translation_error(solve_sync(history, huber, t, truth).transform, truth, at);
  const double e_squares = translation_error(solve_sync(history, squares, t, truth).transform, truth, at);
  EXPECT_LT(e_huber, 0.25 * e_squares);
  // Each outlier pulls with at most delta times its weight.
  double w_out = 0.0, w_in = 0.0;
  for (size_t i = 0; i < history.size(); ++i) (i % 3 == 0 ? w_out : w_in) += std::pow(huber.tau, t - history[i].timestamp);
  EXPECT_GT(e_huber, 0.0);
  EXPECT_LT(e_huber, 4.0 * huber.huber_delta * w_out / w_in);
}

TEST(Sync, DecayFavoursRecentResults) {
  std::mt19937_64 rng(5);
  const Sim3 truth = random_rigid(rng);
  const auto local = local_track(rng, 50, 1.0);
  // Odometry drifts: its offset to the map grows linearly with time.
  const Vec3 drift(0.02, 0.0, 0.01);
  std::deque<SyncEntry> history;
  for (const auto& p : local) {
    const Pose drifted(p.pose.rotation(), p.pose.translation() + drift * p.timestamp);
    history.push_back({p.timestamp, drifted, truth.apply(p.pose), 50});
  }
  auto error_with = [&](double tau) {
    SyncOptions o;
    o.tau = tau;
    SyncState s(o);
    for (const auto& e : history) s.update(e);
    const SyncEntry& last = history.back();
    return (s.current_pose(last.local).translation() - last.global.translation()).norm();
  };
  EXPECT_LT(error_with(0.9), error_with(1.0));
}

TEST(Sync, CostNeverIncreases) {
  std::mt19937_64 rng(6);
  const Sim3 truth = random_rigid(rng);
  auto history = exact_history(truth, local_track(rng, 40, 2.0));
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& e : history) e.global = Pose(e.global.rotation(), e.global.translation() + Vec3(n(rng), n(rng), n(rng)));
  history[7].global = Pose(history[7].global.rotation(), history[7].global.translation() + Vec3(8, 0, 0));
  const Sim3 start(truth.rotation() * so3_exp(Vec3(0, 0.2, 0)), truth.translation() + Vec3(3, 0, -2), 1.0);
  const SyncOptions options;
  const SyncSolve s = solve_sync(history, options, history.back().timestamp, start);
  for (size_t i = 1; i < s.robust.cost_history.size(); ++i) {
    EXPECT_LE(s.robust.cost_history[i], s.robust.cost_history[i - 1]);
  }
  ASSERT_TRUE(s.refit.has_value());
  for (size_t i = 1; i < s.refit->cost_history.size(); ++i) EXPECT_LE(s.refit->cost_history[i], s.refit->cost_history[i - 1]);
  EXPECT_EQ(s.cut, 1u);
  EXPECT_LE(sync_cost(history, Sim3::from_vector(s.robust.parameters), options, history.back().timestamp),
            sync_cost(history, start, options, history.back().timestamp));
}

TEST(Sync, ScalingAllWeightsKeepsTheArgmin) {
  std::mt19937_64 rng(8);
  const Sim3 truth = random_rigid(rng);
  auto history = exact_history(truth, local_track(rng, 40, 2.0));
  std::normal_distribution<double> n(0.0, 0.4);
  for (auto& e : history) e.global = Pose(e.global.rotation(), e.global.translation() + Vec3(n(rng), n(rng), 0));
  const double t = history.back().timestamp;
  const Sim3 a = solve_sync(history, {}, t, truth, 1.0).transform;
  for (double scale : {0.01, 7.3, 250.0}) {
    const Sim3 b = solve_sync(history, {}, t, truth, scale).transform;
    EXPECT_LT(translation_error(a, b, history.back().local.translation()), 1e-7) << scale;
    EXPECT_LT(rotation_angle(a.rotation(), b.rotation()), 1e-8) << scale;
  }
}

TEST(Sync, CurrentPoseExamples) {
  SyncState state;
  EXPECT_THROW(state.current_pose(Pose()), Uninitialized);
  const Pose a(Quat::Identity(), Vec3(1, 2, 3));
  EXPECT_EQ(state.update({0.0, a, a, 20}), SyncOutcome::pending);
  EXPECT_FALSE(state.initialized());
  const Pose b(yaw_rotation(0.3), Vec3(4, 2, 0));
  EXPECT_EQ(state.update({1.0, b, b, 20}), SyncOutcome::accepted);
  const Pose live(yaw_rotation(1.0), Vec3(-3, 1, 7));
  const Pose out = state.current_pose(live);
  EXPECT_LT((out.translation() - live.translation()).norm(), 1e-12);
  EXPECT_LT(rotation_angle(out.rotation(), live.rotation()), 1e-12);

  SyncState shifted;
  const Sim3 T(Quat::Identity(), Vec3(10, 0, 0), 1.0);
  shifted.update({0.0, a, T.apply(a), 20});
  shifted.update({1.0, b, T.apply(b), 20});
  EXPECT_LT((shifted.current_pose(Pose()).translation() - Vec3(10, 0, 0)).norm(), 1e-12);
}

TEST(Sync, GateRejectsThenRecovers) {
  std::mt19937_64 rng(12);
  const Sim3 truth = random_rigid(rng);
  const auto local = local_track(rng, 20, 2.0);
  SyncState state;
  for (size_t i = 0; i < 10; ++i) state.update({local[i].timestamp, local[i].pose, truth.apply(local[i].pose), 30});
  const Sim3 before = state.transform();
  const Sim3 moved(truth.rotation(), truth.translation() + Vec3(40, 0, 0), 1.0);
  EXPECT_EQ(state.update({local[10].timestamp, local[10].pose, moved.apply(local[10].pose), 30}), SyncOutcome::gated);
  EXPECT_EQ(state.history().size(), 10u);
  EXPECT_EQ(state.transform().translation(), before.translation());
  EXPECT_EQ(state.update({local[11].timestamp, local[11].pose, moved.apply(local[11].pose), 30}), SyncOutcome::gated);
  EXPECT_EQ(state.update({local[12].timestamp, local[12].pose, moved.apply(local[12].pose), 30}),
            SyncOutcome::accepted);
  EXPECT_EQ(state.history().size(), 3u);
  EXPECT_LT(translation_error(state.transform(), moved, local[12].pose.translation()), 1e-9);
}

TEST(Sync, HistoryIsBoundedAndOrdered) {
  std::mt19937_64 rng(13);
  const Sim3 truth = random_rigid(rng);
  auto local = local_track(rng, 80, 1.0);
  std::swap(local[40], local[41]);
  SyncState state;
  for (const auto& p : local) state.update({p.timestamp, p.pose, truth.apply(p.pose), 30});
  EXPECT_EQ(state.history().size(), 50u);
  for (size_t i = 1; i < state.history().size(); ++i) {
    EXPECT_LT(state.history()[i - 1].timestamp, state.history()[i].timestamp);
  }
  EXPECT_EQ(state.update(state.history().back()), SyncOutcome::pending);
  EXPECT_THROW(state.update({std::nan(""), Pose(), Pose(), 1}), NonFiniteError);
  SyncOptions bad;
  bad.tau = 0.0;
  EXPECT_THROW(SyncState{bad}, BadConfig);
}

TEST(ErrorModel, Examples) {
  EXPECT_EQ(predict_error(0, 0, 0.37, 0, 1), 0.0);
  EXPECT_NEAR(predict_error(0.0, 0.30, 0.01, 1.0, 0.73), 0.30 + 0.01 / 0.73, 1e-15);
  EXPECT_NEAR(predict_error(0.0, 0.30, 0.01, 1.0, 0.73), 0.3137, 5e-5);
  const double third = predict_error(0, 0, 0.02, 3.0, 0.8);
  EXPECT_DOUBLE_EQ(predict_error(0, 0, 0.02, 3.0, 0.4), 2.0 * third);
  EXPECT_THROW(predict_error(0, 0, 0.01, 1.0, 0.0), BadRate);
  EXPECT_THROW(predict_error(0, 0, 0.01, 1.0, -0.5), BadRate);
  EXPECT_THROW(predict_error(0, 0, 0.01, 1.0, 1.5), BadRate);
}

TEST(Network, Validation) {
  NetworkModel n;
  EXPECT_NO_THROW(n.validate());
  n.bandwidth = 0;
  EXPECT_THROW(n.validate(), BadConfig);
  n = NetworkModel{};
  n.latency = -1;
  EXPECT_THROW(n.validate(), BadConfig);
  n = NetworkModel{};
  n.drop = 1.5;
  EXPECT_THROW(n.validate(), BadConfig);
  const NetworkModel slow{0.1, 1000.0, 0.0, 1};
  EXPECT_DOUBLE_EQ(slow.transfer_time(500), 0.6);
}

class Session : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { fixture_ = new vps::testing::ZeroNoiseMap(); }
  static void TearDownTestSuite() {
    delete fixture_;
    fixture_ = nullptr;
  }

  static const Experience& capture() { return fixture_->experiences.front(); }
  static VioLog exact_vio() { return simulate_vio(true_trajectory(capture()), 0.0, 1); }
  static Localizer in_process() {
    return [](const LocalizeRequest& r) { return localize_image(*fixture_->handle, r); };
  }
  static vps::testing::ZeroNoiseMap* fixture_;
};
vps::testing::ZeroNoiseMap* Session::fixture_ = nullptr;

namespace {

void strip_timing(SessionTrace& t) {
  for (auto& r : t.responses) r.server_ms = 0.0;
}

bool same_pose(const Pose& a, const Pose& b) {
  return a.rotation().coeffs() == b.rotation().coeffs() && a.translation() == b.translation();
}

}  // namespace

TEST_F(Session, SelfQueriesAllLocalize) {
  SessionOptions options;
  options.network = {0.0, 1e12, 0.0, 1};
  options.server_time = 0.0;
  const SessionTrace trace = run_session(capture(), exact_vio(), in_process(), options);
  ASSERT_FALSE(trace.requests.empty());
  // Frames that observe too few mapped landmarks cannot localise at all.
  std::set<int64_t> localisable;
  for (const auto& q : vps::testing::self_queries(fixture_->map, fixture_->store)) localisable.insert(q.frame_id);
  int expected = 0;
  for (const auto& r : trace.requests) expected += localisable.count(r.frame_id) ? 1 : 0;
  int ok = 0;
  for (const auto& r : trace.responses) {
    if (!localisable.count(r.frame_id)) continue;
    EXPECT_EQ(r.status, LocalizeStatus::success) << r.frame_id;
    ok += r.status == LocalizeStatus::success;
  }
  EXPECT_EQ(ok, expected);
  EXPECT_GT(expected, 20);
  // With exact odometry and map the tracked pose equals the truth.
  const Oracle oracle(fixture_->experiences);
  double worst = 0.0;
  for (const auto& p : trace.poses) {
    if (p.global) worst = std::max(worst, (p.global->translation() - oracle.pose(p.frame_id).translation()).norm());
  }
  EXPECT_LT(worst, 1e-3);
  EXPECT_TRUE(trace.poses.back().global.has_value());
}

TEST_F(Session, DroppingEverythingNeverInitialises) {
  SessionOptions options;
  options.network.drop = 1.0;
  const SessionTrace trace = run_session(capture(), exact_vio(), in_process(), options);
  EXPECT_FALSE(trace.requests.empty());
  EXPECT_TRUE(trace.responses.empty());
  for (const auto& p : trace.poses) EXPECT_FALSE(p.global.has_value());
}

TEST_F(Session, HalvingBandwidthDoublesTransferDelay) {
  SessionOptions a;
  a.network = {0.05, 2.0e5, 0.0, 1};
  SessionOptions b = a;
  b.network.bandwidth /= 2.0;
  const auto ta = run_session(capture(), exact_vio(), in_process(), a);
  const auto tb = run_session(capture(), exact_vio(), in_process(), b);
  ASSERT_EQ(ta.requests.size(), tb.requests.size());
  for (size_t i = 0; i < ta.requests.size(); ++i) {
    EXPECT_EQ(ta.requests[i].bytes, tb.requests[i].bytes);
    EXPECT_NEAR(tb.requests[i].uplink - 0.05, 2.0 * (ta.requests[i].uplink - 0.05), 1e-12);
    EXPECT_NEAR(ta.requests[i].uplink, 0.05 + ta.requests[i].bytes / 2.0e5, 1e-12);
  }
}

TEST_F(Session, TraceIsDeterministic) {
  SessionOptions options;
  options.network.drop = 0.3;
  options.network.seed = 77;
  const VioLog vio = simulate_vio(true_trajectory(capture()), 0.02, 3);
  auto a = run_session(capture(), vio, in_process(), options);
  auto b = run_session(capture(), vio, in_process(), options);
  strip_timing(a);
  strip_timing(b);
  const auto dir = std::filesystem::temp_directory_path();
  write_trace(a, dir / "vps_trace_a.jsonl");
  write_trace(b, dir / "vps_trace_b.jsonl");
  auto read = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(read(dir / "vps_trace_a.jsonl"), read(dir / "vps_trace_b.jsonl"));
  const size_t dropped = std::count_if(a.requests.begin(), a.requests.end(), [](auto& r) { return r.dropped; });
  EXPECT_GT(dropped, 0u);
  EXPECT_LT(dropped, a.requests.size());

  const SessionTrace back = read_trace(dir / "vps_trace_a.jsonl");
  ASSERT_EQ(back.poses.size(), a.poses.size());
  ASSERT_EQ(back.responses.size(), a.responses.size());
  for (size_t i = 0; i < a.poses.size(); ++i) {
    EXPECT_TRUE(same_pose(back.poses[i].local, a.poses[i].local));
    ASSERT_EQ(back.poses[i].global.has_value(), a.poses[i].global.has_value());
    if (a.poses[i].global) EXPECT_TRUE(same_pose(*back.poses[i].global, *a.poses[i].global));
  }
  EXPECT_EQ(back.requests.size(), a.requests.size());
  EXPECT_EQ(back.responses.back().sync, a.responses.back().sync);
  std::filesystem::remove(dir / "vps_trace_a.jsonl");
  std::filesystem::remove(dir / "vps_trace_b.jsonl");
}

TEST_F(Session, ResponsesArriveAfterTheModelledDelay) {
  SessionOptions options;
  options.network = {0.2, 5.0e4, 0.0, 1};
  options.server_time = 0.77;
  const auto trace = run_session(capture(), exact_vio(), in_process(), options);
  ASSERT_EQ(trace.responses.size(), trace.requests.size());
  for (size_t i = 0; i < trace.responses.size(); ++i) {
    const auto& q = trace.requests[trace.responses[i].seq];
    EXPECT_GT(trace.responses[i].received, q.sent + q.uplink + 0.77 + 0.2);
    if (i > 0) EXPECT_GE(trace.responses[i].received, trace.responses[i - 1].received);
  }
  // The first fix only takes effect once its reply is back.
  const double first_reply = trace.responses[1].received;
  for (const auto& p : trace.poses) {
    if (p.timestamp < first_reply) EXPECT_FALSE(p.global.has_value());
  }
}

TEST_F(Session, OverLoopback) {
  Server server(fixture_->handle, ServerOptions{});
  server.start();
  const auto remote = run_session(capture(), exact_vio(), Endpoint{"127.0.0.1", server.port()});
  const auto local = run_session(capture(), exact_vio(), in_process());
  ASSERT_FALSE(remote.responses.empty());
  ASSERT_EQ(remote.responses.size(), local.responses.size());
  for (size_t i = 0; i < local.responses.size(); ++i) {
    EXPECT_EQ(remote.responses[i].status, local.responses[i].status);
    EXPECT_TRUE(same_pose(remote.responses[i].pose, local.responses[i].pose));
  }
  EXPECT_FALSE(remote.connection_lost());
  server.stop();
}

TEST_F(Session, DeadEndpointIsRecorded) {
  Server probe(nullptr, ServerOptions{});
  probe.start();
  const uint16_t port = probe.port();
  probe.stop();
  const auto trace = run_session(capture(), exact_vio(), Endpoint{"127.0.0.1", port});
  EXPECT_TRUE(trace.connection_lost());
  EXPECT_TRUE(trace.responses.empty());
  EXPECT_EQ(trace.poses.size(), capture().frames.size());
  for (const auto& p : trace.poses) EXPECT_FALSE(p.global.has_value());
}
