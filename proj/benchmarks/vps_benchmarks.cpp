#include <benchmark/benchmark.h>

#include <random>

#include "loc_fixtures.hpp"
#include "sync_fixtures.hpp"
#include "test_util.hpp"
#include "vps/edgeclient/sync.hpp"
#include "vps/fusion/tile_index.hpp"
#include "vps/geometry/camera.hpp"
#include "vps/locserver/localize.hpp"
#include "vps/locserver/protocol.hpp"
#include "vps/mapbuild/split.hpp"
#include "vps/mapbuild/tracks.hpp"
#include "vps/pipeline/pipeline.hpp"

using namespace vps;

namespace {

const testing::ZeroNoiseMap& town() {
  static const testing::ZeroNoiseMap t;
  return t;
}

void BM_ProjectWithJacobian(benchmark::State& state) {
  const Camera cam;
  std::mt19937_64 rng(1);
  const Pose pose = testing::random_pose(rng, 5.0);
  const Vec3 x = pose.apply(Vec3(0.5, -0.3, 8.0));
  for (auto _ : state) benchmark::DoNotOptimize(project_with_jacobian(x, pose, cam));
}
BENCHMARK(BM_ProjectWithJacobian);

void BM_Sim3Compose(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const Sim3 a = testing::random_sim3(rng), b = testing::random_sim3(rng);
  for (auto _ : state) benchmark::DoNotOptimize(a * b);
}
BENCHMARK(BM_Sim3Compose);

void BM_EncodeLocalizeRequest(benchmark::State& state) {
  const auto queries = testing::self_queries(town().map, town().store);
  const LocalizeRequest& r = queries.front().request;
  for (auto _ : state) benchmark::DoNotOptimize(encode_frame(MessageType::localize_request, encode(r)));
  state.SetLabel(std::to_string(r.features.size()) + " features");
}
BENCHMARK(BM_EncodeLocalizeRequest);

void BM_DecodeLocalizeRequest(benchmark::State& state) {
  const auto queries = testing::self_queries(town().map, town().store);
  const std::string payload = encode(queries.front().request);
  for (auto _ : state) benchmark::DoNotOptimize(decode_localize_request(payload));
}
BENCHMARK(BM_DecodeLocalizeRequest);

void BM_TileIndexQuery(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 5000.0), r(20.0, 120.0);
  TileIndex index(100.0);
  std::map<int64_t, Circle> circles;
  for (int64_t id = 0; id < state.range(0); ++id) {
    circles[id] = Circle{Vec2(u(rng), u(rng)), r(rng)};
    index.insert(id, circles[id]);
  }
  const Circle disc{Vec2(2500, 2500), 50.0};
  for (auto _ : state) benchmark::DoNotOptimize(index.query(disc, circles));
}
BENCHMARK(BM_TileIndexQuery)->Arg(1000)->Arg(10000);

void BM_LocalizeSelfQuery(benchmark::State& state) {
  const auto queries = testing::self_queries(town().map, town().store);
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(localize_image(*town().handle, queries[i].request));
    i = (i + 1) % queries.size();
  }
}
BENCHMARK(BM_LocalizeSelfQuery)->Unit(benchmark::kMillisecond);

void BM_SyncUpdate(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const auto history = testing::history_with_outliers(testing::random_rigid(rng), rng);
  for (auto _ : state) {
    SyncState sync;
    for (const auto& e : history) sync.update(e);
    benchmark::DoNotOptimize(sync.transform());
  }
  state.SetLabel("50 results, 30% outliers");
}
BENCHMARK(BM_SyncUpdate)->Unit(benchmark::kMillisecond);

void BM_BuildSubmap(benchmark::State& state) {
  const World world = generate_world(WorldConfig{});
  const std::vector<Experience> exps{simulate_experience(world, make_route(world, {0}),
                                                         CaptureConfig::vehicle(1, 0.0, 1), NoiseConfig{})};
  const FrameStore store(exps);
  SplitOptions split;
  split.max_size = static_cast<size_t>(state.range(0));
  const FrameSubset subset = split_experience(exps[0], split, 1).front();
  const auto tracks = build_tracks(subset, store);
  for (auto _ : state) benchmark::DoNotOptimize(build_submap(subset, tracks, store, BuildOptions{}, 1));
}
BENCHMARK(BM_BuildSubmap)->Arg(20)->Arg(40)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
