#include "vps/pipeline/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <thread>

#include "vps/error.hpp"
#include "vps/random.hpp"

namespace vps {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(size_t n, int workers, Fn&& fn) {
  const size_t threads = std::min<size_t>(n, static_cast<size_t>(std::max(1, workers)));
  if (threads <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  for (size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct Job {
  Submap submap;
  double tracks_s = 0, build_s = 0, verify_s = 0;
  std::string error;
};

}  // namespace

size_t BuildReport::usable() const {
  return static_cast<size_t>(std::count_if(submaps.begin(), submaps.end(), [](const auto& s) { return s.status == "built"; }));
}

double BuildReport::success_rate() const {
  return submaps.empty() ? 0.0 : static_cast<double>(usable()) / static_cast<double>(submaps.size());
}

std::vector<SubmapPtr> build_submaps(std::span<const Experience> experiences, const std::set<int>& build_ids,
                                     const PipelineOptions& options, BuildReport* report) {
  const FrameStore store(experiences);
  auto t = Clock::now();
  std::vector<FrameSubset> subsets;
  for (const auto& e : experiences) {
    auto s = split_experience(e, options.split, derive_seed({options.seed, static_cast<uint64_t>(e.id), 0x5b}));
    subsets.insert(subsets.end(), s.begin(), s.end());
  }
  std::sort(subsets.begin(), subsets.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  const double split_s = since(t);

  t = Clock::now();
  augment_subsets(subsets, store, options.augment_budget, options.seed);
  const double augment_s = since(t);

  std::vector<const FrameSubset*> todo;
  for (const auto& s : subsets) {
    if (build_ids.empty() || build_ids.count(s.experience_id) != 0) todo.push_back(&s);
  }

  t = Clock::now();
  std::vector<Job> jobs(todo.size());
  parallel_for(todo.size(), options.workers, [&](size_t i) {
    const FrameSubset& s = *todo[i];
    Job& job = jobs[i];
    try {
      auto t0 = Clock::now();
      const auto tracks = build_tracks(s, store, options.tracks);
      job.tracks_s = since(t0);
      t0 = Clock::now();
      job.submap = build_submap(s, tracks, store, options.build, derive_seed({options.seed, static_cast<uint64_t>(s.id)}));
      job.build_s = since(t0);
      t0 = Clock::now();
      if (job.submap.status == SubmapStatus::built) verify_submap(job.submap, store, options.verify);
      job.verify_s = since(t0);
    } catch (const Error& e) {
      job.submap = Submap{};
      job.submap.id = s.id;
      job.submap.experience_id = s.experience_id;
      job.error = e.what();
    }
  });
  const double submaps_s = since(t);

  std::vector<SubmapPtr> out;
  BuildReport local;
  for (size_t i = 0; i < jobs.size(); ++i) {
    const FrameSubset& s = *todo[i];
    Submap& m = jobs[i].submap;
    SubmapOutcome o;
    o.id = s.id;
    o.experience_id = s.experience_id;
    o.center = s.center;
    o.radius = s.radius;
    o.frames = m.frames.size();
    o.landmarks = m.landmarks.size();
    o.reprojection_rmse = m.reprojection_rmse;
    if (!jobs[i].error.empty()) {
      o.status = "failed";
      o.reason = jobs[i].error;
    } else if (m.status == SubmapStatus::discarded) {
      o.status = "discarded";
      o.reason = m.failure;
    } else if (!m.verification.passed) {
      o.status = "unverified";
      for (const auto& f : m.verification.failures) o.reason += (o.reason.empty() ? "" : "; ") + f;
    } else {
      o.status = "built";
    }
    local.submaps.push_back(o);
    local.seconds.tracks += jobs[i].tracks_s;
    local.seconds.verify += jobs[i].verify_s;
    if (jobs[i].error.empty()) out.push_back(std::make_shared<const Submap>(std::move(m)));
  }
  local.seconds.split = split_s;
  local.seconds.augment = augment_s;
  local.seconds.submaps = submaps_s;
  if (report != nullptr) *report = std::move(local);
  return out;
}

GlobalMap build_global_map(std::span<const Experience> experiences, const PipelineOptions& options,
                           BuildReport* report) {
  return update_global_map(GlobalMap(options.fusion), experiences, {}, options, report);
}

GlobalMap update_global_map(const GlobalMap& map, std::span<const Experience> experiences,
                            const std::set<int>& new_ids, const PipelineOptions& options, BuildReport* report) {
  BuildReport local;
  auto submaps = build_submaps(experiences, new_ids, options, &local);
  const auto t = Clock::now();
  GlobalMap out = update_map(map, std::move(submaps));
  local.seconds.fuse = since(t);
  if (report != nullptr) *report = std::move(local);
  return out;
}

}  // namespace vps
