#include "vps/mapbuild/split.hpp"

#include <algorithm>
#include <random>

#include "vps/random.hpp"

namespace vps {

namespace {

void fit_circle(FrameSubset& s, const std::vector<Vec2>& points) {
  Vec2 c = Vec2::Zero();
  for (const auto& p : points) c += p;
  c /= static_cast<double>(points.size());
  double r = 0.0;
  for (const auto& p : points) r = std::max(r, (p - c).norm());
  s.center = c;
  s.radius = r;
}

std::vector<int64_t> pick(std::vector<int64_t> candidates, size_t budget, uint64_t seed) {
  if (candidates.size() > budget) {
    std::mt19937_64 rng(seed);
    std::vector<int64_t> chosen;
    std::sample(candidates.begin(), candidates.end(), std::back_inserter(chosen), budget, rng);
    candidates = std::move(chosen);
  }
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

}  // namespace

std::vector<int64_t> FrameSubset::all_frames() const {
  std::vector<int64_t> out = members;
  out.insert(out.end(), overlap_frames.begin(), overlap_frames.end());
  out.insert(out.end(), augmented_same.begin(), augmented_same.end());
  out.insert(out.end(), augmented_cross.begin(), augmented_cross.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<FrameSubset> split_experience(const Experience& e, const SplitOptions& options,
                                          uint64_t seed) {
  std::vector<FrameSubset> out;
  const size_t n = e.frames.size();
  const size_t max_size = std::max<size_t>(options.max_size, 1);
  auto gps = [&](size_t i) -> Vec2 { return e.frames[i].gps.position.head<2>(); };

  size_t next = 0;
  std::vector<size_t> prev;  // member indices of the previous subset
  while (next < n) {
    FrameSubset s;
    s.experience_id = e.id;
    s.id = make_subset_id(e.id, static_cast<int>(out.size()));
    std::vector<Vec2> points;
    std::vector<size_t> overlap;

    if (!out.empty()) {
      // Walk back from the previous boundary until the overlap distance.
      const Vec2 boundary = gps(next - 1);
      for (auto it = prev.rbegin(); it != prev.rend(); ++it) {
        if ((gps(*it) - boundary).norm() > options.overlap_distance) break;
        overlap.push_back(*it);
      }
      // Always leave room for at least one new member.
      if (overlap.size() >= max_size) overlap.resize(max_size - 1);
      std::reverse(overlap.begin(), overlap.end());
      for (size_t i : overlap) {
        s.overlap_frames.push_back(e.frames[i].id);
        points.push_back(gps(i));
      }
    }

    std::vector<size_t> members;
    Vec2 sum = Vec2::Zero();
    for (const auto& p : points) sum += p;
    while (next < n) {
      members.push_back(next);
      points.push_back(gps(next));
      sum += gps(next);
      ++next;
      if (s.overlap_frames.size() + members.size() >= max_size) {
        const Vec2 c = sum / static_cast<double>(points.size());
        double r = 0.0;
        for (const auto& p : points) r = std::max(r, (p - c).norm());
        if (r >= options.min_radius) break;
      }
    }

    const size_t room = max_size - s.overlap_frames.size();
    if (members.size() > room) {
      std::mt19937_64 rng(derive_seed({seed, static_cast<uint64_t>(s.id), 0x5b5}));
      std::vector<size_t> kept;
      std::sample(members.begin(), members.end(), std::back_inserter(kept), room, rng);
      members = std::move(kept);
    }
    std::sort(members.begin(), members.end());
    points.clear();
    for (size_t i : overlap) points.push_back(gps(i));
    for (size_t i : members) {
      s.members.push_back(e.frames[i].id);
      points.push_back(gps(i));
    }
    fit_circle(s, points);
    prev = members;
    out.push_back(std::move(s));
  }
  return out;
}

void augment_subsets(std::vector<FrameSubset>& subsets, const FrameStore& frames, size_t budget,
                     uint64_t seed) {
  if (budget == 0) return;
  struct Candidate {
    int64_t frame;
    int experience;
    int64_t subset;
    Vec2 gps;
  };
  std::vector<Candidate> pool;
  for (const auto& s : subsets) {
    for (int64_t id : s.members) {
      pool.push_back({id, s.experience_id, s.id, frames.frame(id).gps.position.head<2>()});
    }
  }
  std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) { return a.frame < b.frame; });

  for (auto& s : subsets) {
    std::vector<int64_t> own = s.members;
    own.insert(own.end(), s.overlap_frames.begin(), s.overlap_frames.end());
    std::sort(own.begin(), own.end());
    std::vector<int64_t> same, cross;
    for (const auto& c : pool) {
      if ((c.gps - s.center).norm() > s.radius) continue;
      if (c.experience == s.experience_id) {
        if (c.subset != s.id && !std::binary_search(own.begin(), own.end(), c.frame)) same.push_back(c.frame);
      } else {
        cross.push_back(c.frame);
      }
    }
    s.augmented_same = pick(std::move(same), budget, derive_seed({seed, static_cast<uint64_t>(s.id), 1}));
    s.augmented_cross = pick(std::move(cross), budget, derive_seed({seed, static_cast<uint64_t>(s.id), 2}));
  }
}

}  // namespace vps
