#include "vps/mapbuild/tracks.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace vps {

namespace {

class UnionFind {
 public:
  explicit UnionFind(size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  size_t find(size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void unite(size_t a, size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<size_t> parent_;
};

// Squared Euclidean distance threshold equivalent to an RMS threshold.
double squared_limit(double rms) { return rms * rms * kDescriptorDim; }

}  // namespace

std::vector<Track> build_tracks(const FrameSubset& subset, const FrameStore& frames,
                                const TrackOptions& options) {
  const std::vector<int64_t> ids = subset.all_frames();
  std::vector<const Frame*> fs;
  std::vector<size_t> first;  // global observation offset per frame
  size_t total = 0;
  for (int64_t id : ids) {
    fs.push_back(&frames.frame(id));
    first.push_back(total);
    total += fs.back()->observations.size();
  }
  const double limit = squared_limit(options.match_threshold);

  UnionFind uf(total);
  std::vector<int> best_ab, best_ba;
  std::vector<double> dist_ab;
  for (size_t a = 0; a < fs.size(); ++a) {
    for (size_t b = a + 1; b < fs.size(); ++b) {
      const Vec2 ga = fs[a]->gps.position.head<2>(), gb = fs[b]->gps.position.head<2>();
      if ((ga - gb).norm() >= options.gating_radius) continue;
      const auto& oa = fs[a]->observations;
      const auto& ob = fs[b]->observations;
      if (oa.empty() || ob.empty()) continue;
      best_ab.assign(oa.size(), -1);
      best_ba.assign(ob.size(), -1);
      dist_ab.assign(oa.size(), limit);
      std::vector<double> dist_ba(ob.size(), limit);
      for (size_t i = 0; i < oa.size(); ++i) {
        for (size_t j = 0; j < ob.size(); ++j) {
          const double d = (oa[i].descriptor - ob[j].descriptor).squaredNorm();
          if (d < dist_ab[i]) {
            dist_ab[i] = d;
            best_ab[i] = static_cast<int>(j);
          }
          if (d < dist_ba[j]) {
            dist_ba[j] = d;
            best_ba[j] = static_cast<int>(i);
          }
        }
      }
      for (size_t i = 0; i < oa.size(); ++i) {
        const int j = best_ab[i];
        if (j >= 0 && best_ba[static_cast<size_t>(j)] == static_cast<int>(i)) {
          uf.unite(first[a] + i, first[b] + static_cast<size_t>(j));
        }
      }
    }
  }

  // Group observations by component; keys are the smallest member so the
  // iteration order is deterministic.
  std::map<size_t, std::vector<std::pair<size_t, int>>> components;
  for (size_t f = 0; f < fs.size(); ++f) {
    for (size_t i = 0; i < fs[f]->observations.size(); ++i) {
      components[uf.find(first[f] + i)].emplace_back(f, static_cast<int>(i));
    }
  }

  std::vector<Track> tracks;
  for (const auto& [root, members] : components) {
    if (members.size() < 2) continue;
    // Greedy split: each observation joins the first cluster that lacks its
    // frame and whose descriptors are all within the threshold.
    std::vector<std::vector<std::pair<size_t, int>>> clusters;
    for (const auto& m : members) {
      const Descriptor& d = fs[m.first]->observations[static_cast<size_t>(m.second)].descriptor;
      bool placed = false;
      for (auto& c : clusters) {
        bool ok = true;
        for (const auto& o : c) {
          if (o.first == m.first ||
              (fs[o.first]->observations[static_cast<size_t>(o.second)].descriptor - d).squaredNorm() >= limit) {
            ok = false;
            break;
          }
        }
        if (ok) {
          c.push_back(m);
          placed = true;
          break;
        }
      }
      if (!placed) clusters.push_back({m});
    }
    for (const auto& c : clusters) {
      if (c.size() < 2) continue;
      Track t;
      t.id = static_cast<int64_t>(tracks.size());
      for (const auto& [f, i] : c) t.observations.push_back({ids[f], i});
      tracks.push_back(std::move(t));
    }
  }
  return tracks;
}

}  // namespace vps
