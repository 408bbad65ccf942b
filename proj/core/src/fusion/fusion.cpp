#include "vps/fusion/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <unordered_map>

#include "vps/error.hpp"
#include "vps/geometry/least_squares.hpp"

namespace vps {

namespace {

const Vec3 kDown(0.0, 0.0, -1.0);

// Parameters [qw qx qy qz tx ty tz s] per submap, left-retracted Sim3.
class FusionProblem : public LeastSquaresProblem {
 public:
  FusionProblem(std::vector<const Submap*> submaps, const std::vector<SharedFrameLink>& links,
                const FusionOptions& options)
      : submaps_(std::move(submaps)), options_(options) {
    for (size_t k = 0; k < submaps_.size(); ++k) slot_[submaps_[k]->id] = static_cast<int>(k);
    for (const auto& link : links) {
      for (size_t a = 0; a < link.entries.size(); ++a) {
        for (size_t b = a + 1; b < link.entries.size(); ++b) {
          auto ka = slot_.find(link.entries[a].submap_id);
          auto kb = slot_.find(link.entries[b].submap_id);
          if (ka == slot_.end() || kb == slot_.end()) continue;
          pairs_.push_back({ka->second, kb->second, &link.entries[a].pose, &link.entries[b].pose});
        }
      }
    }
    gravity_weight_ = 0.0;
    if (options.gravity_sigma_deg > 0.0) {
      const double sigma = options.gravity_sigma_deg * M_PI / 180.0;
      gravity_weight_ = 1.0 / (sigma * sigma);
    }
    Eigen::Index offset = 0;
    for (size_t p = 0; p < pairs_.size(); ++p) {
      blocks_.push_back({offset, 6, 0.0, 1.0});
      offset += 6;
    }
    for (const Submap* s : submaps_) {
      for (size_t f = 0; f < s->frames.size(); ++f) {
        if (options.lambda > 0.0) {
          blocks_.push_back({offset, 3, 0.0, options.lambda});
          offset += 3;
        }
        if (gravity_weight_ > 0.0) {
          blocks_.push_back({offset, 3, 0.0, gravity_weight_});
          offset += 3;
        }
      }
    }
    residuals_ = offset;
  }

  Eigen::Index parameter_size() const override { return 8 * static_cast<Eigen::Index>(submaps_.size()); }
  Eigen::Index tangent_size() const override { return 7 * static_cast<Eigen::Index>(submaps_.size()); }
  Eigen::Index residual_size() const override { return residuals_; }
  bool analytic_jacobian() const override { return true; }
  std::vector<ResidualBlock> residual_blocks() const override { return blocks_; }

  static Sim3 sim3_at(const Eigen::VectorXd& x, int k) { return Sim3::from_vector(x.segment<8>(8 * k)); }

  Eigen::VectorXd plus(const Eigen::VectorXd& x, const Eigen::VectorXd& delta) const override {
    Eigen::VectorXd out(x.size());
    for (int k = 0; k < static_cast<int>(submaps_.size()); ++k) {
      const Vec7 d = delta.segment<7>(7 * k);
      out.segment<8>(8 * k) = sim3_at(x, k).retract(d).to_vector();
    }
    return out;
  }

  void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r, Triplets* jac) const override {
    std::vector<Sim3> t(submaps_.size());
    for (size_t k = 0; k < submaps_.size(); ++k) t[k] = sim3_at(x, static_cast<int>(k));
    const double w = options_.rotation_weight;
    Eigen::Index row = 0;
    for (const auto& p : pairs_) {
      const Sim3& ta = t[static_cast<size_t>(p.a)];
      const Sim3& tb = t[static_cast<size_t>(p.b)];
      const Vec3 sa = ta.scale() * (ta.rotation() * p.pose_a->translation());
      const Vec3 sb = tb.scale() * (tb.rotation() * p.pose_b->translation());
      r.segment<3>(row) = (sa + ta.translation()) - (sb + tb.translation());
      const Quat qa = ta.rotation() * p.pose_a->rotation();
      const Quat qb = tb.rotation() * p.pose_b->rotation();
      const Vec3 phi = so3_log(qb.conjugate() * qa);
      r.segment<3>(row + 3) = w * phi;
      if (jac != nullptr) {
        add_position_jacobian(*jac, row, p.a, sa, 1.0);
        add_position_jacobian(*jac, row, p.b, sb, -1.0);
        add_block(*jac, row + 3, 7 * p.a, w * so3_right_jacobian_inverse(phi) * qa.conjugate().toRotationMatrix());
        add_block(*jac, row + 3, 7 * p.b, -w * so3_left_jacobian_inverse(phi) * qb.conjugate().toRotationMatrix());
      }
      row += 6;
    }
    for (size_t k = 0; k < submaps_.size(); ++k) {
      const int kk = static_cast<int>(k);
      for (const auto& f : submaps_[k]->frames) {
        if (options_.lambda > 0.0) {
          const Vec3 sc = t[k].scale() * (t[k].rotation() * f.pose.translation());
          r.segment<3>(row) = sc + t[k].translation() - f.gps.position;
          if (jac != nullptr) add_position_jacobian(*jac, row, kk, sc, 1.0);
          row += 3;
        }
        if (gravity_weight_ > 0.0) {
          const Mat3 qt = (t[k].rotation() * f.pose.rotation()).conjugate().toRotationMatrix();
          r.segment<3>(row) = qt * kDown - f.gravity;
          if (jac != nullptr) add_block(*jac, row, 7 * kk, qt * skew(kDown));
          row += 3;
        }
      }
    }
  }

 private:
  struct Pair {
    int a, b;
    const Pose* pose_a;
    const Pose* pose_b;
  };

  static void add_block(Triplets& jac, Eigen::Index row, Eigen::Index col, const Mat3& m) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        if (m(i, j) != 0.0) jac.emplace_back(row + i, col + j, m(i, j));
      }
    }
  }

  // d(sign * (s R c + t)) with src = s R c.
  static void add_position_jacobian(Triplets& jac, Eigen::Index row, int k, const Vec3& src, double sign) {
    const Eigen::Index col = 7 * k;
    add_block(jac, row, col, -sign * skew(src));
    add_block(jac, row, col + 3, sign * Mat3::Identity());
    for (int i = 0; i < 3; ++i) jac.emplace_back(row + i, col + 6, sign * src(i));
  }

  std::vector<const Submap*> submaps_;
  FusionOptions options_;
  std::unordered_map<int64_t, int> slot_;
  std::vector<Pair> pairs_;
  std::vector<ResidualBlock> blocks_;
  Eigen::Index residuals_ = 0;
  double gravity_weight_ = 0.0;
};

Sim3 initial_for(const std::map<int64_t, Sim3>& initial, int64_t id) {
  auto it = initial.find(id);
  return it == initial.end() ? Sim3::identity() : it->second;
}

Eigen::VectorXd pack(const std::vector<const Submap*>& submaps, const std::map<int64_t, Sim3>& transforms) {
  Eigen::VectorXd x(8 * static_cast<Eigen::Index>(submaps.size()));
  for (size_t k = 0; k < submaps.size(); ++k) {
    x.segment<8>(8 * static_cast<Eigen::Index>(k)) = initial_for(transforms, submaps[k]->id).to_vector();
  }
  return x;
}

double mean_gps_residual(const Submap& s, const Sim3& t) {
  if (s.frames.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& f : s.frames) sum += (t.apply(f.pose.translation()) - f.gps.position).norm();
  return sum / static_cast<double>(s.frames.size());
}

double max_displacement(const SharedFrameLink& link, const std::map<int64_t, Sim3>& transforms) {
  double worst = 0.0;
  for (size_t a = 0; a < link.entries.size(); ++a) {
    for (size_t b = a + 1; b < link.entries.size(); ++b) {
      const Vec3 pa = initial_for(transforms, link.entries[a].submap_id).apply(link.entries[a].pose.translation());
      const Vec3 pb = initial_for(transforms, link.entries[b].submap_id).apply(link.entries[b].pose.translation());
      worst = std::max(worst, (pa - pb).norm());
    }
  }
  return worst;
}

double max_rotation_deg(const SharedFrameLink& link, const std::map<int64_t, Sim3>& transforms) {
  double worst = 0.0;
  for (size_t a = 0; a < link.entries.size(); ++a) {
    for (size_t b = a + 1; b < link.entries.size(); ++b) {
      const Quat qa = initial_for(transforms, link.entries[a].submap_id).rotation() * link.entries[a].pose.rotation();
      const Quat qb = initial_for(transforms, link.entries[b].submap_id).rotation() * link.entries[b].pose.rotation();
      worst = std::max(worst, rotation_angle(qa, qb) * 180.0 / M_PI);
    }
  }
  return worst;
}

// Connected components of the link graph over `ids`, each ascending, ordered
// by their smallest id.
std::vector<std::vector<int64_t>> components(const std::vector<int64_t>& ids,
                                             const std::vector<SharedFrameLink>& links) {
  std::unordered_map<int64_t, size_t> slot;
  for (size_t i = 0; i < ids.size(); ++i) slot[ids[i]] = i;
  std::vector<size_t> parent(ids.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (const auto& link : links) {
    std::optional<size_t> first;
    for (const auto& e : link.entries) {
      auto it = slot.find(e.submap_id);
      if (it == slot.end()) continue;
      if (!first) {
        first = it->second;
      } else {
        const size_t a = find(*first), b = find(it->second);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  std::map<size_t, std::vector<int64_t>> groups;
  for (size_t i = 0; i < ids.size(); ++i) groups[find(i)].push_back(ids[i]);
  std::vector<std::vector<int64_t>> out;
  for (auto& [root, members] : groups) {
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int64_t> ids_of(std::span<const SubmapPtr> submaps) {
  std::vector<int64_t> ids;
  for (const auto& s : submaps) ids.push_back(s->id);
  return ids;
}

}  // namespace

std::vector<SharedFrameLink> collect_links(std::span<const SubmapPtr> submaps) {
  std::vector<const Submap*> sorted;
  for (const auto& s : submaps) sorted.push_back(s.get());
  std::sort(sorted.begin(), sorted.end(), [](const Submap* a, const Submap* b) { return a->id < b->id; });
  std::map<int64_t, SharedFrameLink> by_frame;
  for (const Submap* s : sorted) {
    for (const auto& f : s->frames) {
      auto& link = by_frame[f.frame_id];
      link.frame_id = f.frame_id;
      link.entries.push_back({s->id, f.pose});
    }
  }
  std::vector<SharedFrameLink> out;
  for (auto& [id, link] : by_frame) {
    if (link.entries.size() >= 2) out.push_back(std::move(link));
  }
  return out;
}

double fusion_cost(std::span<const SubmapPtr> submaps, const std::vector<SharedFrameLink>& links,
                   const std::map<int64_t, Sim3>& transforms, const FusionOptions& options) {
  std::vector<const Submap*> raw;
  for (const auto& s : submaps) raw.push_back(s.get());
  const FusionProblem problem(raw, links, options);
  Eigen::VectorXd r(problem.residual_size());
  problem.evaluate(pack(raw, transforms), r, nullptr);
  return robust_cost(problem, r);
}

FusionResult fuse(std::span<const SubmapPtr> submaps, const std::vector<SharedFrameLink>& links,
                  const FusionOptions& options, const std::map<int64_t, Sim3>& initial) {
  std::unordered_map<int64_t, const Submap*> by_id;
  for (const auto& s : submaps) by_id[s->id] = s.get();

  FusionResult result;
  for (const auto& s : submaps) {
    result.report.gps_residual_before[s->id] = mean_gps_residual(*s, initial_for(initial, s->id));
  }
  for (const auto& component : components(ids_of(submaps), links)) {
    std::vector<const Submap*> members;
    for (int64_t id : component) members.push_back(by_id.at(id));
    const FusionProblem problem(members, links, options);
    SolverOptions solver;
    solver.max_iterations = options.max_iterations;
    solver.relative_tolerance = options.relative_tolerance;
    SolverResult solved;
    try {
      solved = solve_least_squares(problem, pack(members, initial), solver);
    } catch (const NonFiniteError& e) {
      throw SolverDiverged(std::string("fusion: ") + e.what());
    }
    if (!std::isfinite(solved.final_cost)) throw SolverDiverged("fusion: non-finite cost");
    for (size_t k = 0; k < members.size(); ++k) {
      result.transforms[members[k]->id] = FusionProblem::sim3_at(solved.parameters, static_cast<int>(k));
    }
    result.report.initial_cost += solved.initial_cost;
    result.report.final_cost += solved.final_cost;
    result.report.iterations += solved.iterations;
    ++result.report.components;
  }
  for (const auto& s : submaps) {
    result.report.gps_residual_after[s->id] = mean_gps_residual(*s, result.transforms.at(s->id));
  }
  for (const auto& link : links) {
    bool inside = true;
    for (const auto& e : link.entries) inside = inside && by_id.count(e.submap_id) != 0;
    if (!inside) continue;
    result.report.links.push_back({link.frame_id, max_displacement(link, initial),
                                   max_displacement(link, result.transforms),
                                   max_rotation_deg(link, result.transforms)});
  }
  return result;
}

Circle submap_bounds(const Submap& submap, const Sim3& transform, double margin) {
  Circle c;
  if (submap.frames.empty()) return c;
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  std::vector<Vec2> pts;
  for (const auto& f : submap.frames) {
    const Vec2 p = transform.apply(f.pose.translation()).head<2>();
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
    pts.push_back(p);
  }
  c.center = 0.5 * (lo + hi);
  for (const Vec2& p : pts) c.radius = std::max(c.radius, (p - c.center).norm());
  c.radius += margin;
  return c;
}

std::vector<SubmapPtr> GlobalMap::submap_list() const {
  std::vector<SubmapPtr> out;
  for (const auto& [id, s] : submaps) out.push_back(s);
  return out;
}

const Submap& GlobalMap::submap(int64_t id) const {
  auto it = submaps.find(id);
  if (it == submaps.end()) throw UnknownSubmap("unknown submap " + std::to_string(id));
  return *it->second;
}

const Sim3& GlobalMap::transform(int64_t id) const {
  auto it = transforms.find(id);
  if (it == transforms.end()) throw UnknownSubmap("unknown submap " + std::to_string(id));
  return it->second;
}

Vec3 GlobalMap::landmark_position(int64_t submap_id, const SubmapLandmark& landmark) const {
  return transform(submap_id).apply(landmark.position);
}

namespace {

// Re-fuses the given submaps of `map` (whole components) in place and
// refreshes their bounds and index entries.
void refuse(GlobalMap& map, const std::set<int64_t>& affected) {
  if (affected.empty()) return;
  std::vector<SubmapPtr> subset;
  for (int64_t id : affected) subset.push_back(map.submaps.at(id));
  const auto links = collect_links(subset);
  FusionResult fused = fuse(subset, links, map.options, map.transforms);
  for (int64_t id : affected) {
    auto old = map.bounds.find(id);
    if (old != map.bounds.end()) map.index.erase(id, old->second);
  }
  for (int64_t id : affected) {
    map.transforms[id] = fused.transforms.at(id);
    const Circle c = submap_bounds(*map.submaps.at(id), map.transforms[id], map.options.bounds_margin);
    map.bounds[id] = c;
  }
  for (int64_t id : affected) map.index.insert(id, map.bounds[id]);
  map.report = std::move(fused.report);
}

std::set<int64_t> components_touching(const GlobalMap& map, const std::set<int64_t>& seeds) {
  const auto list = map.submap_list();
  const auto links = collect_links(list);
  std::set<int64_t> out;
  for (const auto& component : components(ids_of(list), links)) {
    const bool hit = std::any_of(component.begin(), component.end(), [&](int64_t id) { return seeds.count(id) != 0; });
    if (hit) out.insert(component.begin(), component.end());
  }
  return out;
}

}  // namespace

GlobalMap build_map(std::vector<SubmapPtr> submaps, const FusionOptions& options) {
  return update_map(GlobalMap(options), std::move(submaps));
}

GlobalMap update_map(const GlobalMap& map, std::vector<SubmapPtr> new_submaps) {
  GlobalMap out = map;
  std::set<int64_t> added;
  for (auto& s : new_submaps) {
    if (!s->usable()) {
      out.rejected.push_back(s->id);
      continue;
    }
    if (out.submaps.count(s->id) != 0) throw BadConfig("submap " + std::to_string(s->id) + " already in the map");
    added.insert(s->id);
    out.submaps[s->id] = std::move(s);
  }
  if (added.empty()) return out;
  refuse(out, components_touching(out, added));
  return out;
}

GlobalMap remove_submaps(const GlobalMap& map, const std::vector<int64_t>& ids) {
  for (int64_t id : ids) {
    if (map.submaps.count(id) == 0) throw UnknownSubmap("unknown submap " + std::to_string(id));
  }
  const std::set<int64_t> removed(ids.begin(), ids.end());
  std::set<int64_t> affected = components_touching(map, removed);
  GlobalMap out = map;
  for (int64_t id : removed) {
    out.index.erase(id, out.bounds.at(id));
    out.bounds.erase(id);
    out.transforms.erase(id);
    out.submaps.erase(id);
    affected.erase(id);
  }
  refuse(out, affected);
  return out;
}

}  // namespace vps
