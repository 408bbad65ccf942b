#include "vps/fusion/tile_index.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "vps/error.hpp"

namespace vps {

bool circles_intersect(const Circle& a, const Circle& b) {
  return (a.center - b.center).norm() <= a.radius + b.radius;
}

bool circle_intersects_square(const Circle& c, const Vec2& corner, double size) {
  const Vec2 nearest(std::clamp(c.center.x(), corner.x(), corner.x() + size),
                     std::clamp(c.center.y(), corner.y(), corner.y() + size));
  return (nearest - c.center).norm() <= c.radius;
}

TileIndex::TileIndex(double tile_size) : tile_size_(tile_size) {
  if (!(tile_size > 0.0)) throw BadConfig("tile size must be positive");
}

TileIndex::Key TileIndex::key_of(const Vec2& p) const {
  return {static_cast<int64_t>(std::floor(p.x() / tile_size_)),
          static_cast<int64_t>(std::floor(p.y() / tile_size_))};
}

Vec2 TileIndex::corner(const Key& k) const {
  return Vec2(static_cast<double>(k.first) * tile_size_, static_cast<double>(k.second) * tile_size_);
}

std::vector<TileIndex::Key> TileIndex::covered(const Circle& c) const {
  const Key lo = key_of(c.center - Vec2::Constant(c.radius));
  const Key hi = key_of(c.center + Vec2::Constant(c.radius));
  std::vector<Key> out;
  for (int64_t x = lo.first; x <= hi.first; ++x) {
    for (int64_t y = lo.second; y <= hi.second; ++y) {
      if (circle_intersects_square(c, corner({x, y}), tile_size_)) out.push_back({x, y});
    }
  }
  return out;
}

void TileIndex::insert(int64_t id, const Circle& c) {
  for (const Key& k : covered(c)) {
    auto& ids = tiles_[k];
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) ids.insert(it, id);
  }
}

void TileIndex::erase(int64_t id, const Circle& c) {
  for (const Key& k : covered(c)) {
    auto t = tiles_.find(k);
    if (t == tiles_.end()) continue;
    auto& ids = t->second;
    ids.erase(std::remove(ids.begin(), ids.end(), id), ids.end());
    if (ids.empty()) tiles_.erase(t);
  }
}

std::vector<int64_t> TileIndex::tile(const Key& k) const {
  auto it = tiles_.find(k);
  return it == tiles_.end() ? std::vector<int64_t>{} : it->second;
}

std::vector<int64_t> TileIndex::query(const Circle& disc, const std::map<int64_t, Circle>& circles) const {
  // Any circle meeting the disc touches a tile the disc also touches.
  std::set<int64_t> out;
  for (const Key& k : covered(disc)) {
    auto it = tiles_.find(k);
    if (it == tiles_.end()) continue;
    for (int64_t id : it->second) {
      auto c = circles.find(id);
      if (c != circles.end() && circles_intersect(c->second, disc)) out.insert(id);
    }
  }
  return {out.begin(), out.end()};
}

}  // namespace vps
