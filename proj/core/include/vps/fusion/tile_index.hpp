#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "vps/geometry/pose.hpp"

namespace vps {

struct Circle {
  Vec2 center = Vec2::Zero();
  double radius = 0.0;
};

bool circles_intersect(const Circle& a, const Circle& b);
// Closed disc against the half-open square [x0, x0 + size) x [y0, y0 + size).
bool circle_intersects_square(const Circle& c, const Vec2& corner, double size);

// Square geo tiles; a submap is listed in every tile its circle touches.
class TileIndex {
 public:
  using Key = std::pair<int64_t, int64_t>;

  explicit TileIndex(double tile_size = 100.0);

  double tile_size() const { return tile_size_; }
  Key key_of(const Vec2& p) const;
  Vec2 corner(const Key& k) const;

  void insert(int64_t id, const Circle& c);
  void erase(int64_t id, const Circle& c);
  void clear() { tiles_.clear(); }

  // Ids listed in a tile, ascending.
  std::vector<int64_t> tile(const Key& k) const;
  // Ids whose circle, per `circles`, intersects the query disc; ascending.
  std::vector<int64_t> query(const Circle& disc, const std::map<int64_t, Circle>& circles) const;

  const std::map<Key, std::vector<int64_t>>& tiles() const { return tiles_; }
  void set_tile(const Key& k, std::vector<int64_t> ids) { tiles_[k] = std::move(ids); }

 private:
  std::vector<Key> covered(const Circle& c) const;

  double tile_size_;
  std::map<Key, std::vector<int64_t>> tiles_;
};

}  // namespace vps
