#include "vps/worldsim/world.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "vps/error.hpp"
#include "vps/random.hpp"

namespace vps {

namespace {

constexpr double kOuterExtent = 1e4;

Descriptor random_descriptor(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Descriptor d;
  for (int i = 0; i < kDescriptorDim; ++i) d(i) = n(rng);
  return d;
}

// Slab test of the segment a + t (b - a), t in [0, 1), against the block
// interior.
bool segment_hits_block(const Vec2& a, const Vec2& b, const Block& block) {
  constexpr double kInset = 1e-3;
  double t0 = 0.0, t1 = 1.0 - 1e-6;
  const Vec2 d = b - a;
  for (int axis = 0; axis < 2; ++axis) {
    const double lo = block.min(axis) + kInset;
    const double hi = block.max(axis) - kInset;
    if (std::abs(d(axis)) < 1e-12) {
      if (a(axis) <= lo || a(axis) >= hi) return false;
      continue;
    }
    double ta = (lo - a(axis)) / d(axis);
    double tb = (hi - a(axis)) / d(axis);
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 >= t1) return false;
  }
  return true;
}

void place_facade_landmarks(const Street& street, double density, double offset, double min_h,
                            double max_h, std::mt19937_64& rng, std::vector<Landmark>& out) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (size_t s = 0; s + 1 < street.points.size(); ++s) {
    const Vec2 a = street.points[s];
    const Vec2 b = street.points[s + 1];
    const double len = (b - a).norm();
    const Vec2 dir = (b - a) / len;
    const Vec2 normal(-dir.y(), dir.x());
    const int per_side = static_cast<int>(std::lround(density * len / 100.0));
    for (double side : {1.0, -1.0}) {
      for (int i = 0; i < per_side; ++i) {
        const Vec2 p = a + dir * (unit(rng) * len) + normal * (side * offset);
        const double h = min_h + unit(rng) * (max_h - min_h);
        Landmark lm;
        lm.id = static_cast<int64_t>(out.size());
        lm.position = Vec3(p.x(), p.y(), h);
        lm.descriptor = random_descriptor(rng);
        out.push_back(lm);
      }
    }
  }
}

}  // namespace

double Street::length() const {
  double len = 0.0;
  for (size_t i = 0; i + 1 < points.size(); ++i) len += (points[i + 1] - points[i]).norm();
  return len;
}

const Street* World::street(int id) const {
  for (const auto& s : streets) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

bool World::occluded(const Vec3& a, const Vec3& b) const {
  const Vec2 a2 = a.head<2>(), b2 = b.head<2>();
  for (const auto& block : blocks) {
    if (segment_hits_block(a2, b2, block)) return true;
  }
  return false;
}

World generate_world(const WorldConfig& config) {
  if (!(config.landmarks_per_100m > 0.0)) throw BadConfig("landmark density must be positive");
  if (!(config.facade_offset > 0.0)) throw BadConfig("facade offset must be positive");
  if (config.max_landmark_height < config.min_landmark_height) {
    throw BadConfig("landmark height range is empty");
  }

  World world;
  world.config = config;
  world.seed = config.seed;

  if (!config.streets.empty()) {
    for (const auto& s : config.streets) {
      if (s.points.size() < 2 || !(s.length() > 0.0)) throw BadConfig("street has no extent");
    }
    world.streets = config.streets;
  } else {
    if (!(config.width > 0.0) || !(config.height > 0.0)) throw BadConfig("extents must be positive");
    if (!(config.street_spacing > 0.0)) throw BadConfig("street spacing must be positive");
    const int nx = static_cast<int>(std::floor(config.width / config.street_spacing + 1e-9));
    const int ny = static_cast<int>(std::floor(config.height / config.street_spacing + 1e-9));
    std::vector<double> xs, ys;
    for (int i = 0; i <= nx; ++i) xs.push_back(i * config.street_spacing);
    for (int j = 0; j <= ny; ++j) ys.push_back(j * config.street_spacing);
    int id = 0;
    const double width = 2.0 * config.facade_offset;
    for (double y : ys) world.streets.push_back({id++, {Vec2(0.0, y), Vec2(xs.back(), y)}, width});
    for (double x : xs) world.streets.push_back({id++, {Vec2(x, 0.0), Vec2(x, ys.back())}, width});

    // Blocks between neighbouring streets, plus an outer ring so boundary
    // facades are opaque too.
    std::vector<double> gx{-kOuterExtent}, gy{-kOuterExtent};
    gx.insert(gx.end(), xs.begin(), xs.end());
    gy.insert(gy.end(), ys.begin(), ys.end());
    gx.push_back(kOuterExtent);
    gy.push_back(kOuterExtent);
    const double fo = config.facade_offset;
    for (size_t i = 0; i + 1 < gx.size(); ++i) {
      for (size_t j = 0; j + 1 < gy.size(); ++j) {
        Block b;
        b.min = Vec2(i == 0 ? gx[i] : gx[i] + fo, j == 0 ? gy[j] : gy[j] + fo);
        b.max = Vec2(i + 2 == gx.size() ? gx[i + 1] : gx[i + 1] - fo,
                     j + 2 == gy.size() ? gy[j + 1] : gy[j + 1] - fo);
        if (b.max.x() > b.min.x() && b.max.y() > b.min.y()) world.blocks.push_back(b);
      }
    }
  }

  std::mt19937_64 rng(derive_seed({config.seed, 0x1a4d}));
  for (const auto& street : world.streets) {
    place_facade_landmarks(street, config.landmarks_per_100m, config.facade_offset,
                           config.min_landmark_height, config.max_landmark_height, rng,
                           world.landmarks);
  }
  return world;
}

Vec3 canyon_bias(const World& world, const Vec2& p, double amplitude) {
  if (amplitude == 0.0) return Vec3::Zero();
  std::mt19937_64 rng(derive_seed({world.seed, 0xb1a5}));
  std::uniform_real_distribution<double> wavelength(200.0, 400.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  double lam[4], phi[4];
  for (int i = 0; i < 4; ++i) {
    lam[i] = wavelength(rng);
    phi[i] = phase(rng);
  }
  const double k = 2.0 * M_PI;
  return Vec3(amplitude * std::sin(k * p.x() / lam[0] + phi[0]) * std::cos(k * p.y() / lam[1] + phi[1]),
              amplitude * std::cos(k * p.x() / lam[2] + phi[2]) * std::sin(k * p.y() / lam[3] + phi[3]),
              0.0);
}

Descriptor condition_offset(int64_t landmark_id, double condition, double magnitude) {
  std::mt19937_64 rng(derive_seed({0xc0d1, static_cast<uint64_t>(landmark_id)}));
  Descriptor dir = random_descriptor(rng);
  dir *= std::sqrt(static_cast<double>(kDescriptorDim)) / dir.norm();
  return dir * (condition * magnitude);
}

}  // namespace vps
