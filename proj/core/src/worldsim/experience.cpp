#include "vps/worldsim/experience.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "vps/error.hpp"
#include "vps/random.hpp"

namespace vps {

namespace {

// Piecewise path of straight legs joined by circular arcs.
class Path {
 public:
  Path(const std::vector<Vec2>& waypoints, double turn_radius) {
    const size_t n = waypoints.size();
    std::vector<double> cut(n, 0.0);
    for (size_t i = 1; i + 1 < n; ++i) {
      const Vec2 d1 = (waypoints[i] - waypoints[i - 1]).normalized();
      const Vec2 d2 = (waypoints[i + 1] - waypoints[i]).normalized();
      const double turn = std::acos(std::clamp(d1.dot(d2), -1.0, 1.0));
      if (turn < 1e-6 || turn > M_PI - 1e-3) continue;
      double tangent = turn_radius * std::tan(0.5 * turn);
      tangent = std::min({tangent, 0.5 * (waypoints[i] - waypoints[i - 1]).norm(),
                          0.5 * (waypoints[i + 1] - waypoints[i]).norm()});
      cut[i] = tangent;
    }
    for (size_t i = 0; i + 1 < n; ++i) {
      const Vec2 a = waypoints[i], b = waypoints[i + 1];
      const Vec2 d = (b - a).normalized();
      const Vec2 start = a + d * cut[i];
      const Vec2 end = b - d * cut[i + 1];
      add_line(start, end);
      if (i + 2 < n && cut[i + 1] > 0.0) {
        const Vec2 d2 = (waypoints[i + 2] - b).normalized();
        add_arc(end, d, b + d2 * cut[i + 1], d2);
      }
    }
  }

  double length() const { return pieces_.empty() ? 0.0 : pieces_.back().s0 + pieces_.back().length; }

  // Position and heading at arc length s.
  std::pair<Vec2, double> at(double s) const {
    s = std::clamp(s, 0.0, length());
    auto it = std::upper_bound(pieces_.begin(), pieces_.end(), s,
                               [](double v, const Piece& p) { return v < p.s0; });
    const Piece& p = *(it == pieces_.begin() ? it : std::prev(it));
    const double u = s - p.s0;
    if (!p.arc) {
      return {p.start + p.dir * u, std::atan2(p.dir.y(), p.dir.x())};
    }
    const double angle = p.start_angle + p.sign * u / p.radius;
    const Vec2 pos = p.center + p.radius * Vec2(std::cos(angle), std::sin(angle));
    return {pos, angle + p.sign * 0.5 * M_PI};
  }

 private:
  struct Piece {
    double s0 = 0.0;
    double length = 0.0;
    bool arc = false;
    Vec2 start, dir;
    Vec2 center;
    double radius = 0.0, start_angle = 0.0, sign = 1.0;
  };

  void add_line(const Vec2& a, const Vec2& b) {
    Piece p;
    p.s0 = length();
    p.length = (b - a).norm();
    if (p.length <= 0.0) return;
    p.start = a;
    p.dir = (b - a) / p.length;
    pieces_.push_back(p);
  }

  void add_arc(const Vec2& a, const Vec2& d1, const Vec2& b, const Vec2& d2) {
    const double cross = d1.x() * d2.y() - d1.y() * d2.x();
    const double sign = cross > 0.0 ? 1.0 : -1.0;  // +1 = left turn
    const Vec2 normal = sign * Vec2(-d1.y(), d1.x());
    const double turn = std::acos(std::clamp(d1.dot(d2), -1.0, 1.0));
    const double chord = (b - a).norm();
    const double radius = chord / (2.0 * std::sin(0.5 * turn));
    Piece p;
    p.s0 = length();
    p.arc = true;
    p.center = a + normal * radius;
    p.radius = radius;
    p.sign = sign;
    p.start_angle = std::atan2(a.y() - p.center.y(), a.x() - p.center.x());
    p.length = radius * turn;
    pieces_.push_back(p);
  }

  std::vector<Piece> pieces_;
};

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double t = std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
  return (a + t * d - p).norm();
}

// Arc-length position of the first crossing between two polylines.
std::optional<std::pair<double, double>> intersect(const Street& s1, const Street& s2) {
  double base1 = 0.0;
  for (size_t i = 0; i + 1 < s1.points.size(); ++i) {
    const Vec2 a = s1.points[i], b = s1.points[i + 1];
    double base2 = 0.0;
    for (size_t j = 0; j + 1 < s2.points.size(); ++j) {
      const Vec2 c = s2.points[j], d = s2.points[j + 1];
      const Vec2 r = b - a, s = d - c;
      const double denom = r.x() * s.y() - r.y() * s.x();
      if (std::abs(denom) > 1e-12) {
        const Vec2 ca = c - a;
        const double t = (ca.x() * s.y() - ca.y() * s.x()) / denom;
        const double u = (ca.x() * r.y() - ca.y() * r.x()) / denom;
        if (t >= -1e-9 && t <= 1 + 1e-9 && u >= -1e-9 && u <= 1 + 1e-9) {
          return std::make_pair(base1 + t * r.norm(), base2 + u * s.norm());
        }
      }
      base2 += s.norm();
    }
    base1 += (b - a).norm();
  }
  return std::nullopt;
}

Vec2 point_at(const Street& s, double arc) {
  double base = 0.0;
  for (size_t i = 0; i + 1 < s.points.size(); ++i) {
    const double len = (s.points[i + 1] - s.points[i]).norm();
    if (arc <= base + len || i + 2 == s.points.size()) {
      return s.points[i] + (s.points[i + 1] - s.points[i]) * ((arc - base) / len);
    }
    base += len;
  }
  return s.points.back();
}

// Appends the street's polyline between two arc positions (exclusive of the
// start, inclusive of the end).
void append_between(const Street& s, double from, double to, std::vector<Vec2>& out) {
  double base = 0.0;
  std::vector<std::pair<double, Vec2>> vertices;
  for (size_t i = 0; i < s.points.size(); ++i) {
    if (i > 0) base += (s.points[i] - s.points[i - 1]).norm();
    vertices.emplace_back(base, s.points[i]);
  }
  if (to > from) {
    for (const auto& [a, p] : vertices) {
      if (a > from + 1e-9 && a < to - 1e-9) out.push_back(p);
    }
  } else {
    for (auto it = vertices.rbegin(); it != vertices.rend(); ++it) {
      if (it->first < from - 1e-9 && it->first > to + 1e-9) out.push_back(it->second);
    }
  }
  out.push_back(point_at(s, to));
}

}  // namespace

std::string to_string(Platform p) { return p == Platform::vehicle ? "vehicle" : "pedestrian"; }

Platform platform_from_string(const std::string& s) {
  if (s == "vehicle") return Platform::vehicle;
  if (s == "pedestrian") return Platform::pedestrian;
  throw BadConfig("unknown platform: " + s);
}

NoiseConfig NoiseConfig::none() {
  NoiseConfig n;
  n.gps_sigma = 0.0;
  n.canyon_bias = 0.0;
  n.pixel_sigma = 0.0;
  n.descriptor_sigma = 0.0;
  n.ins_rotation_sigma_deg = 0.0;
  n.dropout = 0.0;
  return n;
}

CaptureConfig CaptureConfig::vehicle(int experience_id, double condition, uint64_t seed) {
  CaptureConfig c;
  c.experience_id = experience_id;
  c.condition = condition;
  c.label = condition < 0.5 ? "day" : "night";
  c.seed = seed;
  return c;
}

CaptureConfig CaptureConfig::pedestrian(int experience_id, double condition, uint64_t seed) {
  CaptureConfig c = vehicle(experience_id, condition, seed);
  c.platform = Platform::pedestrian;
  c.speed = 1.4;
  c.frame_rate = 5.0;
  c.lateral_offset = 4.0;
  c.camera_height = 1.6;
  c.yaw_pattern = YawPattern::sweep;
  c.yaw_amplitude_deg = 60.0;
  return c;
}

Route make_route(const World& world, const std::vector<int>& street_ids, bool reverse) {
  if (street_ids.empty()) throw RouteNotInWorld("route has no streets");
  std::vector<const Street*> streets;
  for (int id : street_ids) {
    const Street* s = world.street(id);
    if (s == nullptr) throw RouteNotInWorld("unknown street " + std::to_string(id));
    streets.push_back(s);
  }
  Route route;
  if (streets.size() == 1) {
    route.waypoints = streets[0]->points;
    if (reverse) std::reverse(route.waypoints.begin(), route.waypoints.end());
    return route;
  }
  // Arc positions where consecutive streets meet.
  std::vector<std::pair<double, double>> meets;
  for (size_t i = 0; i + 1 < streets.size(); ++i) {
    const auto m = intersect(*streets[i], *streets[i + 1]);
    if (!m) {
      throw RouteNotInWorld("streets " + std::to_string(streets[i]->id) + " and " +
                            std::to_string(streets[i + 1]->id) + " do not intersect");
    }
    meets.push_back(*m);
  }
  const double first_start = reverse ? streets[0]->length() : 0.0;
  route.waypoints.push_back(point_at(*streets[0], first_start));
  append_between(*streets[0], first_start, meets[0].first, route.waypoints);
  for (size_t i = 1; i + 1 < streets.size(); ++i) {
    append_between(*streets[i], meets[i - 1].second, meets[i].first, route.waypoints);
  }
  const Street& last = *streets.back();
  const double entry = meets.back().second;
  const double end = (last.length() - entry) >= entry ? last.length() : 0.0;
  append_between(last, entry, end, route.waypoints);

  // Drop repeated points (a route that turns exactly at a street end).
  std::vector<Vec2> clean;
  for (const auto& p : route.waypoints) {
    if (clean.empty() || (clean.back() - p).norm() > 1e-9) clean.push_back(p);
  }
  route.waypoints = clean;
  return route;
}

void validate_route(const World& world, const Route& route) {
  if (route.waypoints.size() < 2) throw RouteNotInWorld("route needs at least two waypoints");
  for (size_t i = 0; i + 1 < route.waypoints.size(); ++i) {
    const Vec2 a = route.waypoints[i], b = route.waypoints[i + 1];
    bool on_street = false;
    for (const auto& s : world.streets) {
      for (size_t j = 0; j + 1 < s.points.size() && !on_street; ++j) {
        on_street = point_segment_distance(a, s.points[j], s.points[j + 1]) < 0.5 &&
                    point_segment_distance(b, s.points[j], s.points[j + 1]) < 0.5;
      }
      if (on_street) break;
    }
    if (!on_street) throw RouteNotInWorld("route leg " + std::to_string(i) + " is off-street");
  }
}

std::vector<std::pair<int64_t, Vec2>> visible_landmarks(const World& world, const Pose& pose,
                                                        const Camera& camera, double max_distance) {
  std::vector<std::pair<int64_t, Vec2>> out;
  const Vec3 c = pose.translation();
  for (const auto& lm : world.landmarks) {
    if ((lm.position.head<2>() - c.head<2>()).squaredNorm() > max_distance * max_distance) continue;
    const auto px = project(lm.position, pose, camera);
    if (!px || !camera.in_image(*px)) continue;
    if (world.occluded(c, lm.position)) continue;
    out.emplace_back(lm.id, *px);
  }
  return out;
}

Experience simulate_experience(const World& world, const Route& route, const CaptureConfig& capture,
                               const NoiseConfig& noise) {
  validate_route(world, route);
  if (!(capture.speed > 0.0) || !(capture.frame_rate > 0.0)) {
    throw BadConfig("speed and frame rate must be positive");
  }

  Experience exp;
  exp.id = capture.experience_id;
  exp.label = capture.label;
  exp.condition = capture.condition;
  exp.platform = capture.platform;
  exp.camera = capture.camera;

  std::mt19937_64 rng(derive_seed({capture.seed, static_cast<uint64_t>(capture.experience_id)}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double ins_sigma = noise.ins_rotation_sigma_deg * M_PI / 180.0;
  const double amp = capture.yaw_amplitude_deg * M_PI / 180.0;

  const Path path(route.waypoints, capture.turn_radius);
  const double total = path.length();
  Pose previous;
  for (int k = 0;; ++k) {
    const double dt = k / capture.frame_rate;
    const double s = capture.speed * dt;
    if (s > total + 1e-9) break;
    auto [center, heading] = path.at(s);
    const Vec2 right(std::sin(heading), -std::cos(heading));
    const Vec2 pos2 = center + right * capture.lateral_offset;

    double yaw = heading;
    switch (capture.yaw_pattern) {
      case YawPattern::fixed:
        yaw += amp;
        break;
      case YawPattern::alternate:
        yaw += (k % 2 == 0) ? amp : -amp;
        break;
      case YawPattern::sweep:
        yaw += amp * std::sin(2.0 * M_PI * dt / capture.sweep_period);
        break;
    }
    const Pose pose(camera_rotation_from_heading(yaw), Vec3(pos2.x(), pos2.y(), capture.camera_height));

    Frame f;
    f.id = make_frame_id(exp.id, k);
    f.experience_id = exp.id;
    f.timestamp = capture.start_time + dt;
    f.condition = capture.condition;
    f.truth.pose = pose;

    const Vec3 bias = canyon_bias(world, pos2, noise.canyon_bias);
    f.gps.sigma = noise.gps_sigma;
    f.gps.position = pose.translation() + bias +
                     Vec3(noise.gps_sigma * gauss(rng), noise.gps_sigma * gauss(rng),
                          noise.gps_vertical_factor * noise.gps_sigma * gauss(rng));

    const Vec3 ins_noise_g(ins_sigma * gauss(rng), ins_sigma * gauss(rng), ins_sigma * gauss(rng));
    f.ins.gravity = (so3_exp(ins_noise_g) * (pose.rotation().conjugate() * Vec3(0, 0, -1))).normalized();
    const Vec3 ins_noise_r(ins_sigma * gauss(rng), ins_sigma * gauss(rng), ins_sigma * gauss(rng));
    f.ins.relative_rotation =
        k == 0 ? Quat::Identity()
               : (previous.rotation().conjugate() * pose.rotation() * so3_exp(ins_noise_r)).normalized();
    previous = pose;

    for (const auto& [id, pixel] : visible_landmarks(world, pose, capture.camera, capture.max_view_distance)) {
      if (noise.dropout > 0.0 && unit(rng) < noise.dropout) continue;
      Observation obs;
      obs.pixel = pixel + Vec2(noise.pixel_sigma * gauss(rng), noise.pixel_sigma * gauss(rng));
      obs.descriptor = world.landmarks[static_cast<size_t>(id)].descriptor +
                       condition_offset(id, capture.condition, capture.condition_offset_magnitude);
      for (int d = 0; d < kDescriptorDim; ++d) obs.descriptor(d) += noise.descriptor_sigma * gauss(rng);
      f.observations.push_back(obs);
      f.truth.landmark_ids.push_back(id);
    }
    exp.frames.push_back(std::move(f));
  }
  return exp;
}

}  // namespace vps
