#include "vps/mapbuild/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vps {

namespace {

constexpr double kRadToDeg = 180.0 / M_PI;

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<long>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

std::string fmt(const char* what, double value, double limit) {
  std::ostringstream s;
  s << what << " " << value << " exceeds " << limit;
  return s.str();
}

}  // namespace

VerificationReport verify_submap(Submap& submap, const FrameStore& frames,
                                 const VerificationThresholds& t) {
  VerificationReport report;
  report.checked = true;

  std::vector<const SubmapFrame*> origin;
  for (const auto& f : submap.frames) {
    if (f.origin) origin.push_back(&f);
  }

  std::vector<double> rel, grav;
  for (const SubmapFrame* f : origin) {
    const Frame& raw = frames.frame(f->frame_id);
    const Vec3 g = f->pose.rotation().conjugate() * Vec3(0, 0, -1);
    const Vec3 ins = raw.ins.gravity.normalized();
    grav.push_back(std::atan2(g.cross(ins).norm(), g.dot(ins)) * kRadToDeg);
  }
  for (size_t i = 1; i < origin.size(); ++i) {
    const SubmapFrame& a = *origin[i - 1];
    const SubmapFrame& b = *origin[i];
    const double dt = b.timestamp - a.timestamp;
    if (b.frame_id == a.frame_id + 1) {
      const Quat sfm = a.pose.rotation().conjugate() * b.pose.rotation();
      rel.push_back(rotation_angle(sfm, frames.frame(b.frame_id).ins.relative_rotation) * kRadToDeg);
    }
    if (dt > 0.0) {
      report.max_speed = std::max(report.max_speed, (b.pose.translation() - a.pose.translation()).norm() / dt);
    }
  }
  // Accelerations from velocities averaged over at least the kinematic
  // window, so that per-frame pose noise does not dominate.
  auto window_end = [&](size_t i) {
    size_t j = i + 1;
    while (j < origin.size() && origin[j]->timestamp - origin[i]->timestamp < t.kinematic_window) ++j;
    return j;
  };
  for (size_t i = 0; i < origin.size(); ++i) {
    const size_t j = window_end(i);
    if (j >= origin.size()) break;
    const size_t k = window_end(j);
    if (k >= origin.size()) break;
    const SubmapFrame &a = *origin[i], &b = *origin[j], &c = *origin[k];
    const Vec3 v0 = (b.pose.translation() - a.pose.translation()) / (b.timestamp - a.timestamp);
    const Vec3 v1 = (c.pose.translation() - b.pose.translation()) / (c.timestamp - b.timestamp);
    report.max_acceleration = std::max(report.max_acceleration, (v1 - v0).norm() / (0.5 * (c.timestamp - a.timestamp)));
  }
  report.median_relative_rotation_deg = median(rel);
  report.median_gravity_deg = median(grav);

  if (report.median_relative_rotation_deg >= t.max_relative_rotation_deg) {
    report.failures.push_back(fmt("relative rotation (deg)", report.median_relative_rotation_deg, t.max_relative_rotation_deg));
  }
  if (report.median_gravity_deg >= t.max_gravity_deg) {
    report.failures.push_back(fmt("gravity angle (deg)", report.median_gravity_deg, t.max_gravity_deg));
  }
  if (report.max_speed > t.max_speed) {
    report.failures.push_back(fmt("speed (m/s)", report.max_speed, t.max_speed));
  }
  if (report.max_acceleration > t.max_acceleration) {
    report.failures.push_back(fmt("acceleration (m/s^2)", report.max_acceleration, t.max_acceleration));
  }
  report.passed = report.failures.empty() && submap.status == SubmapStatus::built;
  if (submap.status != SubmapStatus::built) report.failures.push_back("submap not built");
  submap.verification = report;
  return report;
}

}  // namespace vps
