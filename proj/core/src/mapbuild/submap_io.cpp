#include "vps/mapbuild/submap_io.hpp"

#include "vps/binary.hpp"
#include "vps/error.hpp"

namespace vps {

namespace {

constexpr std::string_view kMagic = "VPSM";
using Reader = ByteReader<CorruptMap>;

void write_pose(ByteWriter& w, const Pose& p) {
  const Quat& q = p.rotation();
  for (double v : {q.w(), q.x(), q.y(), q.z()}) w.f64(v);
  for (int i = 0; i < 3; ++i) w.f64(p.translation()(i));
}

Pose read_pose(Reader& r) {
  const double qw = r.f64(), qx = r.f64(), qy = r.f64(), qz = r.f64();
  const double x = r.f64(), y = r.f64(), z = r.f64();
  return Pose::from_normalized(Quat(qw, qx, qy, qz), Vec3(x, y, z));
}

}  // namespace

std::string serialize_submap(const Submap& s) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(kSubmapFormatVersion);
  w.i64(s.id);
  w.i32(s.experience_id);
  w.u8(s.status == SubmapStatus::built ? 1 : 0);
  w.str(s.failure);
  w.f64(s.reprojection_rmse);
  w.f64(s.cost);
  w.f64(s.outlier_fraction);
  w.i32(s.attempted_origin_frames);

  const auto& v = s.verification;
  w.u8(v.checked ? 1 : 0);
  w.u8(v.passed ? 1 : 0);
  w.f64(v.median_relative_rotation_deg);
  w.f64(v.median_gravity_deg);
  w.f64(v.max_speed);
  w.f64(v.max_acceleration);
  w.u32(static_cast<uint32_t>(v.failures.size()));
  for (const auto& f : v.failures) w.str(f);

  w.u32(static_cast<uint32_t>(s.frames.size()));
  for (const auto& f : s.frames) {
    w.i64(f.frame_id);
    write_pose(w, f.pose);
    w.f64(f.camera.focal);
    w.f64(f.camera.principal_point.x());
    w.f64(f.camera.principal_point.y());
    w.f64(f.camera.image_size.x());
    w.f64(f.camera.image_size.y());
    for (int i = 0; i < 3; ++i) w.f64(f.gps.position(i));
    w.f64(f.gps.sigma);
    for (int i = 0; i < 3; ++i) w.f64(f.gravity(i));
    w.f64(f.timestamp);
    w.u8(f.origin ? 1 : 0);
  }

  w.u32(static_cast<uint32_t>(s.landmarks.size()));
  for (const auto& l : s.landmarks) {
    w.i64(l.id);
    for (int i = 0; i < 3; ++i) w.f64(l.position(i));
    for (int i = 0; i < kDescriptorDim; ++i) w.f64(l.descriptor(i));
    w.u32(static_cast<uint32_t>(l.observations.size()));
    for (const auto& o : l.observations) {
      w.i64(o.frame_id);
      w.i32(o.index);
      w.f64(o.pixel.x());
      w.f64(o.pixel.y());
    }
  }
  return w.take();
}

Submap deserialize_submap(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(4) != kMagic) throw CorruptMap("bad submap magic");
  const uint32_t version = r.u32();
  if (version != kSubmapFormatVersion) throw CorruptMap("unsupported submap version " + std::to_string(version));
  Submap s;
  s.id = r.i64();
  s.experience_id = r.i32();
  s.status = r.u8() == 1 ? SubmapStatus::built : SubmapStatus::discarded;
  s.failure = r.str();
  s.reprojection_rmse = r.f64();
  s.cost = r.f64();
  s.outlier_fraction = r.f64();
  s.attempted_origin_frames = r.i32();

  auto& v = s.verification;
  v.checked = r.u8() == 1;
  v.passed = r.u8() == 1;
  v.median_relative_rotation_deg = r.f64();
  v.median_gravity_deg = r.f64();
  v.max_speed = r.f64();
  v.max_acceleration = r.f64();
  const uint32_t nf = r.u32();
  for (uint32_t i = 0; i < nf; ++i) v.failures.push_back(r.str());

  const uint32_t frames = r.u32();
  // Each frame record is 8 + 20 * 8 + 1 bytes; reject absurd counts early.
  if (static_cast<uint64_t>(frames) * 169 > r.remaining()) throw CorruptMap("submap frame section truncated");
  s.frames.reserve(frames);
  for (uint32_t i = 0; i < frames; ++i) {
    SubmapFrame f;
    f.frame_id = r.i64();
    f.pose = read_pose(r);
    f.camera.focal = r.f64();
    const double cx = r.f64(), cy = r.f64(), w = r.f64(), h = r.f64();
    f.camera.principal_point = Vec2(cx, cy);
    f.camera.image_size = Vec2(w, h);
    const double gx = r.f64(), gy = r.f64(), gz = r.f64();
    f.gps.position = Vec3(gx, gy, gz);
    f.gps.sigma = r.f64();
    const double ax = r.f64(), ay = r.f64(), az = r.f64();
    f.gravity = Vec3(ax, ay, az);
    f.timestamp = r.f64();
    f.origin = r.u8() == 1;
    s.frames.push_back(f);
  }

  const uint32_t landmarks = r.u32();
  if (static_cast<uint64_t>(landmarks) * 164 > r.remaining()) throw CorruptMap("submap landmark section truncated");
  s.landmarks.reserve(landmarks);
  for (uint32_t i = 0; i < landmarks; ++i) {
    SubmapLandmark l;
    l.id = r.i64();
    const double x = r.f64(), y = r.f64(), z = r.f64();
    l.position = Vec3(x, y, z);
    for (int d = 0; d < kDescriptorDim; ++d) l.descriptor(d) = r.f64();
    const uint32_t n = r.u32();
    if (static_cast<uint64_t>(n) * 28 > r.remaining()) throw CorruptMap("submap observation section truncated");
    for (uint32_t k = 0; k < n; ++k) {
      LandmarkObservation o;
      o.frame_id = r.i64();
      o.index = r.i32();
      const double u = r.f64(), vv = r.f64();
      o.pixel = Vec2(u, vv);
      l.observations.push_back(o);
    }
    s.landmarks.push_back(std::move(l));
  }
  if (!r.done()) throw CorruptMap("trailing bytes after submap");
  return s;
}

}  // namespace vps
