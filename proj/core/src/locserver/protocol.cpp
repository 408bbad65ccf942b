#include "vps/locserver/protocol.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>

#include "vps/binary.hpp"
#include "vps/error.hpp"

namespace vps {

namespace {

using Reader = ByteReader<ProtocolError>;

double finite(double v) {
  if (!std::isfinite(v)) throw ProtocolError("non-finite value");
  return v;
}

void put_pose(ByteWriter& w, const Pose& p) {
  const Quat& q = p.rotation();
  w.f64(q.w());
  w.f64(q.x());
  w.f64(q.y());
  w.f64(q.z());
  for (int i = 0; i < 3; ++i) w.f64(p.translation()(i));
}

Pose get_pose(Reader& r) {
  double v[7];
  for (double& x : v) x = finite(r.f64());
  const Quat q(v[0], v[1], v[2], v[3]);
  const double n = q.norm();
  if (!(n > 0.5 && n < 2.0)) throw ProtocolError("bad quaternion");
  // Unit quaternions pass through untouched so that round trips are exact.
  if (std::abs(q.squaredNorm() - 1.0) < 1e-12) return Pose::from_normalized(q, Vec3(v[4], v[5], v[6]));
  return Pose(q, Vec3(v[4], v[5], v[6]));
}

Vec3 get_vec3(Reader& r) {
  const double x = finite(r.f64()), y = finite(r.f64()), z = finite(r.f64());
  return Vec3(x, y, z);
}

void put_vec3(ByteWriter& w, const Vec3& v) {
  for (int i = 0; i < 3; ++i) w.f64(v(i));
}

void put_record(ByteWriter& w, const ContentRecord& m) {
  w.i64(m.id);
  put_pose(w, m.pose);
  w.str(m.payload);
  w.str(m.creator);
  w.f64(m.timestamp);
}

ContentRecord get_record(Reader& r) {
  ContentRecord m;
  m.id = r.i64();
  m.pose = get_pose(r);
  m.payload = r.str();
  m.creator = r.str();
  m.timestamp = finite(r.f64());
  return m;
}

void expect_done(const Reader& r) {
  if (!r.done()) throw ProtocolError("trailing bytes in payload");
}

bool known_type(uint8_t t) {
  switch (static_cast<MessageType>(t)) {
    case MessageType::localize_request:
    case MessageType::localize_response:
    case MessageType::content_put:
    case MessageType::content_get:
    case MessageType::content_records:
    case MessageType::pose_announce:
    case MessageType::pose_subscribe:
    case MessageType::pose_event:
    case MessageType::protocol_error:
      return true;
  }
  return false;
}

}  // namespace

std::string to_string(LocalizeStatus s) {
  switch (s) {
    case LocalizeStatus::success:
      return "success";
    case LocalizeStatus::no_submap:
      return "no-submap";
    case LocalizeStatus::insufficient_inliers:
      return "insufficient-inliers";
  }
  return "unknown";
}

std::string encode_frame(MessageType type, std::string_view payload) {
  if (payload.size() > kMaxPayload) throw ProtocolError("payload too large");
  ByteWriter w;
  w.bytes(std::string_view(kProtocolMagic, 4));
  w.u8(static_cast<uint8_t>(type));
  w.u32(static_cast<uint32_t>(payload.size()));
  w.bytes(payload);
  return w.take();
}

std::pair<MessageType, uint32_t> decode_header(std::string_view header) {
  Reader r(header);
  if (r.bytes(4) != std::string_view(kProtocolMagic, 4)) throw ProtocolError("bad magic");
  const uint8_t type = r.u8();
  if (!known_type(type)) throw ProtocolError("unknown message type " + std::to_string(type));
  const uint32_t length = r.u32();
  if (length > kMaxPayload) throw ProtocolError("payload too large");
  return {static_cast<MessageType>(type), length};
}

WireFrame decode_frame(std::string_view bytes) {
  if (bytes.size() < kFrameHeaderSize) throw ProtocolError("incomplete frame header");
  const auto [type, length] = decode_header(bytes.substr(0, kFrameHeaderSize));
  if (bytes.size() != kFrameHeaderSize + length) throw ProtocolError("frame length mismatch");
  return {type, std::string(bytes.substr(kFrameHeaderSize))};
}

std::string encode(const LocalizeRequest& m) {
  ByteWriter w;
  w.str(m.device_id);
  w.f64(m.timestamp);
  put_vec3(w, m.gps);
  w.f64(m.gps_sigma);
  w.f64(m.camera.focal);
  w.f64(m.camera.principal_point.x());
  w.f64(m.camera.principal_point.y());
  w.f64(m.camera.image_size.x());
  w.f64(m.camera.image_size.y());
  w.u32(static_cast<uint32_t>(m.features.size()));
  for (const auto& f : m.features) {
    w.f64(f.pixel.x());
    w.f64(f.pixel.y());
    for (int i = 0; i < kDescriptorDim; ++i) w.f64(f.descriptor(i));
  }
  return w.take();
}

LocalizeRequest decode_localize_request(std::string_view payload) {
  Reader r(payload);
  LocalizeRequest m;
  m.device_id = r.str();
  m.timestamp = finite(r.f64());
  m.gps = get_vec3(r);
  m.gps_sigma = finite(r.f64());
  if (!(m.gps_sigma > 0.0)) throw ProtocolError("gps sigma must be positive");
  m.camera.focal = finite(r.f64());
  const double cx = finite(r.f64()), cy = finite(r.f64());
  const double w = finite(r.f64()), h = finite(r.f64());
  m.camera.principal_point = Vec2(cx, cy);
  m.camera.image_size = Vec2(w, h);
  if (!m.camera.valid()) throw ProtocolError("invalid camera");
  const uint32_t n = r.u32();
  constexpr size_t kFeatureBytes = 8 * (2 + kDescriptorDim);
  if (static_cast<uint64_t>(n) * kFeatureBytes > r.remaining()) throw ProtocolError("feature list truncated");
  m.features.resize(n);
  for (auto& f : m.features) {
    const double u = finite(r.f64()), v = finite(r.f64());
    f.pixel = Vec2(u, v);
    for (int i = 0; i < kDescriptorDim; ++i) f.descriptor(i) = finite(r.f64());
  }
  expect_done(r);
  return m;
}

std::string encode(const LocalizeResponse& m) {
  ByteWriter w;
  w.u8(static_cast<uint8_t>(m.status));
  put_pose(w, m.pose);
  w.u32(m.inliers);
  w.i64(m.submap_id);
  w.f64(m.server_ms);
  return w.take();
}

LocalizeResponse decode_localize_response(std::string_view payload) {
  Reader r(payload);
  LocalizeResponse m;
  const uint8_t status = r.u8();
  if (status > 2) throw ProtocolError("bad localize status");
  m.status = static_cast<LocalizeStatus>(status);
  m.pose = get_pose(r);
  m.inliers = r.u32();
  m.submap_id = r.i64();
  m.server_ms = finite(r.f64());
  expect_done(r);
  return m;
}

std::string encode(const ContentRecord& m) {
  ByteWriter w;
  put_record(w, m);
  return w.take();
}

ContentRecord decode_content_record(std::string_view payload) {
  Reader r(payload);
  ContentRecord m = get_record(r);
  expect_done(r);
  return m;
}

std::string encode(const std::vector<ContentRecord>& m) {
  ByteWriter w;
  w.u32(static_cast<uint32_t>(m.size()));
  for (const auto& rec : m) put_record(w, rec);
  return w.take();
}

std::vector<ContentRecord> decode_content_records(std::string_view payload) {
  Reader r(payload);
  const uint32_t n = r.u32();
  // The smallest record is 8 + 56 + 4 + 4 + 8 bytes.
  if (static_cast<uint64_t>(n) * 80 > r.remaining()) throw ProtocolError("record list truncated");
  std::vector<ContentRecord> out;
  out.reserve(n);
  for (uint32_t i = 0; i < n; ++i) out.push_back(get_record(r));
  expect_done(r);
  return out;
}

std::string encode(const ContentGet& m) {
  ByteWriter w;
  put_vec3(w, m.center);
  w.f64(m.radius);
  return w.take();
}

ContentGet decode_content_get(std::string_view payload) {
  Reader r(payload);
  ContentGet m;
  m.center = get_vec3(r);
  m.radius = finite(r.f64());
  if (m.radius < 0.0) throw ProtocolError("negative radius");
  expect_done(r);
  return m;
}

std::string encode(const PoseAnnounce& m) {
  ByteWriter w;
  w.str(m.device_id);
  w.f64(m.timestamp);
  put_pose(w, m.pose);
  return w.take();
}

PoseAnnounce decode_pose_announce(std::string_view payload) {
  Reader r(payload);
  PoseAnnounce m;
  m.device_id = r.str();
  m.timestamp = finite(r.f64());
  m.pose = get_pose(r);
  expect_done(r);
  return m;
}

std::string encode(const PoseSubscribe& m) {
  ByteWriter w;
  w.str(m.device_id);
  put_vec3(w, m.center);
  w.f64(m.radius);
  return w.take();
}

PoseSubscribe decode_pose_subscribe(std::string_view payload) {
  Reader r(payload);
  PoseSubscribe m;
  m.device_id = r.str();
  m.center = get_vec3(r);
  m.radius = finite(r.f64());
  if (m.radius < 0.0) throw ProtocolError("negative radius");
  expect_done(r);
  return m;
}

std::string encode_error(std::string_view message) {
  ByteWriter w;
  w.str(message);
  return w.take();
}

std::string decode_error(std::string_view payload) {
  Reader r(payload);
  std::string m = r.str();
  expect_done(r);
  return m;
}

void write_all(int fd, std::string_view bytes) {
  size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw ConnectionLost(std::string("send failed: ") + std::strerror(errno));
    sent += static_cast<size_t>(n);
  }
}

namespace {

// Reads exactly n bytes; false on orderly close before the first byte.
bool read_exact(int fd, char* out, size_t n, bool allow_eof) {
  size_t got = 0;
  while (got < n) {
    const ssize_t k = ::recv(fd, out + got, n - got, 0);
    if (k < 0 && errno == EINTR) continue;
    if (k == 0 && got == 0 && allow_eof) return false;
    if (k <= 0) throw ConnectionLost("connection closed mid-frame");
    got += static_cast<size_t>(k);
  }
  return true;
}

}  // namespace

std::optional<WireFrame> read_frame(int fd) {
  char header[kFrameHeaderSize];
  if (!read_exact(fd, header, kFrameHeaderSize, true)) return std::nullopt;
  const auto [type, length] = decode_header(std::string_view(header, kFrameHeaderSize));
  WireFrame f;
  f.type = type;
  f.payload.resize(length);
  if (length > 0) read_exact(fd, f.payload.data(), length, false);
  return f;
}

}  // namespace vps
