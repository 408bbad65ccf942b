#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vps/locserver/messages.hpp"

namespace vps {

// Frame: "VPS1", u8 type, u32 payload length (LE), payload. Numbers are
// little-endian, doubles are IEEE-754 binary64, strings and byte blobs carry
// a u32 length prefix, poses are [qw qx qy qz tx ty tz].
//
// Payloads, in field order:
//   LocalizeRequest   device id, timestamp, gps x y z, gps sigma,
//                     camera f cx cy w h, u32 n, n x (u v, 16 descriptor values)
//   LocalizeResponse  u8 status, pose, u32 inliers, i64 submap id, server ms
//   ContentPut        record
//   ContentGet        center x y z, radius
//   ContentRecords    u32 n, n x record
//   PoseAnnounce      device id, timestamp, pose
//   PoseSubscribe     device id, center x y z, radius
//   PoseEvent         device id, timestamp, pose
//   ProtocolError     message
// A record is: i64 id, pose, payload bytes, creator, timestamp.
enum class MessageType : uint8_t {
  localize_request = 0x01,
  localize_response = 0x02,
  content_put = 0x10,
  content_get = 0x11,
  content_records = 0x12,
  pose_announce = 0x20,
  pose_subscribe = 0x21,
  pose_event = 0x22,
  protocol_error = 0x7F,
};

inline constexpr char kProtocolMagic[4] = {'V', 'P', 'S', '1'};
inline constexpr size_t kFrameHeaderSize = 9;
inline constexpr uint32_t kMaxPayload = 64u << 20;

struct WireFrame {
  MessageType type = MessageType::protocol_error;
  std::string payload;
};

std::string encode_frame(MessageType type, std::string_view payload);
// Parses a frame header. Throws ProtocolError on bad magic, unknown type or
// oversized payload; returns the type and payload length.
std::pair<MessageType, uint32_t> decode_header(std::string_view header);
// Whole frame from a buffer; throws ProtocolError when incomplete or trailing
// bytes remain.
WireFrame decode_frame(std::string_view bytes);

// Payload codecs. Decoders throw ProtocolError on truncated or trailing data
// and on invalid values (non-positive sigma, bad camera, non-finite numbers).
std::string encode(const LocalizeRequest& m);
std::string encode(const LocalizeResponse& m);
std::string encode(const ContentRecord& m);
std::string encode(const std::vector<ContentRecord>& m);
std::string encode(const ContentGet& m);
std::string encode(const PoseAnnounce& m);
std::string encode(const PoseSubscribe& m);
std::string encode_error(std::string_view message);

LocalizeRequest decode_localize_request(std::string_view payload);
LocalizeResponse decode_localize_response(std::string_view payload);
ContentRecord decode_content_record(std::string_view payload);
std::vector<ContentRecord> decode_content_records(std::string_view payload);
ContentGet decode_content_get(std::string_view payload);
PoseAnnounce decode_pose_announce(std::string_view payload);
PoseSubscribe decode_pose_subscribe(std::string_view payload);
std::string decode_error(std::string_view payload);

// Blocking socket helpers. read_frame returns nullopt on orderly close before
// a header; throws ConnectionLost on a short read or ProtocolError on a bad
// header.
void write_all(int fd, std::string_view bytes);
std::optional<WireFrame> read_frame(int fd);

}  // namespace vps
