#include "vps/edgeclient/session.hpp"

#include <cmath>
#include <future>
#include <map>

#include "common/json_util.hpp"
#include "vps/error.hpp"
#include "vps/locserver/protocol.hpp"

namespace vps {

using detail::json;

std::vector<size_t> select_keyframes(std::span<const TimedPose> stream, const KeyframePolicy& policy) {
  if (!(policy.distance > 0.0) || !(policy.interval > 0.0)) throw BadConfig("keyframe limits must be positive");
  std::vector<size_t> out;
  if (stream.empty()) return out;
  // Slack for limits reached exactly on a sample.
  constexpr double eps = 1e-9;
  double travelled = 0.0;
  double last_time = stream.front().timestamp;
  for (size_t i = 1; i < stream.size(); ++i) {
    travelled += (stream[i].pose.translation() - stream[i - 1].pose.translation()).norm();
    if (travelled >= policy.distance - eps || stream[i].timestamp - last_time >= policy.interval - eps) {
      out.push_back(i);
      travelled = 0.0;
      last_time = stream[i].timestamp;
    }
  }
  return out;
}

void NetworkModel::validate() const {
  if (!(latency >= 0.0) || !std::isfinite(latency)) throw BadConfig("network latency must be non-negative");
  if (!(bandwidth > 0.0)) throw BadConfig("network bandwidth must be positive");
  if (!(drop >= 0.0 && drop <= 1.0)) throw BadConfig("drop probability must lie in [0, 1]");
}

double predict_error(double eps_map, double eps_loc, double eps_vo, double dt, double r_loc) {
  if (!(r_loc > 0.0 && r_loc <= 1.0)) throw BadRate("localisation rate must lie in (0, 1]");
  return eps_map + eps_loc + eps_vo * dt / r_loc;
}

bool SessionTrace::connection_lost() const {
  for (const auto& e : events) {
    if (e.kind == "connection_lost") return true;
  }
  return false;
}

LocalizeRequest make_request(const Frame& frame, const Camera& camera, const std::string& device_id) {
  LocalizeRequest r;
  r.device_id = device_id;
  r.timestamp = frame.timestamp;
  r.gps = frame.gps.position;
  r.gps_sigma = frame.gps.sigma > 0.0 ? frame.gps.sigma : 1.0;
  r.camera = camera;
  r.features.reserve(frame.observations.size());
  for (const auto& o : frame.observations) r.features.push_back({o.pixel, o.descriptor});
  return r;
}

namespace {

struct InFlight {
  int seq = 0;
  size_t index = 0;  // keyframe sample
  std::future<LocalizeResponse> reply;
};

}  // namespace

SessionTrace run_session(const Experience& capture, const VioLog& vio, const Localizer& localize,
                         const SessionOptions& options) {
  options.network.validate();
  if (capture.frames.size() != vio.poses.size()) throw BadConfig("capture and odometry lengths differ");
  SessionTrace trace;
  trace.device_id = options.device_id;
  SyncState sync(options.sync);
  std::mt19937_64 rng(options.network.seed);
  std::bernoulli_distribution drop(options.network.drop);
  const size_t response_bytes = kFrameHeaderSize + encode(LocalizeResponse{}).size();

  const auto keyframes = select_keyframes(vio.poses, options.keyframes);
  size_t next_keyframe = 0;
  // Keyed by (arrival time, seq) so replies are consumed in logical order.
  std::map<std::pair<double, int>, InFlight> in_flight;
  bool lost = false;
  int seq = 0;

  auto deliver = [&](double until) {
    while (!in_flight.empty() && in_flight.begin()->first.first <= until) {
      auto node = in_flight.extract(in_flight.begin());
      const double arrival = node.key().first;
      InFlight& f = node.mapped();
      const Frame& frame = capture.frames[f.index];
      LocalizeResponse r;
      try {
        r = f.reply.get();
      } catch (const ConnectionLost& e) {
        if (!lost) trace.events.push_back({arrival, "connection_lost", e.what()});
        lost = true;
        continue;
      } catch (const Error& e) {
        trace.events.push_back({arrival, "request_failed", e.what()});
        continue;
      }
      TraceResponse tr;
      tr.seq = f.seq;
      tr.frame_id = frame.id;
      tr.received = arrival;
      tr.status = r.status;
      tr.pose = r.pose;
      tr.inliers = r.inliers;
      tr.submap_id = r.submap_id;
      tr.server_ms = r.server_ms;
      if (r.status == LocalizeStatus::success) {
        const SyncEntry entry{vio.poses[f.index].timestamp, vio.poses[f.index].pose, r.pose, r.inliers};
        tr.sync = to_string(sync.update(entry));
      }
      trace.responses.push_back(std::move(tr));
    }
  };

  for (size_t i = 0; i < vio.poses.size(); ++i) {
    const double t = vio.poses[i].timestamp;
    deliver(t);
    if (next_keyframe < keyframes.size() && keyframes[next_keyframe] == i) {
      ++next_keyframe;
      if (!lost) {
        LocalizeRequest request = make_request(capture.frames[i], capture.camera, options.device_id);
        TraceRequest tr;
        tr.seq = seq++;
        tr.frame_id = capture.frames[i].id;
        tr.sent = t;
        tr.bytes = kFrameHeaderSize + encode(request).size();
        tr.uplink = options.network.transfer_time(tr.bytes);
        tr.dropped = options.network.drop > 0.0 && drop(rng);
        if (!tr.dropped) {
          const double arrival =
              t + tr.uplink + options.server_time + options.network.transfer_time(response_bytes);
          InFlight f;
          f.seq = tr.seq;
          f.index = i;
          f.reply = std::async(std::launch::async, [&localize, req = std::move(request)] { return localize(req); });
          in_flight.emplace(std::pair{arrival, tr.seq}, std::move(f));
        }
        trace.requests.push_back(tr);
      }
    }
    TracePose p;
    p.frame_id = capture.frames[i].id;
    p.timestamp = t;
    p.local = vio.poses[i].pose;
    if (sync.initialized()) p.global = sync.current_pose(p.local);
    trace.poses.push_back(std::move(p));
  }
  deliver(std::numeric_limits<double>::infinity());
  return trace;
}

SessionTrace run_session(const Experience& capture, const VioLog& vio, const Endpoint& server,
                         const SessionOptions& options) {
  std::unique_ptr<Client> client;
  std::string failure;
  try {
    client = std::make_unique<Client>(server);
  } catch (const ConnectionLost& e) {
    failure = e.what();
  }
  if (client) {
    return run_session(capture, vio, [&](const LocalizeRequest& r) { return client->localize(r); }, options);
  }
  SessionTrace trace = run_session(
      capture, vio, [&](const LocalizeRequest&) -> LocalizeResponse { throw ConnectionLost(failure); }, options);
  return trace;
}

namespace {

json response_to_json(const TraceResponse& r) {
  return {{"type", "response"}, {"seq", r.seq},         {"frame_id", r.frame_id},
          {"received", r.received}, {"status", to_string(r.status)}, {"pose", detail::pose_to_json(r.pose)},
          {"inliers", r.inliers}, {"submap_id", r.submap_id}, {"server_ms", r.server_ms},
          {"sync", r.sync}};
}

LocalizeStatus status_from_string(const std::string& s) {
  for (auto st : {LocalizeStatus::success, LocalizeStatus::no_submap, LocalizeStatus::insufficient_inliers}) {
    if (to_string(st) == s) return st;
  }
  throw IoFailure("unknown localisation status '" + s + "'");
}

}  // namespace

void write_trace(const SessionTrace& trace, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << json{{"type", "session"}, {"device_id", trace.device_id}}.dump() << '\n';
  for (const auto& r : trace.requests) {
    out << json{{"type", "request"}, {"seq", r.seq},       {"frame_id", r.frame_id}, {"sent", r.sent},
                {"bytes", r.bytes},  {"uplink", r.uplink}, {"dropped", r.dropped}}
               .dump()
        << '\n';
  }
  for (const auto& r : trace.responses) out << response_to_json(r).dump() << '\n';
  for (const auto& p : trace.poses) {
    json j{{"type", "pose"}, {"frame_id", p.frame_id}, {"timestamp", p.timestamp},
           {"local", detail::pose_to_json(p.local)}};
    j["global"] = p.global ? detail::pose_to_json(*p.global) : json(nullptr);
    out << j.dump() << '\n';
  }
  for (const auto& e : trace.events) {
    out << json{{"type", "event"}, {"timestamp", e.timestamp}, {"kind", e.kind}, {"message", e.message}}.dump()
        << '\n';
  }
  if (!out) throw IoFailure("failed writing " + path.string());
}

SessionTrace read_trace(const std::filesystem::path& path) {
  SessionTrace trace;
  detail::for_each_json_line(path, [&](const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "session") {
      trace.device_id = j.at("device_id").get<std::string>();
    } else if (type == "request") {
      TraceRequest r;
      r.seq = j.at("seq").get<int>();
      r.frame_id = j.at("frame_id").get<int64_t>();
      r.sent = j.at("sent").get<double>();
      r.bytes = j.at("bytes").get<size_t>();
      r.uplink = j.at("uplink").get<double>();
      r.dropped = j.at("dropped").get<bool>();
      trace.requests.push_back(r);
    } else if (type == "response") {
      TraceResponse r;
      r.seq = j.at("seq").get<int>();
      r.frame_id = j.at("frame_id").get<int64_t>();
      r.received = j.at("received").get<double>();
      r.status = status_from_string(j.at("status").get<std::string>());
      r.pose = detail::pose_from_json(j.at("pose"));
      r.inliers = j.at("inliers").get<uint32_t>();
      r.submap_id = j.at("submap_id").get<int64_t>();
      r.server_ms = j.at("server_ms").get<double>();
      r.sync = j.at("sync").get<std::string>();
      trace.responses.push_back(r);
    } else if (type == "pose") {
      TracePose p;
      p.frame_id = j.at("frame_id").get<int64_t>();
      p.timestamp = j.at("timestamp").get<double>();
      p.local = detail::pose_from_json(j.at("local"));
      if (!j.at("global").is_null()) p.global = detail::pose_from_json(j.at("global"));
      trace.poses.push_back(p);
    } else if (type == "event") {
      trace.events.push_back(
          {j.at("timestamp").get<double>(), j.at("kind").get<std::string>(), j.at("message").get<std::string>()});
    } else {
      throw IoFailure("unknown trace record type '" + type + "'");
    }
  });
  return trace;
}

}  // namespace vps
