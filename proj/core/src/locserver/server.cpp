#include "vps/locserver/server.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>

#include "vps/error.hpp"
#include "vps/locserver/protocol.hpp"

namespace vps {

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw BadConfig("endpoint must be host:port, got '" + text + "'");
  Endpoint e;
  if (colon > 0) e.host = text.substr(0, colon);
  try {
    const int port = std::stoi(text.substr(colon + 1));
    if (port < 0 || port > 65535) throw BadConfig("port out of range");
    e.port = static_cast<uint16_t>(port);
  } catch (const std::logic_error&) {
    throw BadConfig("bad port in '" + text + "'");
  }
  return e;
}

namespace {

sockaddr_in resolve(const Endpoint& e) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string host = e.host.empty() ? "127.0.0.1" : e.host;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw BadConfig("cannot resolve host " + host);
  }
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  ::freeaddrinfo(res);
  addr.sin_port = htons(e.port);
  return addr;
}

}  // namespace

struct Server::Connection {
  int fd = -1;
  std::mutex write_mutex;

  void send(MessageType type, const std::string& payload) {
    const std::string frame = encode_frame(type, payload);
    std::lock_guard<std::mutex> lock(write_mutex);
    write_all(fd, frame);
  }
};

Server::Server(std::shared_ptr<const MapHandle> map, ServerOptions options)
    : options_(std::move(options)), map_(std::move(map)) {}

Server::~Server() { stop(); }

void Server::start() {
  if (!options_.content_snapshot.empty() && std::filesystem::exists(options_.content_snapshot)) {
    content_.load(options_.content_snapshot);
  }
  sockaddr_in addr;
  try {
    addr = resolve(options_.listen);
  } catch (const BadConfig& e) {
    throw BindFailure(e.what());
  }
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw BindFailure(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listen_fd_, 64) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw BindFailure("cannot listen on " + options_.listen.host + ":" + std::to_string(options_.listen.port) + ": " + why);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (accept_thread_.joinable()) accept_thread_.join();
  {
    std::lock_guard<std::mutex> lock(connections_mutex_);
    for (auto& c : connections_) ::shutdown(c->fd, SHUT_RDWR);
  }
  for (auto& t : workers_) {
    if (t.joinable()) t.join();
  }
  workers_.clear();
  for (auto& c : connections_) ::close(c->fd);
  connections_.clear();
  if (!options_.content_snapshot.empty()) content_.save(options_.content_snapshot);
  {
    std::lock_guard<std::mutex> lock(stop_mutex_);
    stopped_ = true;
  }
  stopped_cv_.notify_all();
}

void Server::wait() {
  std::unique_lock<std::mutex> lock(stop_mutex_);
  stopped_cv_.wait(lock, [this] { return stopped_; });
}

void Server::set_map(std::shared_ptr<const MapHandle> map) {
  std::lock_guard<std::mutex> lock(map_mutex_);
  map_ = std::move(map);
}

std::shared_ptr<const MapHandle> Server::map() const {
  std::lock_guard<std::mutex> lock(map_mutex_);
  return map_;
}

std::vector<double> Server::processing_ms() const {
  std::lock_guard<std::mutex> lock(stats_mutex_);
  return processing_ms_;
}

void Server::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_) break;
      if (errno == EINTR || errno == ECONNABORTED) continue;
      break;
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    auto c = std::make_shared<Connection>();
    c->fd = fd;
    std::lock_guard<std::mutex> lock(connections_mutex_);
    if (!running_) {
      ::close(fd);
      break;
    }
    connections_.push_back(c);
    workers_.emplace_back([this, c] { serve(c); });
  }
}

void Server::serve(std::shared_ptr<Connection> c) {
  try {
    while (true) {
      std::optional<WireFrame> frame;
      try {
        frame = read_frame(c->fd);
      } catch (const ProtocolError& e) {
        c->send(MessageType::protocol_error, encode_error(e.what()));
        break;
      }
      if (!frame) break;
      try {
        handle(*c, frame->type, frame->payload);
      } catch (const ProtocolError& e) {
        c->send(MessageType::protocol_error, encode_error(e.what()));
        break;
      }
    }
  } catch (const ConnectionLost&) {
  }
  {
    std::lock_guard<std::mutex> lock(pose_mutex_);
    subscriptions_.erase(c.get());
  }
  ::shutdown(c->fd, SHUT_RDWR);
}

void Server::handle(Connection& c, MessageType type, const std::string& payload) {
  switch (type) {
    case MessageType::localize_request: {
      const LocalizeRequest request = decode_localize_request(payload);
      const auto map = this->map();
      const LocalizeResponse response = localize_image(*map, request, options_.params);
      {
        std::lock_guard<std::mutex> lock(stats_mutex_);
        processing_ms_.push_back(response.server_ms);
      }
      c.send(MessageType::localize_response, encode(response));
      return;
    }
    case MessageType::content_put: {
      const ContentRecord stored = content_.put(decode_content_record(payload));
      c.send(MessageType::content_records, encode(std::vector<ContentRecord>{stored}));
      return;
    }
    case MessageType::content_get: {
      const ContentGet q = decode_content_get(payload);
      c.send(MessageType::content_records, encode(content_.get(q.center, q.radius)));
      return;
    }
    case MessageType::pose_announce:
      announce(c, decode_pose_announce(payload));
      return;
    case MessageType::pose_subscribe: {
      const PoseSubscribe s = decode_pose_subscribe(payload);
      {
        std::lock_guard<std::mutex> lock(pose_mutex_);
        subscriptions_[&c] = {s.device_id, s.center, s.radius};
      }
      c.send(MessageType::pose_event, encode(PoseEvent{}));
      return;
    }
    default:
      throw ProtocolError("unexpected message type from client");
  }
}

void Server::announce(Connection& from, const PoseAnnounce& a) {
  std::vector<std::pair<Connection*, std::string>> targets;
  {
    std::lock_guard<std::mutex> lock(pose_mutex_);
    auto last = last_announce_.find(a.device_id);
    // Keep each device's stream in timestamp order.
    if (last != last_announce_.end() && a.timestamp <= last->second) return;
    last_announce_[a.device_id] = a.timestamp;
    last_position_[a.device_id] = a.pose.translation();
    const std::string payload = encode(a);
    for (const auto& [conn, sub] : subscriptions_) {
      if (conn == &from || sub.device_id == a.device_id) continue;
      Vec3 center = sub.center;
      auto own = last_position_.find(sub.device_id);
      if (own != last_position_.end()) center = own->second;
      if (sub.radius > 0.0 && (a.pose.translation() - center).norm() > sub.radius) continue;
      targets.emplace_back(conn, payload);
    }
    // Send under the registry lock so events from one device stay ordered
    // across concurrent announces.
    for (auto& [conn, payload_bytes] : targets) {
      try {
        conn->send(MessageType::pose_event, payload_bytes);
      } catch (const ConnectionLost&) {
      }
    }
  }
}

Client::Client(const Endpoint& endpoint) {
  sockaddr_in addr;
  try {
    addr = resolve(endpoint);
  } catch (const BadConfig& e) {
    throw ConnectionLost(e.what());
  }
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw ConnectionLost(std::string("socket: ") + std::strerror(errno));
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    throw ConnectionLost("cannot connect to " + endpoint.host + ":" + std::to_string(endpoint.port) + ": " + why);
  }
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  reader_thread_ = std::thread([this] { reader(); });
}

Client::~Client() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  if (reader_thread_.joinable()) reader_thread_.join();
  if (fd_ >= 0) ::close(fd_);
}

void Client::reader() {
  try {
    while (true) {
      auto frame = read_frame(fd_);
      if (!frame) break;
      std::lock_guard<std::mutex> lock(mutex_);
      if (frame->type == MessageType::pose_event) {
        PoseEvent e = decode_pose_announce(frame->payload);
        if (!e.device_id.empty()) {
          events_.push_back(std::move(e));
          cv_.notify_all();
          continue;
        }
      }
      replies_.push_back(std::move(*frame));
      cv_.notify_all();
    }
  } catch (const Error&) {
  }
  closed_ = true;
  std::lock_guard<std::mutex> lock(mutex_);
  cv_.notify_all();
}

WireFrame Client::wait_reply() {
  std::unique_lock<std::mutex> lock(mutex_);
  cv_.wait(lock, [this] { return !replies_.empty() || closed_; });
  if (replies_.empty()) throw ConnectionLost("connection closed by server");
  WireFrame f = std::move(replies_.front());
  replies_.erase(replies_.begin());
  return f;
}

WireFrame Client::request(MessageType type, const std::string& payload, MessageType expected) {
  std::lock_guard<std::mutex> lock(request_mutex_);
  if (closed_) throw ConnectionLost("connection closed");
  write_all(fd_, encode_frame(type, payload));
  WireFrame reply = wait_reply();
  if (reply.type == MessageType::protocol_error) throw ProtocolError("server: " + decode_error(reply.payload));
  if (reply.type != expected) throw ProtocolError("unexpected reply type");
  return reply;
}

WireFrame Client::exchange_raw(const std::string& bytes) {
  std::lock_guard<std::mutex> lock(request_mutex_);
  write_all(fd_, bytes);
  return wait_reply();
}

LocalizeResponse Client::localize(const LocalizeRequest& r) {
  return decode_localize_response(request(MessageType::localize_request, encode(r), MessageType::localize_response).payload);
}

ContentRecord Client::put_content(const ContentRecord& record) {
  auto records = decode_content_records(request(MessageType::content_put, encode(record), MessageType::content_records).payload);
  if (records.size() != 1) throw ProtocolError("content put must return one record");
  return records.front();
}

std::vector<ContentRecord> Client::get_content(const ContentGet& q) {
  return decode_content_records(request(MessageType::content_get, encode(q), MessageType::content_records).payload);
}

void Client::announce(const PoseAnnounce& pose) {
  std::lock_guard<std::mutex> lock(request_mutex_);
  if (closed_) throw ConnectionLost("connection closed");
  write_all(fd_, encode_frame(MessageType::pose_announce, encode(pose)));
}

void Client::subscribe(const PoseSubscribe& s) { request(MessageType::pose_subscribe, encode(s), MessageType::pose_event); }

std::optional<PoseEvent> Client::next_event(double timeout_s) {
  std::unique_lock<std::mutex> lock(mutex_);
  cv_.wait_for(lock, std::chrono::duration<double>(timeout_s), [this] { return !events_.empty() || closed_; });
  if (events_.empty()) return std::nullopt;
  PoseEvent e = std::move(events_.front());
  events_.erase(events_.begin());
  return e;
}

}  // namespace vps
