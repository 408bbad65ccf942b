#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "vps/locserver/content_store.hpp"
#include "vps/locserver/localize.hpp"
#include "vps/locserver/protocol.hpp"
#include "vps/mapstore/mapstore.hpp"

namespace vps {

struct Endpoint {
  std::string host = "127.0.0.1";
  uint16_t port = 0;
};

// "host:port" or ":port"; throws BadConfig.
Endpoint parse_endpoint(const std::string& text);

struct ServerOptions {
  Endpoint listen;
  LocalizeParams params;
  // Content snapshot written on stop when non-empty (and read on start when
  // it exists).
  std::filesystem::path content_snapshot;
};

// TCP localization service: one thread per connection, shared read-only map.
class Server {
 public:
  Server(std::shared_ptr<const MapHandle> map, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and starts accepting. Throws BindFailure.
  void start();
  // Closes every connection and joins all threads. Idempotent.
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();

  uint16_t port() const { return port_; }
  // Readers in flight keep the map they started with.
  void set_map(std::shared_ptr<const MapHandle> map);
  std::shared_ptr<const MapHandle> map() const;
  ContentStore& content() { return content_; }
  // Processing time of every localize request so far, in arrival order.
  std::vector<double> processing_ms() const;

 private:
  struct Connection;
  struct Subscription {
    std::string device_id;
    Vec3 center = Vec3::Zero();
    double radius = 0.0;
  };

  void accept_loop();
  void serve(std::shared_ptr<Connection> c);
  void handle(Connection& c, MessageType type, const std::string& payload);
  void announce(Connection& from, const PoseAnnounce& a);

  ServerOptions options_;
  mutable std::mutex map_mutex_;
  std::shared_ptr<const MapHandle> map_;
  ContentStore content_;

  int listen_fd_ = -1;
  uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;

  std::mutex connections_mutex_;
  std::vector<std::shared_ptr<Connection>> connections_;
  std::vector<std::thread> workers_;

  std::mutex pose_mutex_;
  std::map<Connection*, Subscription> subscriptions_;
  std::map<std::string, double> last_announce_;
  std::map<std::string, Vec3> last_position_;

  mutable std::mutex stats_mutex_;
  std::vector<double> processing_ms_;

  std::mutex stop_mutex_;
  std::condition_variable stopped_cv_;
  bool stopped_ = false;
};

// Blocking client for one connection. Pose events are queued by a reader
// thread; request methods are serialised. Throws ConnectionLost when the
// server goes away and ProtocolError when it answers with an error frame.
class Client {
 public:
  explicit Client(const Endpoint& endpoint);
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  LocalizeResponse localize(const LocalizeRequest& request);
  ContentRecord put_content(const ContentRecord& record);
  std::vector<ContentRecord> get_content(const ContentGet& query);
  void announce(const PoseAnnounce& pose);
  void subscribe(const PoseSubscribe& subscription);
  // Next pose event from another device, or nullopt after the timeout.
  std::optional<PoseEvent> next_event(double timeout_s);

  // Sends raw bytes and waits for the next reply frame (for protocol tests).
  WireFrame exchange_raw(const std::string& bytes);
  bool connected() const { return !closed_; }

 private:
  WireFrame request(MessageType type, const std::string& payload, MessageType expected);
  WireFrame wait_reply();
  void reader();

  int fd_ = -1;
  std::thread reader_thread_;
  std::mutex request_mutex_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<WireFrame> replies_;
  std::vector<PoseEvent> events_;
  std::atomic<bool> closed_{false};
};

}  // namespace vps
