#include <gtest/gtest.h>

#include <sys/socket.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <thread>

#include "loc_fixtures.hpp"
#include "protocol_golden.hpp"
#include "vps/error.hpp"
#include "vps/locserver/content_store.hpp"
#include "vps/locserver/localize.hpp"
#include "vps/locserver/protocol.hpp"
#include "vps/locserver/server.hpp"

using namespace vps;
using vps::testing::SelfQuery;
using vps::testing::ZeroNoiseMap;
using vps::testing::Bytes;
using vps::testing::sample_pose;
using vps::testing::sample_record;
using vps::testing::record_bytes;

namespace {

void expect_same_pose(const Pose& a, const Pose& b) {
  EXPECT_EQ(a.rotation().coeffs(), b.rotation().coeffs());
  EXPECT_EQ(a.translation(), b.translation());
}

void expect_same_response(const LocalizeResponse& a, const LocalizeResponse& b) {
  EXPECT_EQ(a.status, b.status);
  EXPECT_EQ(a.inliers, b.inliers);
  EXPECT_EQ(a.submap_id, b.submap_id);
  expect_same_pose(a.pose, b.pose);
}

}  // namespace

TEST(Protocol, GoldenLocalizeRequest) {
  LocalizeRequest r;
  r.device_id = "dev";
  r.timestamp = 1.25;
  r.gps = Vec3(10, -20, 0.5);
  r.gps_sigma = 5.0;
  r.camera.focal = 400;
  r.camera.principal_point = Vec2(320, 240);
  r.camera.image_size = Vec2(640, 480);
  Feature f;
  f.pixel = Vec2(100.5, 200.25);
  for (int i = 0; i < kDescriptorDim; ++i) f.descriptor[i] = 0.125 * i;
  r.features = {f, f};

  Bytes payload;
  payload.str("dev").f64(1.25).f64(10).f64(-20).f64(0.5).f64(5.0);
  payload.f64(400).f64(320).f64(240).f64(640).f64(480).u32(2);
  for (int k = 0; k < 2; ++k) {
    payload.f64(100.5).f64(200.25);
    for (int i = 0; i < kDescriptorDim; ++i) payload.f64(0.125 * i);
  }
  const std::string golden = Bytes().frame(0x01, payload).s;
  EXPECT_EQ(encode_frame(MessageType::localize_request, encode(r)), golden);

  const WireFrame frame = decode_frame(golden);
  EXPECT_EQ(frame.type, MessageType::localize_request);
  const LocalizeRequest back = decode_localize_request(frame.payload);
  EXPECT_EQ(back.device_id, "dev");
  EXPECT_EQ(back.gps, r.gps);
  EXPECT_EQ(back.camera.focal, 400);
  ASSERT_EQ(back.features.size(), 2u);
  EXPECT_EQ(back.features[1].descriptor, f.descriptor);
  EXPECT_EQ(encode(back), payload.s);
}

TEST(Protocol, GoldenLocalizeResponse) {
  LocalizeResponse r;
  r.status = LocalizeStatus::success;
  r.pose = sample_pose();
  r.inliers = 37;
  r.submap_id = 1002;
  r.server_ms = 6.5;
  Bytes payload;
  payload.u8(0).pose(sample_pose()).u32(37).i64(1002).f64(6.5);
  const std::string golden = Bytes().frame(0x02, payload).s;
  EXPECT_EQ(encode_frame(MessageType::localize_response, encode(r)), golden);
  const LocalizeResponse back = decode_localize_response(decode_frame(golden).payload);
  expect_same_response(back, r);
  EXPECT_EQ(back.server_ms, 6.5);

  LocalizeResponse none;
  Bytes p2;
  p2.u8(1).pose(Pose()).u32(0).i64(-1).f64(0.0);
  EXPECT_EQ(encode(none), p2.s);
}

TEST(Protocol, GoldenContentMessages) {
  const ContentRecord r = sample_record();
  const Bytes rb = record_bytes(r);
  EXPECT_EQ(encode_frame(MessageType::content_put, encode(r)), Bytes().frame(0x10, rb).s);
  const ContentRecord back = decode_content_record(rb.s);
  EXPECT_EQ(back.id, 42);
  EXPECT_EQ(back.payload, r.payload);
  EXPECT_EQ(back.creator, "alice");
  expect_same_pose(back.pose, r.pose);

  ContentGet g{Vec3(1, 2, 3), 10.0};
  Bytes gb;
  gb.f64(1).f64(2).f64(3).f64(10.0);
  EXPECT_EQ(encode_frame(MessageType::content_get, encode(g)), Bytes().frame(0x11, gb).s);
  EXPECT_EQ(decode_content_get(gb.s).radius, 10.0);

  Bytes list;
  list.u32(2);
  list.s += rb.s + rb.s;
  EXPECT_EQ(encode_frame(MessageType::content_records, encode(std::vector<ContentRecord>{r, r})),
            Bytes().frame(0x12, list).s);
  EXPECT_EQ(decode_content_records(list.s).size(), 2u);
  EXPECT_EQ(encode(std::vector<ContentRecord>{}), Bytes().u32(0).s);
}

TEST(Protocol, GoldenPoseMessages) {
  PoseAnnounce a{"bob", 3.5, sample_pose()};
  Bytes ab;
  ab.str("bob").f64(3.5).pose(sample_pose());
  EXPECT_EQ(encode_frame(MessageType::pose_announce, encode(a)), Bytes().frame(0x20, ab).s);
  EXPECT_EQ(encode_frame(MessageType::pose_event, encode(a)), Bytes().frame(0x22, ab).s);
  EXPECT_EQ(decode_pose_announce(ab.s).device_id, "bob");

  PoseSubscribe s{"carol", Vec3(4, 5, 6), 25.0};
  Bytes sb;
  sb.str("carol").f64(4).f64(5).f64(6).f64(25.0);
  EXPECT_EQ(encode_frame(MessageType::pose_subscribe, encode(s)), Bytes().frame(0x21, sb).s);
  EXPECT_EQ(decode_pose_subscribe(sb.s).center, Vec3(4, 5, 6));

  Bytes eb;
  eb.str("bad magic");
  EXPECT_EQ(encode_frame(MessageType::protocol_error, encode_error("bad magic")), Bytes().frame(0x7F, eb).s);
  EXPECT_EQ(decode_error(eb.s), "bad magic");
}

TEST(Protocol, EveryMessageTypeHasAGoldenVector) {
  const auto cases = vps::testing::golden_cases();
  EXPECT_EQ(cases.size(), 9u);
  for (const auto& c : cases) {
    EXPECT_EQ(c.encoded, c.golden) << c.name;
    EXPECT_EQ(c.reencoded_payload, c.golden_payload) << c.name;
  }
}

TEST(Protocol, MalformedInputIsRejected) {
  EXPECT_THROW(decode_header("XPS1\x01\x00\x00\x00\x00"), ProtocolError);
  EXPECT_THROW(decode_header(std::string("VPS1\x05\x00\x00\x00\x00", 9)), ProtocolError);
  EXPECT_THROW(decode_header(std::string("VPS1\x01\xff\xff\xff\xff", 9)), ProtocolError);

  const std::string resp = encode(LocalizeResponse{});
  EXPECT_THROW(decode_localize_response(resp.substr(0, resp.size() - 1)), ProtocolError);
  EXPECT_THROW(decode_localize_response(resp + "x"), ProtocolError);

  LocalizeRequest r;
  r.device_id = "d";
  std::string bytes = encode(r);
  EXPECT_NO_THROW(decode_localize_request(bytes));
  Bytes bad;
  bad.str("d").f64(0).f64(0).f64(0).f64(0).f64(0.0);  // sigma 0
  bad.f64(500).f64(320).f64(240).f64(640).f64(480).u32(0);
  EXPECT_THROW(decode_localize_request(bad.s), ProtocolError);
  Bytes nan;
  nan.str("d").f64(std::nan("")).f64(0).f64(0).f64(0).f64(1.0);
  nan.f64(500).f64(320).f64(240).f64(640).f64(480).u32(0);
  EXPECT_THROW(decode_localize_request(nan.s), ProtocolError);
  EXPECT_THROW(decode_content_get(Bytes().f64(0).f64(0).f64(0).f64(-1).s), ProtocolError);
}

class Localize : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { fixture_ = new ZeroNoiseMap(); }
  static void TearDownTestSuite() {
    delete fixture_;
    fixture_ = nullptr;
  }
  static ZeroNoiseMap* fixture_;
};
ZeroNoiseMap* Localize::fixture_ = nullptr;

TEST_F(Localize, SelfQueriesAreFixedPoints) {
  const auto queries = vps::testing::self_queries(fixture_->map, fixture_->store);
  ASSERT_GT(queries.size(), 50u);
  for (const SelfQuery& q : queries) {
    const LocalizeResponse r = localize_image(*fixture_->handle, q.request);
    ASSERT_EQ(r.status, LocalizeStatus::success) << q.frame_id;
    EXPECT_LT((r.pose.translation() - q.fused_pose.translation()).norm(), 1e-3) << q.frame_id;
    EXPECT_LT(rotation_angle(r.pose.rotation(), q.fused_pose.rotation()), 1e-5) << q.frame_id;
    EXPECT_EQ(r.inliers, q.request.features.size()) << q.frame_id;
    EXPECT_GE(r.inliers, LocalizeParams{}.min_inliers);
  }
}

TEST_F(Localize, FarGpsHasNoSubmap) {
  auto q = vps::testing::self_queries(fixture_->map, fixture_->store).front();
  q.request.gps += Vec3(500, 0, 500);
  const LocalizeResponse r = localize_image(*fixture_->handle, q.request);
  EXPECT_EQ(r.status, LocalizeStatus::no_submap);
  EXPECT_EQ(r.inliers, 0u);
  EXPECT_EQ(r.submap_id, -1);
}

TEST_F(Localize, NightQueryAgainstDayMapFails) {
  const Experience night = simulate_experience(fixture_->world, make_route(fixture_->world, {0}),
                                               CaptureConfig::vehicle(2, 1.0, 9), NoiseConfig::none());
  int tried = 0;
  for (const Frame& f : night.frames) {
    LocalizeRequest r;
    r.device_id = "night";
    r.gps = f.gps.position;
    r.gps_sigma = 1.0;
    r.camera = night.camera;
    for (const auto& o : f.observations) r.features.push_back({o.pixel, o.descriptor});
    if (r.features.size() < 20) continue;
    ++tried;
    const LocalizeResponse resp = localize_image(*fixture_->handle, r);
    EXPECT_EQ(resp.status, LocalizeStatus::insufficient_inliers) << f.id;
    EXPECT_LT(resp.inliers, LocalizeParams{}.min_inliers);
  }
  EXPECT_GT(tried, 20);
}

TEST_F(Localize, ToleratesFortyPercentOutliers) {
  const auto queries = vps::testing::self_queries(fixture_->map, fixture_->store);
  std::vector<Descriptor> pool;
  for (const auto& [id, s] : fixture_->map.submaps) {
    for (const auto& l : s->landmarks) pool.push_back(l.descriptor);
  }
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<size_t> pick_query(0, queries.size() - 1);
  std::uniform_int_distribution<size_t> pick_descriptor(0, pool.size() - 1);
  std::uniform_real_distribution<double> u(0.0, 640.0), v(0.0, 480.0);
  int success = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    SelfQuery q = queries[pick_query(rng)];
    const size_t n = q.request.features.size();
    // Outliers match real landmarks but sit at random pixels.
    const size_t outliers = n * 2 / 3;
    for (size_t k = 0; k < outliers; ++k) q.request.features.push_back({Vec2(u(rng), v(rng)), pool[pick_descriptor(rng)]});
    std::shuffle(q.request.features.begin(), q.request.features.end(), rng);
    ASSERT_LE(static_cast<double>(outliers) / q.request.features.size(), 0.4);
    LocalizeParams params;
    params.seed = static_cast<uint64_t>(t);
    const LocalizeResponse r = localize_image(*fixture_->handle, q.request, params);
    if (r.status != LocalizeStatus::success) continue;
    EXPECT_LT((r.pose.translation() - q.fused_pose.translation()).norm(), 0.05);
    ++success;
  }
  EXPECT_GE(success, 95);
}

TEST_F(Localize, AnswerIsTheCandidateWithMostInliers) {
  const auto queries = vps::testing::self_queries(fixture_->map, fixture_->store);
  int multi = 0;
  for (size_t i = 0; i < queries.size(); i += 5) {
    LocalizeDebug debug;
    const LocalizeResponse r = localize_image(*fixture_->handle, queries[i].request, {}, &debug);
    ASSERT_FALSE(debug.candidates.empty());
    if (debug.candidates.size() > 1) ++multi;
    const auto best = std::max_element(debug.candidates.begin(), debug.candidates.end(),
                                       [](const auto& a, const auto& b) { return a.inliers < b.inliers; });
    EXPECT_EQ(r.submap_id, best->submap_id);
    EXPECT_EQ(r.inliers, best->inliers);
    for (const auto& c : debug.candidates) EXPECT_LE(c.inliers, r.inliers);
  }
  EXPECT_GT(multi, 0);
}

TEST_F(Localize, MinInliersIsAKnob) {
  const auto q = vps::testing::self_queries(fixture_->map, fixture_->store).front();
  LocalizeParams strict;
  strict.min_inliers = static_cast<uint32_t>(q.request.features.size()) + 1;
  const LocalizeResponse r = localize_image(*fixture_->handle, q.request, strict);
  EXPECT_EQ(r.status, LocalizeStatus::insufficient_inliers);
  EXPECT_EQ(r.inliers, q.request.features.size());
  EXPECT_EQ(r.submap_id, q.submap_id);
}

TEST(ContentStore, PutGetAndSnapshot) {
  ContentStore store;
  ContentRecord r = sample_record();
  const ContentRecord a = store.put(r);
  r.pose = Pose(Quat::Identity(), Vec3(1000, 0, 0));
  const ContentRecord b = store.put(r);
  EXPECT_EQ(a.id, 1);
  EXPECT_EQ(b.id, 2);
  EXPECT_EQ(store.get(sample_pose().translation(), 10.0).size(), 1u);
  EXPECT_EQ(store.get(Vec3(500, 0, 0), 600.0).size(), 2u);
  EXPECT_THROW(store.get(int64_t{7}), UnknownContent);

  const auto path = std::filesystem::temp_directory_path() / "vps_content_snapshot.jsonl";
  store.save(path);
  ContentStore loaded;
  loaded.load(path);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded.get(int64_t{1}).payload, a.payload);
  expect_same_pose(loaded.get(int64_t{2}).pose, b.pose);
  EXPECT_EQ(loaded.put(sample_record()).id, 3);
  std::filesystem::remove(path);
}

class Service : public Localize {
 protected:
  void SetUp() override {
    server_ = std::make_unique<Server>(fixture_->handle, ServerOptions{});
    server_->start();
    endpoint_.port = server_->port();
  }
  void TearDown() override { server_->stop(); }

  std::unique_ptr<Server> server_;
  Endpoint endpoint_;
};

TEST_F(Service, LoopbackEqualsInProcess) {
  Client client(endpoint_);
  const auto queries = vps::testing::self_queries(fixture_->map, fixture_->store);
  for (size_t i = 0; i < queries.size(); i += 7) {
    const LocalizeResponse remote = client.localize(queries[i].request);
    const LocalizeResponse local = localize_image(*fixture_->handle, queries[i].request);
    expect_same_response(remote, local);
  }
  LocalizeRequest far = queries.front().request;
  far.gps.x() += 2000;
  expect_same_response(client.localize(far), localize_image(*fixture_->handle, far));
  EXPECT_FALSE(server_->processing_ms().empty());
}

TEST_F(Service, ConcurrentRequestsMatchSerial) {
  const auto queries = vps::testing::self_queries(fixture_->map, fixture_->store);
  const size_t n = 16;
  std::vector<LocalizeResponse> serial(n), parallel(n);
  for (size_t i = 0; i < n; ++i) serial[i] = localize_image(*fixture_->handle, queries[i * 3 % queries.size()].request);
  std::vector<std::thread> threads;
  std::vector<std::string> errors(n);
  for (size_t i = 0; i < n; ++i) {
    threads.emplace_back([&, i] {
      try {
        Client c(endpoint_);
        parallel[i] = c.localize(queries[i * 3 % queries.size()].request);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (size_t i = 0; i < n; ++i) {
    EXPECT_EQ(errors[i], "");
    expect_same_response(parallel[i], serial[i]);
  }
  EXPECT_EQ(server_->processing_ms().size(), n);
}

TEST_F(Service, BadMagicClosesWithProtocolError) {
  Client client(endpoint_);
  const WireFrame reply = client.exchange_raw(std::string("JUNK\x01\x00\x00\x00\x00", 9));
  EXPECT_EQ(reply.type, MessageType::protocol_error);
  EXPECT_NE(decode_error(reply.payload).find("magic"), std::string::npos);
  for (int i = 0; i < 100 && client.connected(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  EXPECT_FALSE(client.connected());
  EXPECT_THROW(client.get_content({Vec3::Zero(), 1.0}), ConnectionLost);

  // The server keeps serving other clients.
  Client other(endpoint_);
  EXPECT_TRUE(other.get_content({Vec3::Zero(), 1.0}).empty());
}

TEST_F(Service, MalformedPayloadIsAnswered) {
  Client client(endpoint_);
  EXPECT_THROW(client.get_content({Vec3::Zero(), -1.0}), ProtocolError);
}

TEST_F(Service, ContentIsShared) {
  Client a(endpoint_), b(endpoint_);
  ContentRecord ra = sample_record();
  ra.creator = "a";
  const ContentRecord stored = a.put_content(ra);
  EXPECT_GT(stored.id, 0);
  const auto near = a.get_content({ra.pose.translation(), 10.0});
  ASSERT_EQ(near.size(), 1u);
  EXPECT_EQ(near[0].payload, ra.payload);
  EXPECT_TRUE(a.get_content({ra.pose.translation() + Vec3(1000, 0, 0), 10.0}).empty());

  ContentRecord rb = sample_record();
  rb.creator = "b";
  rb.pose = Pose(Quat::Identity(), ra.pose.translation() + Vec3(3, 0, 0));
  b.put_content(rb);
  for (Client* c : {&a, &b}) {
    const auto both = c->get_content({ra.pose.translation(), 10.0});
    ASSERT_EQ(both.size(), 2u);
    EXPECT_EQ(both[0].creator, "a");
    EXPECT_EQ(both[1].creator, "b");
  }
  EXPECT_EQ(server_->content().size(), 2u);
}

namespace {

PoseAnnounce announce_at(const std::string& id, double t, double x) {
  return {id, t, Pose(Quat::Identity(), Vec3(x, 0, 0))};
}

}  // namespace

TEST_F(Service, PosesReachSubscribersInOrder) {
  Client a(endpoint_), b(endpoint_), far(endpoint_);
  b.subscribe({"b", Vec3::Zero(), 0.0});
  far.subscribe({"far", Vec3(5000, 0, 0), 50.0});
  for (int i = 0; i < 5; ++i) a.announce(announce_at("a", i, i));
  a.announce(announce_at("a", 2.0, 99));  // stale timestamp
  for (int i = 0; i < 5; ++i) {
    const auto e = b.next_event(2.0);
    ASSERT_TRUE(e.has_value());
    EXPECT_EQ(e->device_id, "a");
    EXPECT_EQ(e->timestamp, i);
    EXPECT_EQ(e->pose.translation().x(), i);
  }
  EXPECT_FALSE(b.next_event(0.2).has_value());
  EXPECT_FALSE(far.next_event(0.05).has_value());
  EXPECT_FALSE(a.next_event(0.05).has_value());
}

TEST_F(Service, ConcurrentAnnouncersSeeEachOther) {
  Client a(endpoint_), b(endpoint_);
  a.subscribe({"a", Vec3::Zero(), 0.0});
  b.subscribe({"b", Vec3::Zero(), 0.0});
  const int n = 20;
  std::thread ta([&] {
    for (int i = 0; i < n; ++i) a.announce(announce_at("a", i, 1.0));
  });
  std::thread tb([&] {
    for (int i = 0; i < n; ++i) b.announce(announce_at("b", i, 2.0));
  });
  ta.join();
  tb.join();
  for (auto [client, other] : {std::pair{&a, "b"}, std::pair{&b, "a"}}) {
    for (int i = 0; i < n; ++i) {
      const auto e = client->next_event(2.0);
      ASSERT_TRUE(e.has_value());
      EXPECT_EQ(e->device_id, other);
      EXPECT_EQ(e->timestamp, i);
    }
    EXPECT_FALSE(client->next_event(0.1).has_value());
  }
}

TEST_F(Service, RadiusFollowsTheSubscribersLatestPose) {
  Client a(endpoint_), b(endpoint_);
  b.subscribe({"b", Vec3(1000, 0, 0), 20.0});
  a.announce(announce_at("a", 0, 0));
  EXPECT_FALSE(b.next_event(0.2).has_value());
  b.announce(announce_at("b", 0, 10));
  a.announce(announce_at("a", 1, 5));
  const auto e = b.next_event(2.0);
  ASSERT_TRUE(e.has_value());
  EXPECT_EQ(e->timestamp, 1.0);
}

TEST(Server, BindFailure) {
  Server first(nullptr, ServerOptions{});
  first.start();
  ServerOptions clash;
  clash.listen.port = first.port();
  Server second(nullptr, clash);
  EXPECT_THROW(second.start(), BindFailure);
  EXPECT_THROW(Client(Endpoint{"127.0.0.1", 1}), ConnectionLost);
}

TEST(Server, ParseEndpoint) {
  EXPECT_EQ(parse_endpoint("localhost:8080").host, "localhost");
  EXPECT_EQ(parse_endpoint(":9000").port, 9000);
  EXPECT_EQ(parse_endpoint(":9000").host, "127.0.0.1");
  EXPECT_THROW(parse_endpoint("nohost"), BadConfig);
  EXPECT_THROW(parse_endpoint("h:99999"), BadConfig);
  EXPECT_THROW(parse_endpoint("h:abc"), BadConfig);
}

TEST(Server, ContentSnapshotOnStop) {
  const auto path = std::filesystem::temp_directory_path() / "vps_server_snapshot.jsonl";
  std::filesystem::remove(path);
  ServerOptions options;
  options.content_snapshot = path;
  {
    Server s(nullptr, options);
    s.start();
    Client c(Endpoint{"127.0.0.1", s.port()});
    c.put_content(sample_record());
    s.stop();
  }
  ASSERT_TRUE(std::filesystem::exists(path));
  Server restarted(nullptr, options);
  restarted.start();
  EXPECT_EQ(restarted.content().size(), 1u);
  restarted.stop();
  std::filesystem::remove(path);
}
