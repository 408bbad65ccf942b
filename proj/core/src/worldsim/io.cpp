#include "vps/worldsim/io.hpp"

#include <algorithm>

#include "common/json_util.hpp"

namespace vps {

using detail::json;
using detail::to_json_array;

namespace {

json camera_to_json(const Camera& c) {
  return json::array({c.focal, c.principal_point.x(), c.principal_point.y(), c.image_size.x(),
                      c.image_size.y()});
}

Camera camera_from_json(const json& a) {
  const auto v = detail::vec_from_json<5>(a);
  Camera c;
  c.focal = v(0);
  c.principal_point = Vec2(v(1), v(2));
  c.image_size = Vec2(v(3), v(4));
  return c;
}

json street_to_json(const Street& s) {
  json pts = json::array();
  for (const auto& p : s.points) pts.push_back(to_json_array(p));
  return {{"id", s.id}, {"width", s.width}, {"points", pts}};
}

Street street_from_json(const json& j) {
  Street s;
  s.id = j.at("id").get<int>();
  s.width = j.at("width").get<double>();
  for (const auto& p : j.at("points")) s.points.push_back(detail::vec_from_json<2>(p));
  return s;
}

}  // namespace

void write_experience(const Experience& e, const std::filesystem::path& log_path,
                      const std::filesystem::path& truth_path) {
  auto log = detail::open_out(log_path);
  for (const auto& f : e.frames) {
    json obs = json::array();
    for (const auto& o : f.observations) {
      obs.push_back({{"pixel", to_json_array(o.pixel)}, {"descriptor", to_json_array(o.descriptor)}});
    }
    json line = {{"frame_id", f.id},
                 {"experience_id", f.experience_id},
                 {"timestamp", f.timestamp},
                 {"condition", f.condition},
                 {"label", e.label},
                 {"platform", to_string(e.platform)},
                 {"camera", camera_to_json(e.camera)},
                 {"gps", json::array({f.gps.position.x(), f.gps.position.y(), f.gps.position.z(),
                                      f.gps.sigma})},
                 {"ins", {{"gravity", to_json_array(f.ins.gravity)},
                          {"rel_rot", detail::quat_to_json(f.ins.relative_rotation)}}},
                 {"observations", obs}};
    log << line.dump() << '\n';
  }
  if (!log) throw IoFailure("write failed: " + log_path.string());
  if (truth_path.empty()) return;
  auto truth = detail::open_out(truth_path);
  for (const auto& f : e.frames) {
    json line = {{"frame_id", f.id},
                 {"pose", detail::pose_to_json(f.truth.pose)},
                 {"landmark_ids", f.truth.landmark_ids}};
    truth << line.dump() << '\n';
  }
  if (!truth) throw IoFailure("write failed: " + truth_path.string());
}

Experience read_experience(const std::filesystem::path& log_path,
                           const std::filesystem::path& truth_path) {
  Experience e;
  bool first = true;
  detail::for_each_json_line(log_path, [&](const json& j) {
    Frame f;
    f.id = j.at("frame_id").get<int64_t>();
    f.experience_id = j.at("experience_id").get<int>();
    f.timestamp = j.at("timestamp").get<double>();
    f.condition = j.at("condition").get<double>();
    const auto gps = detail::vec_from_json<4>(j.at("gps"));
    f.gps.position = gps.head<3>();
    f.gps.sigma = gps(3);
    f.ins.gravity = detail::vec_from_json<3>(j.at("ins").at("gravity"));
    f.ins.relative_rotation = detail::quat_from_json(j.at("ins").at("rel_rot"));
    for (const auto& o : j.at("observations")) {
      Observation obs;
      obs.pixel = detail::vec_from_json<2>(o.at("pixel"));
      obs.descriptor = detail::vec_from_json<kDescriptorDim>(o.at("descriptor"));
      f.observations.push_back(obs);
    }
    if (first) {
      e.id = f.experience_id;
      e.condition = f.condition;
      e.label = j.value("label", std::string());
      e.platform = platform_from_string(j.value("platform", std::string("vehicle")));
      e.camera = camera_from_json(j.at("camera"));
      first = false;
    }
    e.frames.push_back(std::move(f));
  });
  if (truth_path.empty()) return e;

  std::unordered_map<int64_t, size_t> index;
  for (size_t i = 0; i < e.frames.size(); ++i) index[e.frames[i].id] = i;
  detail::for_each_json_line(truth_path, [&](const json& j) {
    const int64_t id = j.at("frame_id").get<int64_t>();
    auto it = index.find(id);
    if (it == index.end()) throw IoFailure("truth for unknown frame " + std::to_string(id));
    Frame& f = e.frames[it->second];
    f.truth.pose = detail::pose_from_json(j.at("pose"));
    f.truth.landmark_ids = j.at("landmark_ids").get<std::vector<int64_t>>();
  });
  return e;
}

void read_truth_into(Oracle& oracle, const std::filesystem::path& truth_path) {
  detail::for_each_json_line(truth_path, [&](const json& j) {
    oracle.add_pose(j.at("frame_id").get<int64_t>(), detail::pose_from_json(j.at("pose")));
  });
}

void write_vio(const VioLog& log, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  for (const auto& p : log.poses) {
    json line = {{"timestamp", p.timestamp},
                 {"pose", detail::pose_to_json(p.pose)},
                 {"drift_rate", log.drift_rate}};
    out << line.dump() << '\n';
  }
  if (!out) throw IoFailure("write failed: " + path.string());
}

VioLog read_vio(const std::filesystem::path& path) {
  VioLog log;
  detail::for_each_json_line(path, [&](const json& j) {
    log.poses.push_back({j.at("timestamp").get<double>(), detail::pose_from_json(j.at("pose"))});
    log.drift_rate = j.value("drift_rate", 0.0);
  });
  return log;
}

void write_world(const World& w, const std::filesystem::path& path) {
  json streets = json::array();
  for (const auto& s : w.streets) streets.push_back(street_to_json(s));
  json config_streets = json::array();
  for (const auto& s : w.config.streets) config_streets.push_back(street_to_json(s));
  json blocks = json::array();
  for (const auto& b : w.blocks) blocks.push_back({to_json_array(b.min), to_json_array(b.max)});
  json landmarks = json::array();
  for (const auto& l : w.landmarks) {
    landmarks.push_back({{"id", l.id},
                         {"position", to_json_array(l.position)},
                         {"descriptor", to_json_array(l.descriptor)}});
  }
  const auto& c = w.config;
  json j = {{"config",
             {{"width", c.width},
              {"height", c.height},
              {"street_spacing", c.street_spacing},
              {"landmarks_per_100m", c.landmarks_per_100m},
              {"facade_offset", c.facade_offset},
              {"min_landmark_height", c.min_landmark_height},
              {"max_landmark_height", c.max_landmark_height},
              {"seed", c.seed},
              {"streets", config_streets}}},
            {"seed", w.seed},
            {"streets", streets},
            {"blocks", blocks},
            {"landmarks", landmarks}};
  auto out = detail::open_out(path);
  out << j.dump() << '\n';
  if (!out) throw IoFailure("write failed: " + path.string());
}

World read_world(const std::filesystem::path& path) {
  const json j = detail::read_json_file(path);
  World w;
  try {
    const auto& c = j.at("config");
    w.config.width = c.at("width").get<double>();
    w.config.height = c.at("height").get<double>();
    w.config.street_spacing = c.at("street_spacing").get<double>();
    w.config.landmarks_per_100m = c.at("landmarks_per_100m").get<double>();
    w.config.facade_offset = c.at("facade_offset").get<double>();
    w.config.min_landmark_height = c.at("min_landmark_height").get<double>();
    w.config.max_landmark_height = c.at("max_landmark_height").get<double>();
    w.config.seed = c.at("seed").get<uint64_t>();
    for (const auto& s : c.at("streets")) w.config.streets.push_back(street_from_json(s));
    w.seed = j.at("seed").get<uint64_t>();
    for (const auto& s : j.at("streets")) w.streets.push_back(street_from_json(s));
    for (const auto& b : j.at("blocks")) {
      w.blocks.push_back({detail::vec_from_json<2>(b.at(0)), detail::vec_from_json<2>(b.at(1))});
    }
    for (const auto& l : j.at("landmarks")) {
      w.landmarks.push_back({l.at("id").get<int64_t>(), detail::vec_from_json<3>(l.at("position")),
                             detail::vec_from_json<kDescriptorDim>(l.at("descriptor"))});
    }
  } catch (const json::exception& e) {
    throw IoFailure(path.string() + ": " + e.what());
  }
  return w;
}

std::vector<std::filesystem::path> list_experience_logs(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoFailure("not a directory: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("exp_", 0) != 0) continue;
    if (name.size() < 6 || name.substr(name.size() - 6) != ".jsonl") continue;
    if (name.find(".truth.") != std::string::npos) continue;
    out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::filesystem::path truth_path_for(const std::filesystem::path& log_path) {
  std::filesystem::path p = log_path;
  p.replace_extension(".truth.jsonl");
  return p;
}

}  // namespace vps
