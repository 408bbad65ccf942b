#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "vps/error.hpp"
#include "vps/geometry/pose.hpp"

namespace vps::detail {

using json = nlohmann::json;

template <typename Derived>
json to_json_array(const Eigen::MatrixBase<Derived>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

template <int N>
Eigen::Matrix<double, N, 1> vec_from_json(const json& a) {
  if (!a.is_array() || a.size() != N) throw IoFailure("expected array of " + std::to_string(N));
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v(i) = a[static_cast<size_t>(i)].get<double>();
  return v;
}

inline json pose_to_json(const Pose& p) {
  const Quat& q = p.rotation();
  const Vec3& t = p.translation();
  return json::array({q.w(), q.x(), q.y(), q.z(), t.x(), t.y(), t.z()});
}

inline Pose pose_from_json(const json& a) {
  const Vec7 v = vec_from_json<7>(a);
  const Quat q(v(0), v(1), v(2), v(3));
  // Unit quaternions are kept as written so that round trips are bit-exact.
  if (std::abs(q.squaredNorm() - 1.0) < 1e-12) return Pose::from_normalized(q, Vec3(v(4), v(5), v(6)));
  return Pose(q, Vec3(v(4), v(5), v(6)));
}

inline json quat_to_json(const Quat& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }

inline Quat quat_from_json(const json& a) {
  const auto v = vec_from_json<4>(a);
  return Quat(v(0), v(1), v(2), v(3)).normalized();
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoFailure("cannot write " + path.string());
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot read " + path.string());
  return in;
}

inline json read_json_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoFailure(path.string() + ": " + e.what());
  }
}

// Calls fn(json) for each non-empty line.
template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  auto in = open_in(path);
  std::string line;
  size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      fn(j);
    } catch (const json::exception& e) {
      throw IoFailure(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

}  // namespace vps::detail
