#include "vps/locserver/content_store.hpp"

#include "common/json_util.hpp"
#include "vps/error.hpp"

namespace vps {

using detail::json;

ContentRecord ContentStore::put(ContentRecord record) {
  std::lock_guard<std::mutex> lock(mutex_);
  record.id = next_id_++;
  records_[record.id] = record;
  return record;
}

std::vector<ContentRecord> ContentStore::get(const Vec3& center, double radius) const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<ContentRecord> out;
  for (const auto& [id, r] : records_) {
    if ((r.pose.translation() - center).norm() <= radius) out.push_back(r);
  }
  return out;
}

ContentRecord ContentStore::get(int64_t id) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = records_.find(id);
  if (it == records_.end()) throw UnknownContent("unknown content " + std::to_string(id));
  return it->second;
}

size_t ContentStore::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return records_.size();
}

void ContentStore::save(const std::filesystem::path& path) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto out = detail::open_out(path);
  for (const auto& [id, r] : records_) {
    // Payloads are opaque bytes; store them as a byte array.
    std::vector<uint8_t> bytes(r.payload.begin(), r.payload.end());
    const json j = {{"id", r.id}, {"pose", detail::pose_to_json(r.pose)}, {"payload", bytes},
                    {"creator", r.creator}, {"timestamp", r.timestamp}};
    out << j.dump() << "\n";
  }
  if (!out) throw IoFailure("cannot write " + path.string());
}

void ContentStore::load(const std::filesystem::path& path) {
  std::map<int64_t, ContentRecord> loaded;
  int64_t next = 1;
  detail::for_each_json_line(path, [&](const json& j) {
    ContentRecord r;
    r.id = j.at("id").get<int64_t>();
    r.pose = detail::pose_from_json(j.at("pose"));
    const auto bytes = j.at("payload").get<std::vector<uint8_t>>();
    r.payload.assign(bytes.begin(), bytes.end());
    r.creator = j.at("creator").get<std::string>();
    r.timestamp = j.at("timestamp").get<double>();
    next = std::max(next, r.id + 1);
    loaded[r.id] = std::move(r);
  });
  std::lock_guard<std::mutex> lock(mutex_);
  records_ = std::move(loaded);
  next_id_ = next;
}

}  // namespace vps
