#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <vector>

#include "vps/locserver/messages.hpp"

namespace vps {

// Shared AR content keyed by server-assigned id. Thread-safe; a get that
// starts after a put returned sees the record.
class ContentStore {
 public:
  // Stores a copy with a fresh id and returns it.
  ContentRecord put(ContentRecord record);
  // Records whose position lies within `radius` of `center`, ascending id.
  std::vector<ContentRecord> get(const Vec3& center, double radius) const;
  // Throws UnknownContent.
  ContentRecord get(int64_t id) const;
  size_t size() const;

  // One JSON object per line; throws IoFailure.
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  mutable std::mutex mutex_;
  std::map<int64_t, ContentRecord> records_;
  int64_t next_id_ = 1;
};

}  // namespace vps
