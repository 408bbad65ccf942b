#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>

#include "vps/worldsim/experience.hpp"

namespace vps {

// Read-only lookup of frames by id across experiences. Does not own the
// experiences, which must outlive it.
class FrameStore {
 public:
  FrameStore() = default;
  explicit FrameStore(std::span<const Experience> experiences) { add(experiences); }

  void add(std::span<const Experience> experiences);
  void add(const Experience& experience);

  // Throw UnknownFrame.
  const Frame& frame(int64_t id) const { return *entry(id).frame; }
  const Experience& experience_of(int64_t id) const { return *entry(id).experience; }
  const Camera& camera(int64_t id) const { return entry(id).experience->camera; }

  bool contains(int64_t id) const { return entries_.count(id) != 0; }
  size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    const Frame* frame = nullptr;
    const Experience* experience = nullptr;
  };
  const Entry& entry(int64_t id) const;

  std::unordered_map<int64_t, Entry> entries_;
};

}  // namespace vps
