#include "vps/mapbuild/frame_store.hpp"

#include "vps/error.hpp"

namespace vps {

void FrameStore::add(std::span<const Experience> experiences) {
  for (const auto& e : experiences) add(e);
}

void FrameStore::add(const Experience& experience) {
  for (const auto& f : experience.frames) entries_[f.id] = {&f, &experience};
}

const FrameStore::Entry& FrameStore::entry(int64_t id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw UnknownFrame("unknown frame " + std::to_string(id));
  return it->second;
}

}  // namespace vps
