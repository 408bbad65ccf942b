#pragma once

#include <string>
#include <string_view>

#include "vps/mapbuild/submap.hpp"

namespace vps {

inline constexpr uint32_t kSubmapFormatVersion = 1;

// Binary submap: "VPSM", u32 version, header, then the frame (pose)
// section, the landmark section and the provenance (observations) inside
// each landmark. Sections are sorted by id, so equal submaps give equal bytes.
std::string serialize_submap(const Submap& submap);
// Throws CorruptMap on bad magic, unknown version or truncated data.
Submap deserialize_submap(std::string_view bytes);

}  // namespace vps
