#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "vps/fusion/fusion.hpp"

namespace vps {

inline constexpr uint32_t kMapFormatVersion = 1;

// Map directory layout:
//   manifest.json          versions, options, per-submap transform, bounds,
//                          file name, size and checksum, tile index checksum
//   submaps/submap_<id>.bin
//   tiles.bin              "VPST", version, tile size, tiles with their ids
// Files are written deterministically; equal maps give equal bytes.
// Throws IoFailure when the directory cannot be written.
void save_map(const GlobalMap& map, const std::filesystem::path& dir);

struct SubmapEntry {
  int64_t id = 0;
  int experience_id = 0;
  Sim3 transform;
  Circle bounds;
  std::string file;  // relative to the map directory
  uint64_t bytes = 0;
  uint64_t checksum = 0;
};

// Read access to a stored or in-memory map. Submap payloads are loaded on
// first use; concurrent readers are safe and never load a submap twice.
class MapHandle {
 public:
  // Reads the manifest and tile index. Throws IoFailure when the manifest is
  // missing and CorruptMap on checksum or format errors.
  static std::shared_ptr<MapHandle> open(const std::filesystem::path& dir, bool preload = false);
  static std::shared_ptr<MapHandle> from_map(const GlobalMap& map);

  // Submap ids whose fused bounding circle meets the disc, ascending. Throws
  // BadConfig when radius is not positive.
  std::vector<int64_t> query_radius(const Vec2& center, double radius) const;

  // Throws UnknownSubmap, IoFailure or CorruptMap.
  SubmapPtr submap(int64_t id) const;
  const SubmapEntry& entry(int64_t id) const;
  const Sim3& transform(int64_t id) const { return entry(id).transform; }

  std::vector<int64_t> ids() const;
  size_t size() const { return entries_.size(); }
  size_t loaded() const;
  const FusionOptions& options() const { return options_; }
  const TileIndex& index() const { return index_; }
  const std::vector<int64_t>& rejected() const { return rejected_; }
  const std::filesystem::path& directory() const { return dir_; }

  // Loads every payload and rebuilds the in-memory map.
  GlobalMap to_global_map() const;

 private:
  MapHandle() = default;

  std::filesystem::path dir_;
  FusionOptions options_;
  std::map<int64_t, SubmapEntry> entries_;
  std::map<int64_t, Circle> circles_;
  TileIndex index_;
  std::vector<int64_t> rejected_;
  FusionReport report_;

  mutable std::mutex mutex_;
  mutable std::map<int64_t, SubmapPtr> cache_;
};

inline std::shared_ptr<MapHandle> load_map(const std::filesystem::path& dir) { return MapHandle::open(dir); }

}  // namespace vps
