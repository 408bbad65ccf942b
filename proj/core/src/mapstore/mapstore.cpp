#include "vps/mapstore/mapstore.hpp"

#include <cstdio>
#include <sstream>

#include "common/json_util.hpp"
#include "vps/binary.hpp"
#include "vps/error.hpp"
#include "vps/mapbuild/submap_io.hpp"

namespace vps {

namespace {

using detail::json;
namespace fs = std::filesystem;

constexpr char kTileMagic[] = "VPST";

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 16) throw CorruptMap("bad checksum field");
  return std::stoull(s, nullptr, 16);
}

std::string submap_file(int64_t id) { return "submaps/submap_" + std::to_string(id) + ".bin"; }

void write_bytes(const fs::path& path, const std::string& bytes) {
  auto out = detail::open_out(path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoFailure("cannot write " + path.string());
}

std::string read_bytes(const fs::path& path) {
  auto in = detail::open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string serialize_tiles(const TileIndex& index) {
  ByteWriter w;
  w.bytes(std::string_view(kTileMagic, 4));
  w.u32(kMapFormatVersion);
  w.f64(index.tile_size());
  w.u32(static_cast<uint32_t>(index.tiles().size()));
  for (const auto& [key, ids] : index.tiles()) {
    w.i64(key.first);
    w.i64(key.second);
    w.u32(static_cast<uint32_t>(ids.size()));
    for (int64_t id : ids) w.i64(id);
  }
  return w.take();
}

TileIndex deserialize_tiles(std::string_view bytes) {
  ByteReader<CorruptMap> r(bytes);
  if (r.bytes(4) != std::string_view(kTileMagic, 4)) throw CorruptMap("tile index: bad magic");
  if (r.u32() != kMapFormatVersion) throw CorruptMap("tile index: unsupported version");
  const double size = r.f64();
  if (!(size > 0.0)) throw CorruptMap("tile index: bad tile size");
  TileIndex index(size);
  const uint32_t n = r.u32();
  for (uint32_t i = 0; i < n; ++i) {
    const int64_t x = r.i64(), y = r.i64();
    const uint32_t count = r.u32();
    if (static_cast<uint64_t>(count) * 8 > r.remaining()) throw CorruptMap("tile index truncated");
    std::vector<int64_t> ids(count);
    for (auto& id : ids) id = r.i64();
    index.set_tile({x, y}, std::move(ids));
  }
  if (!r.done()) throw CorruptMap("tile index: trailing bytes");
  return index;
}

json sim3_to_json(const Sim3& s) { return detail::to_json_array(s.to_vector()); }

Sim3 sim3_from_json(const json& a) { return Sim3::from_vector(detail::vec_from_json<8>(a)); }

}  // namespace

void save_map(const GlobalMap& map, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "submaps", ec);
  if (ec) throw IoFailure("cannot create " + dir.string() + ": " + ec.message());

  json manifest;
  manifest["format_version"] = kMapFormatVersion;
  manifest["submap_format_version"] = kSubmapFormatVersion;
  manifest["fusion"] = {{"lambda", map.options.lambda},
                        {"rotation_weight", map.options.rotation_weight},
                        {"gravity_sigma_deg", map.options.gravity_sigma_deg},
                        {"tile_size", map.options.tile_size},
                        {"bounds_margin", map.options.bounds_margin}};
  json submaps = json::array();
  for (const auto& [id, s] : map.submaps) {
    const std::string bytes = serialize_submap(*s);
    const std::string file = submap_file(id);
    write_bytes(dir / file, bytes);
    const Circle& c = map.bounds.at(id);
    submaps.push_back({{"id", id},
                       {"experience_id", s->experience_id},
                       {"transform", sim3_to_json(map.transforms.at(id))},
                       {"bounds", json::array({c.center.x(), c.center.y(), c.radius})},
                       {"file", file},
                       {"bytes", bytes.size()},
                       {"checksum", hex64(fnv1a64(bytes))}});
  }
  manifest["submaps"] = submaps;
  manifest["rejected"] = map.rejected;
  const std::string tiles = serialize_tiles(map.index);
  write_bytes(dir / "tiles.bin", tiles);
  manifest["tiles"] = {{"file", "tiles.bin"}, {"bytes", tiles.size()}, {"checksum", hex64(fnv1a64(tiles))}};
  manifest["fusion_report"] = {{"initial_cost", map.report.initial_cost},
                               {"final_cost", map.report.final_cost},
                               {"components", map.report.components}};
  write_bytes(dir / "manifest.json", manifest.dump(1) + "\n");
}

std::shared_ptr<MapHandle> MapHandle::open(const fs::path& dir, bool preload) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw IoFailure("missing manifest " + manifest_path.string());
  json m;
  {
    auto in = detail::open_in(manifest_path);
    try {
      m = json::parse(in);
    } catch (const json::exception& e) {
      throw CorruptMap("manifest: " + std::string(e.what()));
    }
  }
  std::shared_ptr<MapHandle> h(new MapHandle());
  h->dir_ = dir;
  std::string tiles_file;
  uint64_t tiles_bytes = 0, tiles_checksum = 0;
  try {
    if (m.at("format_version").get<uint32_t>() != kMapFormatVersion ||
        m.at("submap_format_version").get<uint32_t>() != kSubmapFormatVersion) {
      throw CorruptMap("unsupported map format version");
    }
    const json& f = m.at("fusion");
    h->options_.lambda = f.at("lambda").get<double>();
    h->options_.rotation_weight = f.at("rotation_weight").get<double>();
    h->options_.gravity_sigma_deg = f.at("gravity_sigma_deg").get<double>();
    h->options_.tile_size = f.at("tile_size").get<double>();
    h->options_.bounds_margin = f.at("bounds_margin").get<double>();
    for (const json& s : m.at("submaps")) {
      SubmapEntry e;
      e.id = s.at("id").get<int64_t>();
      e.experience_id = s.at("experience_id").get<int>();
      e.transform = sim3_from_json(s.at("transform"));
      const auto b = detail::vec_from_json<3>(s.at("bounds"));
      e.bounds = Circle{Vec2(b(0), b(1)), b(2)};
      e.file = s.at("file").get<std::string>();
      e.bytes = s.at("bytes").get<uint64_t>();
      e.checksum = parse_hex64(s.at("checksum").get<std::string>());
      h->circles_[e.id] = e.bounds;
      h->entries_[e.id] = e;
    }
    h->rejected_ = m.at("rejected").get<std::vector<int64_t>>();
    const json& t = m.at("tiles");
    tiles_file = t.at("file").get<std::string>();
    tiles_bytes = t.at("bytes").get<uint64_t>();
    tiles_checksum = parse_hex64(t.at("checksum").get<std::string>());
    const json& r = m.at("fusion_report");
    h->report_.initial_cost = r.at("initial_cost").get<double>();
    h->report_.final_cost = r.at("final_cost").get<double>();
    h->report_.components = r.at("components").get<int>();
  } catch (const json::exception& e) {
    throw CorruptMap("manifest: " + std::string(e.what()));
  } catch (const IoFailure& e) {
    throw CorruptMap("manifest: " + std::string(e.what()));
  }
  const std::string tiles = read_bytes(dir / tiles_file);
  if (tiles.size() != tiles_bytes || fnv1a64(tiles) != tiles_checksum) throw CorruptMap("tile index checksum mismatch");
  h->index_ = deserialize_tiles(tiles);
  if (preload) {
    for (const auto& [id, e] : h->entries_) h->submap(id);
  }
  return h;
}

std::shared_ptr<MapHandle> MapHandle::from_map(const GlobalMap& map) {
  std::shared_ptr<MapHandle> h(new MapHandle());
  h->options_ = map.options;
  h->index_ = map.index;
  h->rejected_ = map.rejected;
  h->report_ = map.report;
  for (const auto& [id, s] : map.submaps) {
    SubmapEntry e;
    e.id = id;
    e.experience_id = s->experience_id;
    e.transform = map.transforms.at(id);
    e.bounds = map.bounds.at(id);
    h->entries_[id] = e;
    h->circles_[id] = e.bounds;
    h->cache_[id] = s;
  }
  return h;
}

std::vector<int64_t> MapHandle::query_radius(const Vec2& center, double radius) const {
  if (!(radius > 0.0)) throw BadConfig("query radius must be positive");
  return index_.query(Circle{center, radius}, circles_);
}

const SubmapEntry& MapHandle::entry(int64_t id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw UnknownSubmap("unknown submap " + std::to_string(id));
  return it->second;
}

SubmapPtr MapHandle::submap(int64_t id) const {
  const SubmapEntry& e = entry(id);
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = cache_.find(id);
  if (it != cache_.end()) return it->second;
  const std::string bytes = read_bytes(dir_ / e.file);
  if (bytes.size() != e.bytes || fnv1a64(bytes) != e.checksum) {
    throw CorruptMap("checksum mismatch for " + e.file);
  }
  auto s = std::make_shared<const Submap>(deserialize_submap(bytes));
  if (s->id != id) throw CorruptMap("submap id mismatch in " + e.file);
  cache_[id] = s;
  return s;
}

std::vector<int64_t> MapHandle::ids() const {
  std::vector<int64_t> out;
  for (const auto& [id, e] : entries_) out.push_back(id);
  return out;
}

size_t MapHandle::loaded() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return cache_.size();
}

GlobalMap MapHandle::to_global_map() const {
  GlobalMap map(options_);
  for (const auto& [id, e] : entries_) {
    map.submaps[id] = submap(id);
    map.transforms[id] = e.transform;
    map.bounds[id] = e.bounds;
  }
  map.index = index_;
  map.rejected = rejected_;
  map.report = report_;
  return map;
}

}  // namespace vps
