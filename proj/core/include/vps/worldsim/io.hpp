#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vps/worldsim/experience.hpp"
#include "vps/worldsim/vio.hpp"
#include "vps/worldsim/world.hpp"

namespace vps {

// Experience logs are JSON Lines, one frame per line:
//   {"frame_id", "experience_id", "timestamp", "condition", "label",
//    "platform", "camera": [f, cx, cy, w, h], "gps": [x, y, z, sigma],
//    "ins": {"gravity": [..], "rel_rot": [w, x, y, z]},
//    "observations": [{"pixel": [u, v], "descriptor": [..]}]}
// Ground truth goes to a sidecar, one line per frame:
//   {"frame_id", "pose": [qw, qx, qy, qz, tx, ty, tz], "landmark_ids": [..]}
// All functions throw IoFailure on unreadable or malformed files.
void write_experience(const Experience& experience, const std::filesystem::path& log_path,
                      const std::filesystem::path& truth_path);
// Truth is attached when `truth_path` is non-empty.
Experience read_experience(const std::filesystem::path& log_path,
                           const std::filesystem::path& truth_path = {});
void read_truth_into(Oracle& oracle, const std::filesystem::path& truth_path);

// {"timestamp", "pose": [qw, qx, qy, qz, tx, ty, tz]} per line; the drift
// rate is carried on every line.
void write_vio(const VioLog& log, const std::filesystem::path& path);
VioLog read_vio(const std::filesystem::path& path);

void write_world(const World& world, const std::filesystem::path& path);
World read_world(const std::filesystem::path& path);

// Paths of the experience logs in a directory (files named exp_*.jsonl,
// sorted), with the sidecar next to each (exp_*.truth.jsonl).
std::vector<std::filesystem::path> list_experience_logs(const std::filesystem::path& dir);
std::filesystem::path truth_path_for(const std::filesystem::path& log_path);

}  // namespace vps
