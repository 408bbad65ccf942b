#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vps/edgeclient/session.hpp"
#include "vps/fusion/fusion.hpp"
#include "vps/pipeline/pipeline.hpp"
#include "vps/worldsim/vio.hpp"
#include "vps/worldsim/world.hpp"

namespace vps {

struct RelativeError {
  size_t pairs = 0;
  double mean = 0.0;    // m
  double median = 0.0;  // m
  double mean_fraction = 0.0;    // of the distance travelled
  double median_fraction = 0.0;
};

struct EvalReport {
  size_t requests = 0;   // keyframes sent
  size_t delivered = 0;  // not dropped by the network
  size_t successes = 0;
  size_t coherent = 0;
  double localisation_rate = 0.0;  // successes / delivered
  double coherent_rate = 0.0;      // results the device kept / delivered
  double fix_rate = 0.0;           // successes / requests
  // Median distance between a server result and the device's own estimate
  // for that frame, over results that had one.
  double consistency = 0.0;
  RelativeError relative;
  // Tracked pose against the truth, over the frames that had a global pose.
  double pose_error_median = 0.0;
  double pose_error_mean = 0.0;
  double pose_error_max = 0.0;
  // Raw localisation results against the truth.
  double localisation_error_median = 0.0;
  double map_yield = 0.0;
  StageTimings build_seconds;
  double server_ms_median = 0.0;
};

double median(std::vector<double> values);

// Requires the oracle to know every frame of the traces (MissingOracle).
// Relative error compares the displacement between two successful raw
// results with the true displacement, pairing each result with the first
// later one after `distance` metres of true travel.
EvalReport evaluate(std::span<const SessionTrace> traces, const Oracle& oracle, double distance = 20.0);

RelativeError relative_error(std::span<const SessionTrace> traces, const Oracle& oracle, double distance);

// Fraction of the street length driven by `experiences` whose 10 m bins lie
// inside the coverage circle of at least one built submap.
struct YieldResult {
  size_t attempted_bins = 0;
  size_t covered_bins = 0;
  double fraction() const { return attempted_bins == 0 ? 0.0 : static_cast<double>(covered_bins) / attempted_bins; }
};
YieldResult map_yield(const World& world, std::span<const Experience> experiences, const BuildReport& report,
                      double bin = 10.0);

// Flat key/value view used for CSV output and equality checks; timing
// fields are listed last and flagged.
std::vector<std::pair<std::string, double>> report_fields(const EvalReport& report, bool include_timings = true);
void write_report_json(const EvalReport& report, const std::filesystem::path& path);
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);

// Minimal SVG charts.
std::string svg_histogram(const std::vector<double>& values, int bins, const std::string& title,
                          const std::string& x_label);
std::string svg_tracks(const std::vector<std::pair<std::string, std::vector<Vec2>>>& tracks, const std::string& title);

}  // namespace vps

namespace vps {

// Build report as JSON: success rate, stage seconds and per-submap outcomes.
void write_build_report(const BuildReport& report, const std::filesystem::path& path);
BuildReport read_build_report(const std::filesystem::path& path);

}  // namespace vps
