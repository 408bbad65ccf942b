#include "acceptance.hpp"
#include "vps/cli/eval.hpp"
#include "vps/pipeline/pipeline.hpp"

namespace vps::acceptance {

namespace {

// Probability that a subset is corrupted by shuffled observations, chosen
// so that about one submap in ten fails.
constexpr double kCorruptionProbability = 0.10;
constexpr double kCorruptionFraction = 0.6;
constexpr int kStreets = 8;

struct YieldRun {
  YieldResult yield;
  BuildReport report;
};

YieldRun run(const World& world, int per_street) {
  std::vector<Experience> exps;
  for (int street = 0; street < kStreets; ++street) {
    for (int k = 0; k < per_street; ++k) {
      const int id = 1 + street * 4 + k;
      exps.push_back(simulate_experience(world, make_route(world, {street}, k % 2 == 1),
                                         CaptureConfig::vehicle(id, 0.1, 700 + id), NoiseConfig{}));
    }
  }
  PipelineOptions options;
  options.split.max_size = 20;
  options.build.corruption_probability = kCorruptionProbability;
  options.build.corruption_fraction = kCorruptionFraction;
  YieldRun r;
  build_submaps(exps, {}, options, &r.report);
  r.yield = map_yield(world, exps, r.report);
  return r;
}

}  // namespace

Outcome map_yield_trend() {
  Outcome out;
  const World world = generate_world(WorldConfig{});
  const YieldRun one = run(world, 1);
  const YieldRun four = run(world, 4);
  for (const auto* r : {&one, &four}) {
    out.note(std::string(r == &one ? "1" : "4") + " experience(s) per street: " +
             std::to_string(r->report.usable()) + "/" + std::to_string(r->report.attempted()) +
             " submaps built (failure rate " + fmt(1.0 - r->report.success_rate(), 3) + "), yield " +
             std::to_string(r->yield.covered_bins) + "/" + std::to_string(r->yield.attempted_bins) + " bins = " +
             fmt(r->yield.fraction(), 3));
  }
  out.check("yield with 4 experiences exceeds yield with 1", four.yield.fraction() > one.yield.fraction(),
            fmt(four.yield.fraction(), 3) + " > " + fmt(one.yield.fraction(), 3));
  return out;
}

}  // namespace vps::acceptance
