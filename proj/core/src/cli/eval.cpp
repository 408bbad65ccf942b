#include "vps/cli/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "common/json_util.hpp"
#include "vps/error.hpp"

namespace vps {

using detail::json;

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(values.begin(), values.begin() + mid));
}

namespace {

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

const Pose& truth_of(const Oracle& oracle, int64_t frame_id) {
  if (!oracle.contains(frame_id)) throw MissingOracle("no ground truth for frame " + std::to_string(frame_id));
  return oracle.pose(frame_id);
}

}  // namespace

RelativeError relative_error(std::span<const SessionTrace> traces, const Oracle& oracle, double distance) {
  std::vector<double> errors, fractions;
  for (const auto& trace : traces) {
    // True path length at every frame of the session.
    std::map<int64_t, double> travelled;
    double s = 0.0;
    for (size_t i = 0; i < trace.poses.size(); ++i) {
      if (i > 0) {
        s += (truth_of(oracle, trace.poses[i].frame_id).translation() -
              truth_of(oracle, trace.poses[i - 1].frame_id).translation()).norm();
      }
      travelled[trace.poses[i].frame_id] = s;
    }
    std::vector<const TraceResponse*> fixes;
    for (const auto& r : trace.responses) {
      if (r.status == LocalizeStatus::success && travelled.count(r.frame_id)) fixes.push_back(&r);
    }
    std::sort(fixes.begin(), fixes.end(),
              [&](const auto* a, const auto* b) { return travelled[a->frame_id] < travelled[b->frame_id]; });
    size_t j = 0;
    for (size_t i = 0; i < fixes.size(); ++i) {
      const double start = travelled[fixes[i]->frame_id];
      j = std::max(j, i + 1);
      while (j < fixes.size() && travelled[fixes[j]->frame_id] - start < distance) ++j;
      if (j >= fixes.size()) break;
      const Vec3 measured = fixes[j]->pose.translation() - fixes[i]->pose.translation();
      const Vec3 truth = truth_of(oracle, fixes[j]->frame_id).translation() -
                         truth_of(oracle, fixes[i]->frame_id).translation();
      const double e = (measured - truth).norm();
      errors.push_back(e);
      fractions.push_back(e / (travelled[fixes[j]->frame_id] - start));
    }
  }
  RelativeError out;
  out.pairs = errors.size();
  out.mean = mean(errors);
  out.median = median(errors);
  out.mean_fraction = mean(fractions);
  out.median_fraction = median(fractions);
  return out;
}

EvalReport evaluate(std::span<const SessionTrace> traces, const Oracle& oracle, double distance) {
  EvalReport r;
  std::vector<double> consistency, pose_errors, loc_errors, server_ms;
  for (const auto& trace : traces) {
    std::map<int64_t, const TracePose*> by_frame;
    for (const auto& p : trace.poses) {
      by_frame[p.frame_id] = &p;
      if (p.global) pose_errors.push_back((p.global->translation() - truth_of(oracle, p.frame_id).translation()).norm());
    }
    r.requests += trace.requests.size();
    for (const auto& q : trace.requests) r.delivered += q.dropped ? 0 : 1;
    for (const auto& resp : trace.responses) {
      server_ms.push_back(resp.server_ms);
      if (resp.status != LocalizeStatus::success) continue;
      ++r.successes;
      if (resp.sync == "accepted" || resp.sync == "pending") ++r.coherent;
      loc_errors.push_back((resp.pose.translation() - truth_of(oracle, resp.frame_id).translation()).norm());
      auto it = by_frame.find(resp.frame_id);
      if (it != by_frame.end() && it->second->global) {
        consistency.push_back((resp.pose.translation() - it->second->global->translation()).norm());
      }
    }
  }
  if (r.delivered > 0) {
    r.localisation_rate = static_cast<double>(r.successes) / r.delivered;
    r.coherent_rate = static_cast<double>(r.coherent) / r.delivered;
  }
  if (r.requests > 0) r.fix_rate = static_cast<double>(r.successes) / r.requests;
  r.consistency = median(consistency);
  r.relative = relative_error(traces, oracle, distance);
  r.pose_error_median = median(pose_errors);
  r.pose_error_mean = mean(pose_errors);
  r.pose_error_max = pose_errors.empty() ? 0.0 : *std::max_element(pose_errors.begin(), pose_errors.end());
  r.localisation_error_median = median(loc_errors);
  r.server_ms_median = median(server_ms);
  return r;
}

YieldResult map_yield(const World& world, std::span<const Experience> experiences, const BuildReport& report,
                      double bin) {
  if (!(bin > 0.0)) throw BadConfig("yield bin must be positive");
  // A bin was attempted when a frame's GPS fix lies within half a street
  // width of its centre.
  std::vector<Vec2> fixes;
  for (const auto& e : experiences) {
    for (const auto& f : e.frames) fixes.push_back(f.gps.position.head<2>());
  }
  YieldResult out;
  for (const auto& street : world.streets) {
    const double reach = 0.5 * street.width;
    for (size_t k = 0; k + 1 < street.points.size(); ++k) {
      const Vec2 a = street.points[k], b = street.points[k + 1];
      const double len = (b - a).norm();
      const int bins = std::max(1, static_cast<int>(std::round(len / bin)));
      for (int i = 0; i < bins; ++i) {
        const Vec2 c = a + (b - a) * ((i + 0.5) / bins);
        const bool attempted = std::any_of(fixes.begin(), fixes.end(), [&](const Vec2& p) { return (p - c).norm() <= reach; });
        if (!attempted) continue;
        ++out.attempted_bins;
        const bool covered = std::any_of(report.submaps.begin(), report.submaps.end(), [&](const SubmapOutcome& s) {
          return s.status == "built" && (s.center - c).norm() <= s.radius;
        });
        if (covered) ++out.covered_bins;
      }
    }
  }
  return out;
}

std::vector<std::pair<std::string, double>> report_fields(const EvalReport& r, bool include_timings) {
  std::vector<std::pair<std::string, double>> f = {
      {"requests", static_cast<double>(r.requests)},
      {"delivered", static_cast<double>(r.delivered)},
      {"successes", static_cast<double>(r.successes)},
      {"coherent", static_cast<double>(r.coherent)},
      {"localisation_rate", r.localisation_rate},
      {"coherent_rate", r.coherent_rate},
      {"fix_rate", r.fix_rate},
      {"consistency_m", r.consistency},
      {"relative_pairs", static_cast<double>(r.relative.pairs)},
      {"relative_error_mean_m", r.relative.mean},
      {"relative_error_median_m", r.relative.median},
      {"relative_error_mean_fraction", r.relative.mean_fraction},
      {"relative_error_median_fraction", r.relative.median_fraction},
      {"pose_error_median_m", r.pose_error_median},
      {"pose_error_mean_m", r.pose_error_mean},
      {"pose_error_max_m", r.pose_error_max},
      {"localisation_error_median_m", r.localisation_error_median},
      {"map_yield", r.map_yield},
  };
  if (include_timings) {
    const StageTimings& t = r.build_seconds;
    for (auto [k, v] : {std::pair{"build_split_s", t.split}, {"build_augment_s", t.augment}, {"build_tracks_s", t.tracks},
                        {"build_submaps_s", t.submaps}, {"build_verify_s", t.verify}, {"build_fuse_s", t.fuse},
                        {"server_ms_median", r.server_ms_median}}) {
      f.emplace_back(k, v);
    }
  }
  return f;
}

void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
  json j = json::object();
  for (const auto& [k, v] : report_fields(report)) j[k] = v;
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoFailure("failed writing " + path.string());
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "metric,value\n" << std::setprecision(17);
  for (const auto& [k, v] : report_fields(report)) out << k << ',' << v << '\n';
  if (!out) throw IoFailure("failed writing " + path.string());
}

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr double kWidth = 640, kHeight = 420, kMargin = 50;

std::ostringstream svg_begin(const std::string& title) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << escape(title)
    << "</text>\n";
  return s;
}

}  // namespace

std::string svg_histogram(const std::vector<double>& values, int bins, const std::string& title,
                          const std::string& x_label) {
  if (bins <= 0) throw BadConfig("histogram needs at least one bin");
  auto s = svg_begin(title);
  const double lo = 0.0;
  double hi = values.empty() ? 1.0 : *std::max_element(values.begin(), values.end());
  if (!(hi > lo)) hi = lo + 1.0;
  std::vector<int> counts(bins, 0);
  for (double v : values) {
    const int b = std::clamp(static_cast<int>((v - lo) / (hi - lo) * bins), 0, bins - 1);
    ++counts[b];
  }
  const int top = std::max(1, *std::max_element(counts.begin(), counts.end()));
  const double w = (kWidth - 2 * kMargin) / bins, h = kHeight - 2 * kMargin;
  for (int b = 0; b < bins; ++b) {
    const double bh = h * counts[b] / top;
    s << "<rect x=\"" << kMargin + b * w << "\" y=\"" << kHeight - kMargin - bh << "\" width=\"" << w * 0.9
      << "\" height=\"" << bh << "\" fill=\"steelblue\"/>\n";
  }
  s << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\"" << kWidth - kMargin << "\" y2=\""
    << kHeight - kMargin << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << kMargin << "\" y=\"" << kHeight - kMargin + 16 << "\" font-size=\"12\">" << lo << "</text>\n";
  s << "<text x=\"" << kWidth - kMargin << "\" y=\"" << kHeight - kMargin + 16
    << "\" text-anchor=\"end\" font-size=\"12\">" << hi << "</text>\n";
  s << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << escape(x_label) << "</text>\n";
  s << "<text x=\"" << kMargin - 6 << "\" y=\"" << kMargin << "\" text-anchor=\"end\" font-size=\"12\">" << top
    << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string svg_tracks(const std::vector<std::pair<std::string, std::vector<Vec2>>>& tracks, const std::string& title) {
  auto s = svg_begin(title);
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (const auto& [name, pts] : tracks) {
    for (const auto& p : pts) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  if (!(hi.x() >= lo.x())) lo = hi = Vec2::Zero();
  const double span = std::max({hi.x() - lo.x(), hi.y() - lo.y(), 1.0});
  const double scale = std::min(kWidth, kHeight - 20) * 0.8 / span;
  static const char* colours[] = {"crimson", "steelblue", "darkgreen", "darkorange", "purple"};
  int k = 0;
  for (const auto& [name, pts] : tracks) {
    const char* colour = colours[k % 5];
    s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : pts) {
      // y grows downwards in SVG.
      s << kMargin + (p.x() - lo.x()) * scale << ',' << kHeight - kMargin - (p.y() - lo.y()) * scale << ' ';
    }
    s << "\"/>\n";
    s << "<text x=\"" << kWidth - kMargin << "\" y=\"" << 44 + 16 * k << "\" text-anchor=\"end\" font-size=\"12\" fill=\""
      << colour << "\">" << escape(name) << "</text>\n";
    ++k;
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace vps

namespace vps {

void write_build_report(const BuildReport& report, const std::filesystem::path& path) {
  json subs = json::array();
  for (const auto& s : report.submaps) {
    subs.push_back({{"id", s.id},
                    {"experience_id", s.experience_id},
                    {"status", s.status},
                    {"reason", s.reason},
                    {"frames", s.frames},
                    {"landmarks", s.landmarks},
                    {"reprojection_rmse", s.reprojection_rmse},
                    {"center", detail::to_json_array(s.center)},
                    {"radius", s.radius}});
  }
  const StageTimings& t = report.seconds;
  const json j{{"attempted", report.attempted()},
               {"usable", report.usable()},
               {"success_rate", report.success_rate()},
               {"seconds",
                {{"split", t.split}, {"augment", t.augment}, {"tracks", t.tracks}, {"submaps", t.submaps},
                 {"verify", t.verify}, {"fuse", t.fuse}}},
               {"submaps", subs}};
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoFailure("failed writing " + path.string());
}

BuildReport read_build_report(const std::filesystem::path& path) {
  const json j = detail::read_json_file(path);
  BuildReport r;
  try {
    const json& t = j.at("seconds");
    r.seconds = {t.at("split").get<double>(),   t.at("augment").get<double>(), t.at("tracks").get<double>(),
                 t.at("submaps").get<double>(), t.at("verify").get<double>(),  t.at("fuse").get<double>()};
    for (const auto& s : j.at("submaps")) {
      SubmapOutcome o;
      o.id = s.at("id").get<int64_t>();
      o.experience_id = s.at("experience_id").get<int>();
      o.status = s.at("status").get<std::string>();
      o.reason = s.at("reason").get<std::string>();
      o.frames = s.at("frames").get<size_t>();
      o.landmarks = s.at("landmarks").get<size_t>();
      o.reprojection_rmse = s.at("reprojection_rmse").get<double>();
      o.center = detail::vec_from_json<2>(s.at("center"));
      o.radius = s.at("radius").get<double>();
      r.submaps.push_back(o);
    }
  } catch (const json::exception& e) {
    throw IoFailure(path.string() + ": " + e.what());
  }
  return r;
}

}  // namespace vps
