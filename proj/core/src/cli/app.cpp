#include "vps/cli/app.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "common/json_util.hpp"
#include "vps/cli/eval.hpp"
#include "vps/edgeclient/session.hpp"
#include "vps/error.hpp"
#include "vps/locserver/server.hpp"
#include "vps/mapstore/mapstore.hpp"
#include "vps/pipeline/pipeline.hpp"
#include "vps/random.hpp"
#include "vps/worldsim/io.hpp"

namespace vps {

namespace fs = std::filesystem;

namespace {

struct Global {
  uint64_t seed = 1;
  std::string out;
};

std::vector<Experience> read_experiences(const fs::path& dir, bool with_truth) {
  std::vector<Experience> out;
  for (const auto& log : list_experience_logs(dir)) {
    const fs::path truth = truth_path_for(log);
    out.push_back(read_experience(log, with_truth && fs::exists(truth) ? truth : fs::path{}));
  }
  if (out.empty()) throw IoFailure("no experience logs (exp_*.jsonl) in " + dir.string());
  return out;
}

fs::path vio_path_for(const fs::path& log) {
  std::string name = log.filename().string();
  if (name.rfind("exp_", 0) == 0) name.replace(0, 4, "vio_");
  return log.parent_path() / name;
}

void require_out(const Global& g) {
  if (g.out.empty()) throw BadConfig("--out is required");
}

// gen-world ------------------------------------------------------------------

struct GenWorldArgs {
  WorldConfig config;
};

int cmd_gen_world(const Global& g, const GenWorldArgs& a, std::ostream& out) {
  require_out(g);
  WorldConfig c = a.config;
  c.seed = g.seed;
  const World w = generate_world(c);
  write_world(w, g.out);
  out << "world: " << w.streets.size() << " streets, " << w.landmarks.size() << " landmarks -> " << g.out << "\n";
  return kExitOk;
}

// collect --------------------------------------------------------------------

struct CollectArgs {
  std::string world;
  std::vector<int> streets{0};
  int count = 1;
  int first_id = 1;
  double condition = 0.0;
  std::string label;
  std::string platform = "vehicle";
  bool reverse = false;
  bool exact = false;
  double canyon_bias = -1.0;
  double drift = 0.02;
};

int cmd_collect(const Global& g, const CollectArgs& a, std::ostream& out) {
  require_out(g);
  const World world = read_world(a.world);
  const Route route = make_route(world, a.streets, a.reverse);
  NoiseConfig noise = a.exact ? NoiseConfig::none() : NoiseConfig{};
  if (a.canyon_bias >= 0.0) noise.canyon_bias = a.canyon_bias;
  const Platform platform = platform_from_string(a.platform);
  fs::create_directories(g.out);
  for (int k = 0; k < a.count; ++k) {
    const int id = a.first_id + k;
    const uint64_t seed = derive_seed({g.seed, static_cast<uint64_t>(id)});
    CaptureConfig c = platform == Platform::vehicle ? CaptureConfig::vehicle(id, a.condition, seed)
                                                    : CaptureConfig::pedestrian(id, a.condition, seed);
    if (!a.label.empty()) c.label = a.label;
    const Experience e = simulate_experience(world, route, c, noise);
    const fs::path log = fs::path(g.out) / ("exp_" + std::to_string(id) + ".jsonl");
    write_experience(e, log, truth_path_for(log));
    write_vio(simulate_vio(true_trajectory(e), a.drift, derive_seed({g.seed, static_cast<uint64_t>(id), 0x71})),
              vio_path_for(log));
    out << "experience " << id << ": " << e.frames.size() << " frames -> " << log.string() << "\n";
  }
  return kExitOk;
}

// build-map / update-map -----------------------------------------------------

struct BuildArgs {
  std::string experiences;
  std::string map;  // update-map: existing map
  std::string report;
  std::vector<int> new_ids;
  int workers = 1;
  size_t max_subset = 40;
  double min_success = 0.0;
};

PipelineOptions pipeline_options(const Global& g, const BuildArgs& a) {
  PipelineOptions o;
  o.seed = g.seed;
  o.workers = a.workers;
  o.split.max_size = a.max_subset;
  if (a.workers < 1) throw BadConfig("--workers must be at least 1");
  return o;
}

void finish_build(const Global& g, const BuildArgs& a, const GlobalMap& map, const BuildReport& report,
                  std::ostream& out) {
  const fs::path dir(g.out);
  save_map(map, dir);
  const fs::path report_path = a.report.empty() ? fs::path(dir.string() + ".report.json") : fs::path(a.report);
  write_build_report(report, report_path);
  const StageTimings& t = report.seconds;
  out << std::fixed << std::setprecision(3);
  out << "submaps: " << report.usable() << "/" << report.attempted() << " built (success rate "
      << report.success_rate() << ")\n";
  out << "stage seconds: split " << t.split << ", augment " << t.augment << ", tracks " << t.tracks << ", submaps "
      << t.submaps << ", verify " << t.verify << ", fuse " << t.fuse << "\n";
  out << "map: " << map.submaps.size() << " submaps -> " << dir.string() << "\n";
}

int cmd_build_map(const Global& g, const BuildArgs& a, std::ostream& out) {
  require_out(g);
  const auto experiences = read_experiences(a.experiences, false);
  BuildReport report;
  const GlobalMap map = build_global_map(experiences, pipeline_options(g, a), &report);
  if (map.empty()) throw SolverDiverged("no submap could be built");
  finish_build(g, a, map, report, out);
  if (report.success_rate() < a.min_success) return kExitSolver;
  return kExitOk;
}

int cmd_update_map(const Global& g, const BuildArgs& a, std::ostream& out) {
  require_out(g);
  const auto experiences = read_experiences(a.experiences, false);
  const GlobalMap current = MapHandle::open(a.map, true)->to_global_map();
  std::set<int> ids(a.new_ids.begin(), a.new_ids.end());
  if (ids.empty()) {
    // Every experience without a submap in the map yet.
    std::set<int> mapped;
    for (const auto& [id, s] : current.submaps) mapped.insert(s->experience_id);
    for (const auto& e : experiences) {
      if (!mapped.count(e.id)) ids.insert(e.id);
    }
  }
  BuildReport report;
  const GlobalMap map = update_global_map(current, experiences, ids, pipeline_options(g, a), &report);
  finish_build(g, a, map, report, out);
  return kExitOk;
}

// serve ----------------------------------------------------------------------

struct ServeArgs {
  std::string map_dir;
  std::string listen = "127.0.0.1:7700";
  double r_query = 50.0;
  uint32_t min_inliers = 12;
  double duration = 0.0;
  std::string port_file;
  std::string content_snapshot;
};

int cmd_serve(const Global& g, const ServeArgs& a, std::ostream& out, const std::atomic<bool>* stop) {
  ServerOptions o;
  o.listen = parse_endpoint(a.listen);
  o.params.r_query = a.r_query;
  o.params.min_inliers = a.min_inliers;
  o.params.seed = g.seed;
  o.content_snapshot = a.content_snapshot;
  Server server(MapHandle::open(a.map_dir), o);
  server.start();
  out << "listening on " << o.listen.host << ":" << server.port() << std::endl;
  if (!a.port_file.empty()) {
    // Written aside and renamed so a watcher never reads a partial file.
    const fs::path tmp = a.port_file + ".tmp";
    std::ofstream(tmp) << server.port() << "\n";
    fs::rename(tmp, a.port_file);
  }
  const auto start = std::chrono::steady_clock::now();
  while (!(stop && stop->load())) {
    if (a.duration > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= a.duration) {
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  server.stop();
  const auto ms = server.processing_ms();
  out << "served " << ms.size() << " localisation requests, median " << median(ms) << " ms" << std::endl;
  return kExitOk;
}

// session --------------------------------------------------------------------

struct SessionArgs {
  std::string server = "127.0.0.1:7700";
  std::string query;
  std::string vio;
  std::string device = "device";
  double latency = 0.05;
  double bandwidth = 1.0e6;
  double drop = 0.0;
  double tau = 0.95;
  double delta = 0.5;
  double server_time = 0.77;
};

int cmd_session(const Global& g, const SessionArgs& a, std::ostream& out) {
  require_out(g);
  const Experience capture = read_experience(a.query);
  const VioLog vio = read_vio(a.vio.empty() ? vio_path_for(a.query) : fs::path(a.vio));
  SessionOptions o;
  o.device_id = a.device;
  o.network = {a.latency, a.bandwidth, a.drop, g.seed};
  o.sync.tau = a.tau;
  o.sync.huber_delta = a.delta;
  o.server_time = a.server_time;
  const SessionTrace trace = run_session(capture, vio, parse_endpoint(a.server), o);
  write_trace(trace, g.out);
  size_t ok = 0;
  for (const auto& r : trace.responses) ok += r.status == LocalizeStatus::success;
  out << "session: " << trace.requests.size() << " requests, " << trace.responses.size() << " responses, " << ok
      << " localised -> " << g.out << "\n";
  if (trace.connection_lost()) {
    for (const auto& e : trace.events) {
      if (e.kind == "connection_lost") out << "connection lost: " << e.message << "\n";
    }
    return kExitData;
  }
  return kExitOk;
}

// eval -----------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> traces;
  std::string queries;
  std::string world;
  std::string experiences;
  std::string build_report;
  double distance = 20.0;
};

int cmd_eval(const Global& g, const EvalArgs& a, std::ostream& out) {
  require_out(g);
  if (a.traces.empty()) throw BadConfig("--traces needs at least one trace");
  Oracle oracle;
  for (const auto& log : list_experience_logs(a.queries)) {
    const fs::path truth = truth_path_for(log);
    if (!fs::exists(truth)) throw MissingOracle("ground truth sidecar missing: " + truth.string());
    read_truth_into(oracle, truth);
  }
  std::vector<SessionTrace> traces;
  for (const auto& t : a.traces) traces.push_back(read_trace(t));
  EvalReport report = evaluate(traces, oracle, a.distance);

  if (!a.build_report.empty()) {
    const BuildReport build = read_build_report(a.build_report);
    report.build_seconds = build.seconds;
    if (!a.world.empty() && !a.experiences.empty()) {
      const auto experiences = read_experiences(a.experiences, false);
      report.map_yield = map_yield(read_world(a.world), experiences, build).fraction();
    }
  }

  const fs::path dir(g.out);
  fs::create_directories(dir);
  write_report_json(report, dir / "report.json");
  write_report_csv(report, dir / "report.csv");

  std::vector<double> errors;
  std::vector<std::pair<std::string, std::vector<Vec2>>> tracks(3);
  tracks[0].first = "truth";
  tracks[1].first = "GPS";
  tracks[2].first = "visual";
  std::ofstream csv = detail::open_out(dir / "poses.csv");
  csv << "device,frame_id,timestamp,truth_x,truth_y,global_x,global_y,error\n" << std::setprecision(17);
  for (const auto& t : traces) {
    for (const auto& p : t.poses) {
      const Vec3 truth = oracle.pose(p.frame_id).translation();
      if (&t == &traces.front()) tracks[0].second.push_back(truth.head<2>());
      if (!p.global) continue;
      const double e = (p.global->translation() - truth).norm();
      errors.push_back(e);
      if (&t == &traces.front()) tracks[2].second.push_back(p.global->translation().head<2>());
      csv << t.device_id << ',' << p.frame_id << ',' << p.timestamp << ',' << truth.x() << ',' << truth.y() << ','
          << p.global->translation().x() << ',' << p.global->translation().y() << ',' << e << '\n';
    }
  }
  // GPS track of the first session, from its query log.
  if (!traces.empty() && !traces.front().poses.empty()) {
    const int exp_id = static_cast<int>(traces.front().poses.front().frame_id / 1000000);
    const fs::path log = fs::path(a.queries) / ("exp_" + std::to_string(exp_id) + ".jsonl");
    if (fs::exists(log)) {
      for (const auto& f : read_experience(log).frames) tracks[1].second.push_back(f.gps.position.head<2>());
    }
  }
  std::ofstream(dir / "error_histogram.svg") << svg_histogram(errors, 30, "Pose error", "error (m)");
  std::ofstream(dir / "tracks.svg") << svg_tracks(tracks, "GPS vs visual positioning");

  out << std::fixed << std::setprecision(4);
  for (const auto& [k, v] : report_fields(report)) out << k << " " << v << "\n";
  return kExitOk;
}

// report ---------------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> evals;
  std::vector<std::string> builds;
};

int cmd_report(const Global& g, const ReportArgs& a, std::ostream& out) {
  std::ostringstream md;
  md << std::fixed << std::setprecision(3);
  if (!a.builds.empty()) {
    md << "## Map builds\n\n| report | attempted | built | success rate | split s | augment s | tracks s | submaps s | "
          "verify s | fuse s |\n|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& p : a.builds) {
      const BuildReport b = read_build_report(p);
      const StageTimings& t = b.seconds;
      md << "| " << fs::path(p).filename().string() << " | " << b.attempted() << " | " << b.usable() << " | "
         << b.success_rate() << " | " << t.split << " | " << t.augment << " | " << t.tracks << " | " << t.submaps
         << " | " << t.verify << " | " << t.fuse << " |\n";
    }
    md << "\n";
  }
  if (!a.evals.empty()) {
    md << "## Evaluations\n\n| metric |";
    std::vector<detail::json> reports;
    for (const auto& p : a.evals) {
      reports.push_back(detail::read_json_file(p));
      md << " " << fs::path(p).parent_path().filename().string() << " |";
    }
    md << "\n|---|";
    for (size_t i = 0; i < reports.size(); ++i) md << "---|";
    md << "\n";
    for (const auto& [key, value] : reports.front().items()) {
      md << "| " << key << " |";
      for (const auto& r : reports) md << " " << (r.contains(key) ? r.at(key).get<double>() : 0.0) << " |";
      md << "\n";
    }
  }
  out << md.str();
  if (!g.out.empty()) {
    auto f = detail::open_out(g.out);
    f << md.str();
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::atomic<bool>* stop) {
  CLI::App app{"vpsmap: build visual positioning maps, serve them and evaluate sessions", "vpsmap"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Structured text (TOML/INI) config file");
  Global g;
  app.add_option("--seed", g.seed, "Seed for every random stream");
  app.add_option("--out", g.out, "Output path");

  GenWorldArgs gw;
  auto* gen = app.add_subcommand("gen-world", "Generate a synthetic town");
  gen->add_option("--width", gw.config.width);
  gen->add_option("--height", gw.config.height);
  gen->add_option("--spacing", gw.config.street_spacing, "Street spacing (m)");
  gen->add_option("--density", gw.config.landmarks_per_100m, "Landmarks per 100 m of facade");

  CollectArgs ca;
  auto* collect = app.add_subcommand("collect", "Simulate captures along a route");
  collect->add_option("--world", ca.world)->required();
  collect->add_option("--streets", ca.streets, "Street ids of the route")->delimiter(',');
  collect->add_option("--count", ca.count);
  collect->add_option("--first-id", ca.first_id);
  collect->add_option("--condition", ca.condition, "0 = day, 1 = night");
  collect->add_option("--label", ca.label);
  collect->add_option("--platform", ca.platform)->check(CLI::IsMember({"vehicle", "pedestrian"}));
  collect->add_flag("--reverse", ca.reverse);
  collect->add_flag("--exact", ca.exact, "Noise-free sensors");
  collect->add_option("--canyon-bias", ca.canyon_bias, "GPS canyon bias amplitude (m)");
  collect->add_option("--drift", ca.drift, "Odometry drift per metre travelled");

  BuildArgs ba;
  auto* build = app.add_subcommand("build-map", "Reconstruct and fuse a map");
  build->add_option("--experiences", ba.experiences)->required();
  build->add_option("--workers", ba.workers);
  build->add_option("--max-subset", ba.max_subset);
  build->add_option("--report", ba.report);
  build->add_option("--min-success", ba.min_success);

  BuildArgs ua;
  auto* update = app.add_subcommand("update-map", "Add experiences to a map");
  update->add_option("--map", ua.map)->required();
  update->add_option("--experiences", ua.experiences)->required();
  update->add_option("--new", ua.new_ids)->delimiter(',');
  update->add_option("--workers", ua.workers);
  update->add_option("--max-subset", ua.max_subset);
  update->add_option("--report", ua.report);

  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "Run the localisation service");
  serve->add_option("--map-dir", sa.map_dir)->required();
  serve->add_option("--listen", sa.listen);
  serve->add_option("--r-query", sa.r_query);
  serve->add_option("--min-inliers", sa.min_inliers);
  serve->add_option("--duration", sa.duration, "Stop after this many seconds (0 = until interrupted)");
  serve->add_option("--port-file", sa.port_file);
  serve->add_option("--content-snapshot", sa.content_snapshot);

  SessionArgs se;
  auto* session = app.add_subcommand("session", "Replay a capture against a server");
  session->add_option("--server", se.server);
  session->add_option("--query", se.query)->required();
  session->add_option("--vio", se.vio);
  session->add_option("--device", se.device);
  session->add_option("--latency", se.latency);
  session->add_option("--bandwidth", se.bandwidth);
  session->add_option("--drop", se.drop);
  session->add_option("--tau", se.tau);
  session->add_option("--delta", se.delta);
  session->add_option("--server-time", se.server_time);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Compute metrics, CSV and plots from traces");
  eval->add_option("--traces", ea.traces)->required();
  eval->add_option("--queries", ea.queries, "Directory of the query logs and truth sidecars")->required();
  eval->add_option("--world", ea.world);
  eval->add_option("--experiences", ea.experiences);
  eval->add_option("--build-report", ea.build_report);
  eval->add_option("--distance", ea.distance);

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "Tabulate evaluation and build reports");
  report->add_option("--eval", ra.evals);
  report->add_option("--build", ra.builds);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_world(g, gw, out);
    if (*collect) return cmd_collect(g, ca, out);
    if (*build) return cmd_build_map(g, ba, out);
    if (*update) return cmd_update_map(g, ua, out);
    if (*serve) return cmd_serve(g, sa, out, stop);
    if (*session) return cmd_session(g, se, out);
    if (*eval) return cmd_eval(g, ea, out);
    if (*report) return cmd_report(g, ra, out);
  } catch (const BadConfig& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SolverDiverged& e) {
    err << "solver failure: " << e.what() << "\n";
    return kExitSolver;
  } catch (const InsufficientOverlap& e) {
    err << "solver failure: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace vps
