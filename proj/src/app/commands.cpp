#include "cloudiff/app/commands.hpp"

#include "cloudiff/app/pipeline.hpp"
#include "cloudiff/app/svg.hpp"
#include "cloudiff/kernels.hpp"

#include <json.hpp>

#include <chrono>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace cloudiff::app {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path output_dir(const RunConfig& cfg) {
  const fs::path out = cfg.output.empty() ? cfg.dataset / ("out_" + cfg.command) : cfg.output;
  fs::create_directories(out);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

std::vector<StampedPose> stamped(const Dataset& data, std::span<const Pose> poses) {
  std::vector<StampedPose> out(poses.size());
  for (std::size_t k = 0; k < poses.size(); ++k) out[k] = {data.ground_truth[k].timestamp, poses[k]};
  return out;
}

Dataset load(const RunConfig& cfg) {
  Dataset data = load_dataset(cfg.dataset);
  if (data.meta.intrinsics.width <= 0) throw io::FormatError("scene.json: no intrinsics");
  return data;
}

CsvContext csv_context(const Dataset& data, const RunConfig& cfg) {
  return {data.meta.trajectory_label, data.meta.noise_label, cfg.change.probe_depth,
          cfg.change.change_threshold};
}

nlohmann::json metric_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json metrics_json(const MetricsReport& m) {
  const auto& c = m.counts;
  return {{"R_new", metric_json(m.recall_new)},
          {"P_new", metric_json(m.precision_new)},
          {"R_rm", metric_json(m.recall_removed)},
          {"P_rm", metric_json(m.precision_removed)},
          {"counts",
           {{"prior_new_obs", c.prior_new_obs},
            {"prior_new_obs_tp", c.prior_new_obs_tp},
            {"detected_new", c.detected_new},
            {"detected_new_tp", c.detected_new_tp},
            {"prior_rm_obs", c.prior_rm_obs},
            {"prior_rm_obs_tp", c.prior_rm_obs_tp},
            {"detected_rm", c.detected_rm},
            {"detected_rm_tp", c.detected_rm_tp}}}};
}

GraphState filter_pose_source(const Dataset& data, const RunConfig& cfg) {
  return cfg.poses == PoseSource::kGroundTruth ? data.true_poses() : odometry_poses(data);
}

Localization run_localization(const Dataset& data, const RunConfig& cfg) {
  std::vector<DepthImage> filtered;
  try {
    filtered = filter_depths(data, odometry_poses(data), cfg);
  } catch (const std::invalid_argument& e) {
    throw PipelineError("filter", e.what());
  }
  try {
    return localize(data, filtered, cfg);
  } catch (const std::invalid_argument& e) {
    throw PipelineError("register", e.what());
  }
}

}  // namespace

void cmd_synth(const RunConfig& cfg, std::ostream& log) {
  const auto t0 = Clock::now();
  const Dataset data = synthesize(cfg);
  if (cfg.overwrite && fs::exists(cfg.dataset / "depth")) fs::remove_all(cfg.dataset / "depth");
  write_dataset(cfg.dataset, data);
  log << "synth: " << data.size() << " keyframes, prior " << data.prior.size()
      << " points, changed " << data.changed.size() << " points -> " << cfg.dataset.string()
      << " (" << std::fixed << std::setprecision(1) << seconds_since(t0) << " s)\n";
}

void cmd_filter(const RunConfig& cfg, std::ostream& log) {
  const Dataset data = load(cfg);
  const fs::path out = output_dir(cfg);
  std::vector<DepthImage> filtered;
  try {
    filtered = filter_depths(data, filter_pose_source(data, cfg), cfg);
  } catch (const std::invalid_argument& e) {
    throw PipelineError("filter", e.what());
  }
  std::ostringstream csv;
  csv << "keyframe,valid,kept\n";
  std::size_t valid_total = 0, kept_total = 0;
  for (std::size_t k = 0; k < filtered.size(); ++k) {
    io::write_depth(io::depth_path(out, k), filtered[k]);
    std::size_t valid = 0, kept = 0;
    for (float d : data.depths[k].depth) valid += d > 0.0f;
    for (float d : filtered[k].depth) kept += d > 0.0f;
    csv << k << "," << valid << "," << kept << "\n";
    valid_total += valid;
    kept_total += kept;
  }
  write_text(out / "filter.csv", csv.str());
  log << "filter: kept " << kept_total << " of " << valid_total << " depth pixels -> "
      << out.string() << "\n";
}

void cmd_register(const RunConfig& cfg, std::ostream& log) {
  const Dataset data = load(cfg);
  const fs::path out = output_dir(cfg);
  const Localization loc = run_localization(data, cfg);
  std::ostringstream csv;
  csv << std::setprecision(10);
  csv << "keyframe,points,accepted,converged,iterations,fitness,translation_length,"
         "tx,ty,tz,qx,qy,qz,qw\n";
  std::size_t accepted = 0;
  for (const auto& r : loc.registrations) {
    const Pose& T = r.result.transform;
    csv << r.keyframe << "," << r.points << "," << r.result.accepted << ","
        << r.result.converged << "," << r.result.iterations << "," << r.result.fitness << ","
        << r.result.translation_length << "," << T.t.x() << "," << T.t.y() << "," << T.t.z()
        << "," << T.q.x() << "," << T.q.y() << "," << T.q.z() << "," << T.q.w() << "\n";
    accepted += r.result.accepted;
  }
  write_text(out / "registrations.csv", csv.str());
  log << "register: " << accepted << " of " << loc.registrations.size()
      << " local clouds accepted -> " << (out / "registrations.csv").string() << "\n";
}

void cmd_optimize(const RunConfig& cfg, std::ostream& log) {
  const Dataset data = load(cfg);
  const fs::path out = output_dir(cfg);
  const Localization loc = run_localization(data, cfg);
  io::write_trajectory(out / "traj_odometry.txt", stamped(data, loc.odometry));
  io::write_trajectory(out / "traj_initial.txt", stamped(data, loc.initial));
  io::write_trajectory(out / "traj_fused.txt", stamped(data, loc.fused));
  const AteStats odo = compute_ate(stamped(data, loc.odometry), data.ground_truth);
  const AteStats fused = compute_ate(stamped(data, loc.fused), data.ground_truth);
  std::ostringstream csv;
  csv << "trajectory,rmse,std,max\n"
      << "odometry," << odo.rmse << "," << odo.stddev << "," << odo.max << "\n"
      << "fused," << fused.rmse << "," << fused.stddev << "," << fused.max << "\n";
  write_text(out / "ate.csv", csv.str());
  log << "optimize: " << loc.priors.size() << " prior factors, " << loc.optimization.iterations
      << " iterations, ATE rmse odometry " << odo.rmse << " m, fused " << fused.rmse
      << " m -> " << out.string() << "\n";
}

MetricsReport cmd_detect(const RunConfig& cfg, std::ostream& log) {
  const auto t0 = Clock::now();
  const Dataset data = load(cfg);
  const fs::path out = output_dir(cfg);
  const DetectionRun run = run_detection(data, cfg);
  const ChangeReport& r = run.report;

  io::write_ply(out / "global.ply", r.global_cloud);
  io::write_ply(out / "observed_prior.ply", r.observed_prior);
  io::write_ply(out / "new.ply", r.new_points);
  io::write_ply(out / "removed.ply", r.removed_points);
  io::write_trajectory(out / "poses.txt", stamped(data, run.poses));
  write_text(out / "metrics.csv", metrics_csv_header() + "\n" +
                                      metrics_csv_row(csv_context(data, cfg), run.metrics) +
                                      "\n");

  nlohmann::json summary = {
      {"trajectory", data.meta.trajectory_label},
      {"noise", data.meta.noise_label},
      {"poses", to_string(cfg.poses)},
      {"pose_bias", cfg.pose_bias},
      {"th_f", cfg.change.probe_depth},
      {"th_ch", cfg.change.change_threshold},
      {"th_d", cfg.change.max_depth},
      {"rho_o", cfg.change.octree_resolution},
      {"rho_p", cfg.change.downsample_resolution},
      {"global_points", r.global_cloud.size()},
      {"observed_prior_points", r.observed_prior.size()},
      {"new_points", r.new_points.size()},
      {"removed_points", r.removed_points.size()},
      {"aligned", r.aligned},
      {"alignment_fitness", r.alignment.fitness},
      {"metrics", metrics_json(run.metrics)},
      {"warnings", r.warnings},
  };
  if (run.localization) {
    std::size_t accepted = 0;
    for (const auto& g : run.localization->registrations) accepted += g.result.accepted;
    summary["registrations"] = run.localization->registrations.size();
    summary["registrations_accepted"] = accepted;
  }
  const double elapsed = seconds_since(t0);
  summary["seconds"] = elapsed;
  write_text(out / "summary.json", summary.dump(2) + "\n");

  for (const auto& w : r.warnings) log << "warning: " << w << "\n";
  log << "detect: " << r.new_points.size() << " new, " << r.removed_points.size()
      << " removed of " << r.global_cloud.size() << " global points; R_new "
      << format_metric(run.metrics.recall_new) << " P_new "
      << format_metric(run.metrics.precision_new) << " R_rm "
      << format_metric(run.metrics.recall_removed) << " P_rm "
      << format_metric(run.metrics.precision_removed) << " (" << std::fixed
      << std::setprecision(1) << elapsed << " s) -> " << out.string() << "\n";
  return run.metrics;
}

AteStats cmd_evaluate_ate(const RunConfig& cfg, std::ostream& log) {
  const auto est = io::read_trajectory(cfg.estimated);
  const auto gt = io::read_trajectory(cfg.ground_truth);
  AteStats ate;
  try {
    ate = compute_ate(est, gt, 0.01, cfg.ate_align);
  } catch (const std::invalid_argument& e) {
    throw PipelineError("evaluate", e.what());
  }
  std::ostringstream line;
  line << std::setprecision(10) << ate.rmse << "," << ate.stddev << "," << ate.max << ","
       << ate.pairs;
  if (!cfg.output.empty()) {
    if (cfg.output.has_parent_path()) fs::create_directories(cfg.output.parent_path());
    write_text(cfg.output, "rmse,std,max,pairs\n" + line.str() + "\n");
  }
  log << "ATE rmse " << ate.rmse << " std " << ate.stddev << " max " << ate.max << " ("
      << ate.pairs << " pairs)\n";
  return ate;
}

std::vector<SweepPoint> cmd_sweep(const RunConfig& cfg, std::ostream& log) {
  const auto t0 = Clock::now();
  const Dataset data = load(cfg);
  const fs::path out = output_dir(cfg);
  const auto n = static_cast<int>(cfg.sweep_values.size());
  std::vector<SweepPoint> points(cfg.sweep_values.size());
  std::vector<std::string> rows(points.size());
  std::vector<std::exception_ptr> errors(points.size());

  // Points run in parallel; each one then runs its kernels single-threaded.
  const int threads = kernels::resolve_threads(cfg.threads);
  const bool outer = threads > 1 && n > 1;
#pragma omp parallel for schedule(dynamic, 1) num_threads(outer ? threads : 1)
  for (int i = 0; i < n; ++i) {
    try {
      RunConfig point = cfg;
      point.command = "detect";
      if (outer) point.threads = 1;
      set_parameter(point, cfg.sweep_param, cfg.sweep_values[i]);
      const DetectionRun run = run_detection(data, point);
      points[i] = {cfg.sweep_values[i], run.metrics};
      rows[i] = metrics_csv_row(csv_context(data, point), run.metrics);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::string csv = "param,value," + metrics_csv_header() + "\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::ostringstream v;
    v << points[i].value;
    csv += cfg.sweep_param + "," + v.str() + "," + rows[i] + "\n";
  }
  write_text(out / "sweep.csv", csv);

  std::vector<double> x;
  std::vector<Series> series = {{"R_new", {}}, {"P_new", {}}, {"R_rm", {}}, {"P_rm", {}}};
  for (const auto& p : points) {
    x.push_back(p.value);
    series[0].y.push_back(p.metrics.recall_new);
    series[1].y.push_back(p.metrics.precision_new);
    series[2].y.push_back(p.metrics.recall_removed);
    series[3].y.push_back(p.metrics.precision_removed);
  }
  write_text(out / "sweep.svg",
             line_chart_svg(data.meta.trajectory_label + " " + data.meta.noise_label,
                            cfg.sweep_param + " (m)", x, series));
  log << "sweep: " << points.size() << " values of " << cfg.sweep_param << " in " << std::fixed
      << std::setprecision(1) << seconds_since(t0) << " s -> " << (out / "sweep.csv").string()
      << "\n";
  return points;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    std::string help;
    const RunConfig cfg = parse_command_line(argc, argv, &help);
    if (!help.empty()) {
      out << help;
      return 0;
    }
    if (cfg.command == "synth") {
      cmd_synth(cfg, out);
    } else if (cfg.command == "filter") {
      cmd_filter(cfg, out);
    } else if (cfg.command == "register") {
      cmd_register(cfg, out);
    } else if (cfg.command == "optimize") {
      cmd_optimize(cfg, out);
    } else if (cfg.command == "detect") {
      cmd_detect(cfg, out);
    } else if (cfg.command == "evaluate") {
      cmd_evaluate_ate(cfg, out);
    } else if (cfg.command == "sweep") {
      cmd_sweep(cfg, out);
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const io::FormatError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const PipelineError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace cloudiff::app
