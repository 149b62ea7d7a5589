#include "cloudiff/app/config.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace cloudiff::app {
namespace {

const std::vector<std::string> kCommands = {"synth",    "filter",   "register", "optimize",
                                            "detect",   "evaluate", "sweep"};

template <typename T>
void require(bool ok, const std::string& key, const T& value, const char* what) {
  if (!ok) {
    std::ostringstream os;
    os << key << " = " << value << ": " << what;
    throw ConfigError(os.str());
  }
}

}  // namespace

const char* to_string(PoseSource s) {
  switch (s) {
    case PoseSource::kGroundTruth: return "ground-truth";
    case PoseSource::kOdometry: return "odometry";
    case PoseSource::kFused: return "fused";
  }
  return "?";
}

PoseSource parse_pose_source(const std::string& s) {
  if (s == "ground-truth" || s == "gt") return PoseSource::kGroundTruth;
  if (s == "odometry") return PoseSource::kOdometry;
  if (s == "fused") return PoseSource::kFused;
  throw ConfigError("poses = " + s + ": expected ground-truth, odometry or fused");
}

synth::NoiseSpec RunConfig::noise_spec() const {
  synth::NoiseSpec n;
  if (noise == "none") {
    n = synth::NoiseSpec::none(seed);
  } else if (noise == "small") {
    n = synth::NoiseSpec::small(seed);
  } else if (noise == "big") {
    n = synth::NoiseSpec::big(seed);
  } else {
    throw ConfigError("noise = " + noise + ": expected none, small or big");
  }
  if (scene == "dark") n.dark_empty_rate = dark_empty_rate;
  return n;
}

void RunConfig::validate() const {
  if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end()) {
    throw ConfigError("unknown command '" + command + "'");
  }
  require(threads >= 0, "threads", threads, "must be >= 0");
  require(scene == "default" || scene == "unchanged" || scene == "mirror" ||
              scene == "dark",
          "scene", scene, "expected default, unchanged, mirror or dark");
  (void)noise_spec();
  require(flight_height > 0.0, "flight_height", flight_height, "must be > 0");
  require(speed > 0.0, "speed", speed, "must be > 0");
  require(surface_density > 0.0, "surface_density", surface_density, "must be > 0");
  require(image_width > 1 && image_height > 1, "image_width", image_width,
          "image must be at least 2 x 2");
  require(hfov_deg > 0.0 && hfov_deg < 180.0, "hfov_deg", hfov_deg,
          "must be in (0, 180)");
  require(dark_empty_rate >= 0.0 && dark_empty_rate <= 1.0, "dark_empty_rate",
          dark_empty_rate, "must be in [0, 1]");
  require(pose_bias >= 0.0 && std::isfinite(pose_bias), "pose_bias", pose_bias,
          "must be >= 0");
  require(local_resolution > 0.0, "local_resolution", local_resolution, "must be > 0");
  try {
    filter.validate();
    change.validate();
    registration.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  const bool needs_dataset = command != "evaluate";
  if (needs_dataset && dataset.empty()) throw ConfigError(command + ": --dataset is required");
  if (command == "synth" && !overwrite && std::filesystem::exists(dataset) &&
      !std::filesystem::is_empty(dataset)) {
    throw ConfigError("synth: " + dataset.string() +
                      " exists and is not empty (pass --overwrite)");
  }
  if (needs_dataset && command != "synth" &&
      !std::filesystem::exists(dataset / "scene.json")) {
    throw ConfigError(command + ": " + dataset.string() + " is not a dataset");
  }
  if (command == "evaluate" && (estimated.empty() || ground_truth.empty())) {
    throw ConfigError("evaluate: --estimated and --ground_truth are required");
  }
  if (command == "sweep") {
    const auto& names = sweep_parameters();
    if (std::find(names.begin(), names.end(), sweep_param) == names.end()) {
      std::string list;
      for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
      throw ConfigError("sweep: unknown parameter '" + sweep_param + "' (valid: " +
                        list + ")");
    }
    if (sweep_values.empty()) throw ConfigError("sweep: --values is empty");
    for (double v : sweep_values) {
      RunConfig probe = *this;
      probe.command = "detect";
      set_parameter(probe, sweep_param, v);
      try {
        probe.filter.validate();
        probe.change.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("sweep: ") + e.what());
      }
    }
  }
}

const std::vector<std::string>& sweep_parameters() {
  static const std::vector<std::string> names = {"th_f", "th_ch", "th_d",  "rho_o",
                                                 "rho_p", "delta_d", "alpha"};
  return names;
}

void set_parameter(RunConfig& cfg, const std::string& name, double value) {
  if (name == "th_f") {
    cfg.change.probe_depth = value;
  } else if (name == "th_ch") {
    cfg.change.change_threshold = value;
  } else if (name == "th_d") {
    cfg.change.max_depth = value;
  } else if (name == "rho_o") {
    cfg.change.octree_resolution = value;
  } else if (name == "rho_p") {
    cfg.change.downsample_resolution = value;
  } else if (name == "delta_d") {
    cfg.filter.depth_threshold = value;
  } else if (name == "alpha") {
    require(value == std::floor(value), "alpha", value, "must be an integer");
    cfg.filter.min_successes = static_cast<int>(value);
  } else {
    throw ConfigError("unknown parameter '" + name + "'");
  }
}

RunConfig parse_command_line(int argc, const char* const* argv, std::string* help_text) {
  RunConfig cfg;
  CLI::App app{"Point-cloud change detection against an outdated prior map", "cloudiff"};
  app.set_config("--config", "", "Flat key = value file with the same keys as the options");
  app.allow_config_extras(false);
  app.add_option("command", cfg.command, "synth | filter | register | optimize | detect | "
                                         "evaluate | sweep")
      ->required();

  std::string dataset, output, estimated, ground_truth;
  std::string poses = to_string(cfg.poses);
  std::string values;
  bool align = cfg.change.align_to_prior;
  app.add_option("--dataset", dataset, "Dataset directory");
  app.add_option("--output", output, "Output directory (or file for evaluate)");
  app.add_flag("--overwrite", cfg.overwrite, "Allow synth into a non-empty directory");
  app.add_option("--threads", cfg.threads, "OpenMP threads, 0 = runtime default");
  app.add_option("--seed", cfg.seed, "Seed for every random draw");

  app.add_option("--scene", cfg.scene, "default | unchanged | mirror | dark");
  app.add_option("--noise", cfg.noise, "none | small | big");
  app.add_option("--flight_height", cfg.flight_height, "Trajectory height, m");
  app.add_option("--speed", cfg.speed, "Flight speed, m/s");
  app.add_option("--loop_length", cfg.loop_length, "Loop extent along x, m");
  app.add_option("--loop_width", cfg.loop_width, "Loop extent along y, m");
  app.add_option("--surface_density", cfg.surface_density, "Prior samples per m^2");
  app.add_option("--image_width", cfg.image_width);
  app.add_option("--image_height", cfg.image_height);
  app.add_option("--hfov_deg", cfg.hfov_deg, "Horizontal field of view, degrees");
  app.add_option("--dark_empty_rate", cfg.dark_empty_rate, "Dropped pixels in the dark scene");

  app.add_option("--poses", poses, "ground-truth | odometry | fused");
  app.add_option("--pose_bias", cfg.pose_bias, "Largest position error of the injected yaw drift, m");
  app.add_option("--local_resolution", cfg.local_resolution,
                 "Local-cloud voxel size for prior registration, m");

  app.add_option("--delta_d", cfg.filter.depth_threshold, "Depth agreement, m");
  app.add_option("--alpha", cfg.filter.min_successes, "Required agreeing neighbours (>)");
  app.add_option("--window", cfg.filter.window, "Neighbour half-width, keyframes");

  app.add_option("--th_ch", cfg.change.change_threshold, "Change distance, m");
  app.add_option("--th_d", cfg.change.max_depth, "Surface ray depth cutoff, m");
  app.add_option("--th_f", cfg.change.probe_depth, "Free-probe ray depth, m");
  app.add_option("--rho_o", cfg.change.octree_resolution, "Occupancy resolution, m");
  app.add_option("--rho_p", cfg.change.downsample_resolution, "Cloud resolution, m");
  app.add_option("--align", align, "Align the global cloud to the prior");

  auto& reg = cfg.registration;
  app.add_option("--reg_max_iterations", reg.max_iterations);
  app.add_option("--reg_translation_epsilon", reg.translation_epsilon);
  app.add_option("--reg_rotation_epsilon", reg.rotation_epsilon);
  app.add_option("--reg_correspondence_distance", reg.correspondence_distance);
  app.add_option("--reg_knn", reg.knn_for_covariance);
  app.add_option("--reg_fitness", reg.fitness_threshold);
  app.add_option("--reg_max_translation", reg.max_translation);

  app.add_option("--estimated", estimated, "Estimated trajectory (evaluate)");
  app.add_option("--ground_truth", ground_truth, "Reference trajectory (evaluate)");
  app.add_flag("--ate_align", cfg.ate_align, "SE(3)-align before computing ATE");

  app.add_option("--param", cfg.sweep_param, "Sweep knob");
  app.add_option("--values", values, "Comma-separated sweep values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    if (help_text != nullptr) *help_text = app.help();
    return RunConfig{};
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }

  cfg.dataset = dataset;
  cfg.output = output;
  cfg.estimated = estimated;
  cfg.ground_truth = ground_truth;
  cfg.poses = parse_pose_source(poses);
  cfg.change.align_to_prior = align;
  cfg.change.threads = cfg.threads;
  cfg.registration.thread_count = cfg.threads;
  cfg.change.alignment = cfg.registration;
  if (!values.empty()) {
    std::stringstream ss(values);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        cfg.sweep_values.push_back(std::stod(item, &used));
        if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError("values: '" + item + "' is not a number");
      }
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace cloudiff::app
