#pragma once

#include "cloudiff/change_detect.hpp"
#include "cloudiff/depth_filter.hpp"
#include "cloudiff/registration.hpp"
#include "cloudiff/synthworld.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace cloudiff::app {

// Bad configuration or command line; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PoseSource { kGroundTruth, kOdometry, kFused };

const char* to_string(PoseSource s);
PoseSource parse_pose_source(const std::string& s);

// Every knob of every subcommand, flat. The config file uses the same keys
// as the command line (`key = value`, one per line).
struct RunConfig {
  std::string command;
  std::filesystem::path dataset;
  std::filesystem::path output;
  bool overwrite = false;
  int threads = 0;
  std::uint64_t seed = 1;

  // synth
  std::string scene = "default";  // default | unchanged | mirror | dark
  std::string noise = "none";     // none | small | big
  double flight_height = 4.0;
  double speed = 2.75;
  double loop_length = 20.0;
  double loop_width = 10.0;
  double surface_density = 10.0;  // prior / ground-truth samples per m^2
  int image_width = 256;
  int image_height = 144;
  double hfov_deg = 90.0;
  double dark_empty_rate = 0.3;

  // poses
  PoseSource poses = PoseSource::kGroundTruth;
  double pose_bias = 0.0;  // m, largest position error of the injected yaw drift
  double local_resolution = 0.4;

  FilterConfig filter;
  ChangeConfig change;
  RegistrationConfig registration;

  // evaluate
  std::filesystem::path estimated;
  std::filesystem::path ground_truth;
  bool ate_align = false;

  // sweep
  std::string sweep_param;
  std::vector<double> sweep_values;

  /// Cross-checks every module precondition. Throws ConfigError.
  void validate() const;
  [[nodiscard]] synth::NoiseSpec noise_spec() const;
};

/// Names accepted by the sweep subcommand.
const std::vector<std::string>& sweep_parameters();

/// Set a sweepable knob by name. Throws ConfigError for unknown names.
void set_parameter(RunConfig& cfg, const std::string& name, double value);

/// Parse `cloudiff <command> [--config FILE] [--key value ...]`. When help
/// is requested the returned command is empty and `help_text` holds the
/// usage. Throws ConfigError.
RunConfig parse_command_line(int argc, const char* const* argv, std::string* help_text);

}  // namespace cloudiff::app
