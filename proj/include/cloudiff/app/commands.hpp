#pragma once

#include "cloudiff/app/config.hpp"
#include "cloudiff/evaluation.hpp"

#include <iosfwd>
#include <vector>

namespace cloudiff::app {

// Each command reads what it needs from the config, writes its files under
// `cfg.output` (or the dataset for synth) and prints a short summary.
void cmd_synth(const RunConfig& cfg, std::ostream& log);
void cmd_filter(const RunConfig& cfg, std::ostream& log);
void cmd_register(const RunConfig& cfg, std::ostream& log);
void cmd_optimize(const RunConfig& cfg, std::ostream& log);
MetricsReport cmd_detect(const RunConfig& cfg, std::ostream& log);
AteStats cmd_evaluate_ate(const RunConfig& cfg, std::ostream& log);

struct SweepPoint {
  double value = 0.0;
  MetricsReport metrics;
};
std::vector<SweepPoint> cmd_sweep(const RunConfig& cfg, std::ostream& log);

/// Full command line entry point. Returns the process exit code: 0 on
/// success, 2 for configuration / input errors, 3 for pipeline failures.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cloudiff::app
