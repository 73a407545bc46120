#pragma once

#include <iosfwd>

#include "config.hpp"
#include "report.hpp"

namespace axcv::cli {

struct CommandResult {
  Report report;
  int exit_code = kExitOk;
};

CommandResult cmd_stats(const ExperimentConfig& cfg);
CommandResult cmd_conv_error(const ExperimentConfig& cfg);
/// Exit code kExitEquivalence on any mismatch; the report is still produced
/// and the first mismatch is described in `diagnostics`.
CommandResult cmd_systolic_check(const ExperimentConfig& cfg, std::ostream& diagnostics);
CommandResult cmd_infer(const ExperimentConfig& cfg);
CommandResult cmd_sweep(const ExperimentConfig& cfg);

CommandResult run_command(const ExperimentConfig& cfg, std::ostream& diagnostics);

}  // namespace axcv::cli
