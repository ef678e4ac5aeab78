#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "lfinode/config.hpp"

namespace lfi {

/// Stable exit-code contract shared by all subcommands.
enum ExitCode {
  kExitOk = 0,
  kExitConfig = 2,
  kExitIo = 3,
  kExitTraining = 4,
  kExitEstimation = 5,
};

int cmd_generate(const RunConfig& config, std::ostream& out, std::ostream& err);

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err);

int cmd_eval(const RunConfig& config, const std::optional<std::filesystem::path>& model_override,
             std::ostream& out, std::ostream& err);

struct JacobianCmdOptions {
  bool filter = false;
  std::optional<double> cutoff_hz;  // default: Nyquist / 50
  NeighborParams neighbors;
  int eq_window_divisor = 20;
};

int cmd_jacobian(const std::filesystem::path& trajectory_csv, const JacobianCmdOptions& options,
                 std::ostream& out, std::ostream& err);

int cmd_bound(const std::filesystem::path& trajectory_csv, double sigma_x,
              std::optional<double> jstar_norm, const JacobianCmdOptions& options,
              std::ostream& out, std::ostream& err);

int cmd_report(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& err);

}  // namespace lfi
