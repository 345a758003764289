#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

namespace mfg::io {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_config = 2, exit_solver = 3 };

struct CommandOptions {
  std::filesystem::path config;
  std::filesystem::path out = ".";
  std::vector<double> sigma;
  std::optional<int> max_iter;
  std::optional<double> tol;
  /// feeds only the randomized validation hooks
  unsigned long seed = 1;
};

int cmd_run(const CommandOptions& opts, std::ostream& log, std::ostream& err);
int cmd_sweep(const CommandOptions& opts, std::ostream& log, std::ostream& err);
int cmd_compare(const CommandOptions& opts, std::ostream& log, std::ostream& err);
/// Plots a report.csv; `out` is the SVG file to write.
int cmd_plot(const std::filesystem::path& report, const std::filesystem::path& out, std::ostream& log,
             std::ostream& err);

}  // namespace mfg::io
