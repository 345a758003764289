#pragma once

#include "mfg/discrete_system.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace mfg::io {

/// Malformed or inconsistent experiment file. `line` is 0 when the problem
/// is not tied to one line (a missing key, a failed cross-check).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& what)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct Experiment {
  RunConfig<double> run;
  /// coupling kind as written ("kernel" or "local")
  std::string coupling_kind;
  /// the text the experiment was parsed from
  std::string source_text;
};

/// Parses the sectioned key = value format described in docs/formats.md.
/// Relative data-file paths resolve against `base_dir`.
Experiment parse_experiment(const std::string& text, const std::filesystem::path& base_dir = ".");

Experiment load_experiment(const std::filesystem::path& path);

}  // namespace mfg::io
