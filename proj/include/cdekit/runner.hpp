#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cdekit/config.hpp"

namespace cdekit {

// --out-dir, then $CDEKIT_OUTPUT_DIR, then the working directory.
std::filesystem::path resolve_output_dir(const std::string& flag);

// Writes to a sibling temp file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

struct RunOptions {
  std::filesystem::path out_dir = ".";
  bool progress = false;        // progress lines on stderr
  std::ostream* out = nullptr;  // divergence results when no summary path is set
};

struct RunResult {
  std::vector<std::filesystem::path> files;  // artifacts written
  double wall_seconds = 0.0;
};

// Runs the configured experiment and writes its artifacts.
RunResult run_experiment(ExperimentConfig cfg, const RunOptions& opt);

// Divergences between p and q under nu, with the methods used and the KL bound.
Json divergence_report(const DivergenceConfig& cfg);

}  // namespace cdekit
