#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pslab/lab/spec.hpp"

namespace pslab::lab {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kOutputEnv = "PSLAB_OUT";

struct RunOptions {
  std::filesystem::path out;  // empty: spec output, then $PSLAB_OUT, then ./pslab-out/<recipe>
  int jobs = 1;
  bool deterministic = true;
  std::uint64_t seed_offset = 0;
  std::ostream* log = nullptr;
};

struct RunRecord {
  std::uint64_t seed = 0;
  std::string label;
  std::vector<std::string> paths;  // relative to the run directory
  double wall_clock_s = 0.0;
};

struct RunManifest {
  std::string recipe;
  std::string config_hash;
  std::string tool_version = kToolVersion;
  bool deterministic = true;
  int jobs = 1;
  std::filesystem::path directory;
  std::vector<RunRecord> runs;
  std::vector<std::string> outputs;  // recipe-level files, relative to the run directory
  double wall_clock_s = 0.0;
  nlohmann::json summary;  // also written to summary.json
};

nlohmann::json to_json(const RunManifest& manifest);

/// Output directory resolution: explicit option, spec "output", $PSLAB_OUT/<recipe>, ./pslab-out/<recipe>.
std::filesystem::path resolve_output(const ExperimentSpec& spec, const RunOptions& options);

/// Executes the recipe for every seed (shifted by seed_offset), writes per-run
/// artifacts, summary.json and manifest.json, and returns the manifest.
RunManifest run_experiment(ExperimentSpec spec, const RunOptions& options);

/// Runs fn(0..n-1) on up to `jobs` threads; rethrows the first failure by index.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace pslab::lab
