#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "livo/dataset.hpp"
#include "livo/errors.hpp"
#include "livo/evaluation.hpp"
#include "livo/pipeline.hpp"

namespace livo::cli {

/// Bad command-line input (unknown scene, conflicting paths, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Failure to create or write an output file.
class IoError : public Error {
 public:
  using Error::Error;
};

struct SimOptions {
  std::string scene;
  std::uint64_t seed = 7;
  std::filesystem::path out;
};
/// Generates a dataset directory with ground truth.
Dataset cmdSim(const SimOptions& opt);

/// Pipeline settings for a dataset: sensors and noise from its calibration,
/// then "key = value" overrides from `config` (may be empty). Throws
/// ConfigError naming the offending key.
PipelineConfig loadRunConfig(const std::filesystem::path& config, const DatasetCalibration& calib);
/// Recognized configuration keys, in documentation order.
std::vector<std::string> runConfigKeys();

struct RunOptions {
  std::filesystem::path dataset;
  std::filesystem::path config;
  std::optional<Mode> mode;  // overrides the config file
  std::uint64_t seed = 0;    // recorded only; the estimator is deterministic
  std::filesystem::path out;
};

struct RunSummary {
  std::size_t records = 0;
  PipelineCounters counters;
  std::filesystem::path trajectory;
  std::filesystem::path diagnostics;
};

/// Replays a dataset through the pipeline in timestamp order. Writes
/// trajectory.txt (TUM) and diagnostics.csv under `out`.
RunSummary cmdRun(const RunOptions& opt);

/// Feeds the merged measurement stream of `d` through `pipeline` and
/// flushes it; the shared core of cmdRun.
std::vector<TrajectoryRecord> replay(const Dataset& d, Pipeline& pipeline);

struct EvalOptions {
  std::filesystem::path trajectory;
  std::filesystem::path groundtruth;
  std::filesystem::path out_csv;  // optional
  AteOptions ate;
};
AteReport cmdEval(const EvalOptions& opt);

void writeTrajectory(std::ostream& os, const std::vector<TrajectoryRecord>& records);
void writeDiagnosticsCsv(std::ostream& os, const std::vector<UpdateDiagnostics>& diagnostics);

/// Full command-line entry point. Returns the process exit code; errors are
/// reported on `err` as "error: <category>: <message>".
int runMain(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace livo::cli
