#pragma once

#include <optional>
#include <string>

#include "fdg/config.hpp"
#include "fdg/dataio.hpp"
#include "fdg/trainers.hpp"
#include "fdg/training_log.hpp"

#include <json.hpp>

namespace fdg {

struct EvalPoint {
  long iteration = 0;
  double loss = 0.0;
  double top1_error = 0.0;
};

struct TrainOutcome {
  TrainingLog log;
  std::optional<EvalResult> test_eval;
  std::vector<EvalPoint> eval_history;
  ThroughputReport throughput;  // populated on freerun
  double wall_seconds = 0.0;
  long iterations = 0;
  std::string weights_blob;  // serialized checkpoint when save_weights is on
};

// Builds datasets + network from the config and runs the selected trainer.
// Precision picks the f64 or f32 instantiation of the engine.
TrainOutcome run_training(const RunConfig& cfg);

nlohmann::json summary_json(const RunConfig& cfg, const TrainOutcome& outcome,
                            std::optional<double> baseline_wall_seconds = std::nullopt);

// Writes config snapshot, log.csv and summary.json into the resolved output
// directory (FDG_OUTPUT_ROOT prefixes relative paths). Returns the directory.
std::string write_run_artifacts(const RunConfig& cfg, const TrainOutcome& outcome,
                                const nlohmann::json& summary);

std::string resolve_output_dir(const std::string& dir);

// Entry point behind tools/fdg. Returns the process exit status.
int cli_main(int argc, char** argv);

}  // namespace fdg
