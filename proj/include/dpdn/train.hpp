#pragma once

#include <string>

#include "dpdn/config.hpp"
#include "dpdn/datagen.hpp"
#include "dpdn/evalharness.hpp"

namespace dpdn::cli {

struct TrainOutputs {
  std::string checkpoint;
  std::string log_csv;
  std::string config_echo;
  int iterations_run = 0;
};

// Dual-transform training per the run config: every batch instance is
// transformed twice and fed through the network in parallel; labeled
// instances contribute the supervised objective, unlabeled ones the
// inter/intra consistency objective, assembled with 1/B1 and 1/B2 weights.
// Writes the final checkpoint at out_ckpt, interval checkpoints alongside,
// a per-iteration loss log (<out>.log.csv) and a config echo
// (<out>.config.json). Deterministic in (config, data, seed).
TrainOutputs run_training(const RunConfig& cfg, const std::string& data_dir,
                          const std::string& out_ckpt);

struct EvalOutputs {
  evalharness::MetricsReport head;
  evalharness::MetricsReport umeyama;
  std::string head_json;
  std::string head_csv;
  std::string umeyama_json;
  std::string umeyama_csv;
};

// Runs the network on every real_test record and scores both the estimator
// heads and the Umeyama re-solve of the predicted correspondence. Throws
// CheckpointMismatch when the checkpoint layout disagrees with the config.
EvalOutputs run_evaluation(const std::string& ckpt_path,
                           const std::string& data_dir, const RunConfig& cfg,
                           const std::string& report_path);

// Convenience wrapper used by tools and tests: generate the dataset for a
// config if the directory does not hold one yet.
void ensure_dataset(const RunConfig& cfg, const std::string& data_dir);

}  // namespace dpdn::cli
