#pragma once

#include <optional>
#include <string>

#include "pease/dataset.hpp"
#include "pease/metrics.hpp"
#include "pease/report.hpp"
#include "pease/train.hpp"

namespace pease {

// Scene/dataset config file (JSON). Throws std::runtime_error with the field
// path on schema violations.
DatasetConfig parse_dataset_config(const std::string& path,
                                   std::optional<uint64_t> seed_override);

struct TrainRunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string manifest_dir;
  std::string train_manifest = "train.jsonl";
  std::string val_manifest = "val.jsonl";
};
TrainRunConfig parse_train_config(const std::string& path,
                                  std::optional<uint64_t> seed_override);

// Per-example metrics over a manifest. With params == nullptr the report is
// the unprocessed in-ear baseline only. Missing files are recorded as
// per-example errors; an empty successful set is an error.
MetricReport evaluate_dataset(const std::vector<ManifestEntry>& manifest,
                              const std::string& manifest_dir,
                              const Params* params,
                              const ModelConfig* model_cfg, bool quiet = true);

struct CommandResult {
  std::string out_dir;
  std::string message;
};

CommandResult cmd_synth(const std::string& config_path,
                        const std::string& out_dir,
                        std::optional<uint64_t> seed, bool overwrite,
                        bool quiet);
CommandResult cmd_train(const std::string& config_path,
                        const std::string& out_dir,
                        std::optional<std::string> resume_checkpoint,
                        bool quiet);
CommandResult cmd_eval(const std::string& checkpoint_path,  // empty = baseline
                       const std::string& manifest_path,
                       const std::string& out_dir, bool overwrite, bool quiet);
CommandResult cmd_report(const std::string& report_path,
                         const std::string& out_dir, bool quiet);

}  // namespace pease
