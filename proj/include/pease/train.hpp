#pragma once

#include <functional>
#include <optional>

#include "pease/checkpoint.hpp"
#include "pease/dataset.hpp"
#include "pease/metrics.hpp"
#include "pease/model.hpp"
#include "pease/stft.hpp"

namespace pease {

// STFT framing implied by the model's bin count (power-of-two FFT).
StftConfig stft_config_for(const ModelConfig& cfg);

struct TrainBatchExample {
  Waveform mixture;       // 8 channels
  Waveform target_left;   // 1 channel
  Waveform target_right;  // 1 channel
  std::string id;
};

// One optimizer step: on-the-fly STFT -> forward -> istft -> negative SI-SDR
// loss, gradients averaged over the batch, Adam update in place. Returns the
// batch loss. Throws on a non-finite loss, naming the offending example.
double train_step(const std::vector<TrainBatchExample>& batch, Params& params,
                  AdamState& adam, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg, double lr, Rng& dropout_rng);

// Mean reporting SI-SDR over both sources of a set of examples, eval mode.
double validate(const std::vector<ManifestEntry>& manifest,
                const std::string& manifest_dir, const Params& params,
                const ModelConfig& model_cfg);

struct FitResult {
  std::string best_checkpoint;
  std::string last_checkpoint;
  std::vector<EpochRecord> history;
  bool early_stopped = false;
};

struct FitOptions {
  std::string out_dir;
  std::optional<std::string> resume_from;  // a last.ckpt to continue
  // Test hook replacing the real validation pass.
  std::function<double(const Params&, int epoch)> validator;
  std::function<void(const EpochRecord&)> on_epoch;
  bool quiet = false;
};

FitResult fit(const std::vector<ManifestEntry>& train_manifest,
              const std::vector<ManifestEntry>& val_manifest,
              const std::string& manifest_dir, const ModelConfig& model_cfg,
              const TrainConfig& train_cfg, const FitOptions& opts);

}  // namespace pease
