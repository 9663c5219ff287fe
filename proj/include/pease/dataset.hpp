#pragma once

#include <string>
#include <vector>

#include "pease/rng.hpp"
#include "pease/scene.hpp"

namespace pease {

struct CorpusConfig {
  // With empty directories, a built-in generator supplies amplitude-modulated
  // harmonic "speech" and white noise, one fundamental per synthetic speaker.
  int builtin_speakers = 16;
  std::string speech_dir;  // optional WAVs named <speaker>_<utt>.wav
  std::string noise_dir;
};

struct DatasetGrid {
  std::vector<double> t60 = {0.0, 0.3, 0.6};
  std::vector<double> snr_db = {-10, -5, 0, 5, 10, 15, 20};
  int train = 12, val = 4, test = 4;
};

struct DatasetConfig {
  RoomSpec room;  // t60 supplied per-example by the grid
  ArrayGeometry array;
  CorpusConfig corpus;
  DatasetGrid grid;
  uint64_t seed = 17;
  double duration_s = 3.0;
  int sample_rate = 16000;
  bool allow_repeated_pairs = false;
};

struct ManifestEntry {
  std::string id;
  std::string split;
  std::string mixture_path, target_left_path, target_right_path;  // relative
  MixtureMetadata metadata;
};

struct DatasetSummary {
  std::string out_dir;
  std::vector<ManifestEntry> entries;
  int train = 0, val = 0, test = 0;
};

// Renders all examples and writes float32 WAVs plus one JSONL manifest per
// split ({train,val,test}.jsonl). Speaker sets are disjoint across splits and
// unordered speaker pairs are unique within a split unless relaxed. Each
// example's randomness derives from (seed, split, index) only.
DatasetSummary build_dataset(const DatasetConfig& cfg,
                             const std::string& out_dir);

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries);

// Loads the three waveforms of one entry (paths relative to manifest_dir).
struct LoadedExample {
  Waveform mixture, target_left, target_right;
  MixtureMetadata metadata;
};
LoadedExample load_example(const ManifestEntry& e,
                           const std::string& manifest_dir);

// Built-in corpus signals.
Waveform speech_like(Rng& rng, double f0_hz, double duration_s,
                     int sample_rate);
Waveform white_noise(Rng& rng, double duration_s, int sample_rate);

}  // namespace pease
