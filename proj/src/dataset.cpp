#include "pease/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <stdexcept>

#include "pease/wav_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pease {

Waveform speech_like(Rng& rng, double f0_hz, double duration_s,
                     int sample_rate) {
  const Eigen::Index n =
      static_cast<Eigen::Index>(std::llround(duration_s * sample_rate));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);

  // Harmonic stack with formant-like bumps, syllabic AM and slow vibrato.
  const double am_rate = rng.uniform(2.0, 5.0);
  const double am_phase = rng.uniform(0.0, 2.0 * M_PI);
  const double vib_rate = rng.uniform(4.0, 7.0);
  const double vib_depth = rng.uniform(0.005, 0.02);
  const double f1 = rng.uniform(400.0, 800.0);
  const double f2 = rng.uniform(1200.0, 2400.0);

  struct Partial {
    double freq, amp, phase;
  };
  std::vector<Partial> partials;
  for (int h = 1; h * f0_hz < 4500.0; ++h) {
    double f = h * f0_hz;
    double formant = std::exp(-std::pow((f - f1) / 300.0, 2)) +
                     0.7 * std::exp(-std::pow((f - f2) / 500.0, 2));
    double amp = (0.3 + formant) / h;
    partials.push_back({f, amp, rng.uniform(0.0, 2.0 * M_PI)});
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double vib = 1.0 + vib_depth * std::sin(2.0 * M_PI * vib_rate * t);
    double env = 0.5 * (1.0 + std::sin(2.0 * M_PI * am_rate * t + am_phase));
    env = 0.15 + 0.85 * env * env;
    double s = 0.0;
    for (const auto& p : partials)
      s += p.amp * std::sin(2.0 * M_PI * p.freq * vib * t + p.phase);
    x[i] = env * s;
  }
  // Touch of aspiration noise keeps the spectrum broadband.
  for (Eigen::Index i = 0; i < n; ++i) x[i] += 0.01 * rng.normal();

  x *= 0.1 / std::sqrt(x.squaredNorm() / n);  // fixed RMS
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples = x.transpose();
  return w;
}

Waveform white_noise(Rng& rng, double duration_s, int sample_rate) {
  const Eigen::Index n =
      static_cast<Eigen::Index>(std::llround(duration_s * sample_rate));
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = 0.1 * rng.normal();
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples = x.transpose();
  return w;
}

namespace {

struct Corpus {
  // speaker id -> utterance files; empty files means built-in speaker
  std::vector<std::pair<std::string, std::vector<std::string>>> speakers;
  std::vector<std::string> noise_files;  // empty -> built-in white noise
  bool builtin = false;
};

Corpus load_corpus(const CorpusConfig& cfg) {
  Corpus c;
  if (cfg.speech_dir.empty()) {
    c.builtin = true;
    for (int i = 0; i < cfg.builtin_speakers; ++i)
      c.speakers.push_back({"spk" + std::to_string(i), {}});
    return c;
  }
  std::map<std::string, std::vector<std::string>> by_speaker;
  for (const auto& e : fs::directory_iterator(cfg.speech_dir)) {
    if (e.path().extension() != ".wav") continue;
    std::string stem = e.path().stem().string();
    std::string spk = stem.substr(0, stem.find('_'));
    by_speaker[spk].push_back(e.path().string());
  }
  for (auto& [spk, files] : by_speaker) {
    std::sort(files.begin(), files.end());
    c.speakers.push_back({spk, files});
  }
  if (!cfg.noise_dir.empty()) {
    for (const auto& e : fs::directory_iterator(cfg.noise_dir))
      if (e.path().extension() == ".wav")
        c.noise_files.push_back(e.path().string());
    std::sort(c.noise_files.begin(), c.noise_files.end());
  }
  return c;
}

double builtin_f0(int speaker_index) {
  return 95.0 * std::pow(1.12, speaker_index);
}

Waveform fetch_speech(const Corpus& corpus, int speaker, Rng& rng,
                      double duration_s, int rate) {
  const auto& [name, files] = corpus.speakers[speaker];
  if (files.empty()) return speech_like(rng, builtin_f0(speaker), duration_s, rate);
  Waveform w = read_wav(files[static_cast<size_t>(
                            rng.uniform_int(0, static_cast<int64_t>(files.size()) - 1))],
                        rate);
  const Eigen::Index need =
      static_cast<Eigen::Index>(std::llround(duration_s * rate));
  if (w.length() < need)
    throw std::runtime_error("corpus clip shorter than scene duration: " + name);
  Eigen::Index start = rng.uniform_int(0, w.length() - need);
  Waveform out;
  out.sample_rate = rate;
  out.samples = w.samples.row(0).segment(start, need);
  return out;
}

Waveform fetch_noise(const Corpus& corpus, Rng& rng, double duration_s,
                     int rate) {
  if (corpus.noise_files.empty()) return white_noise(rng, duration_s, rate);
  Waveform w = read_wav(corpus.noise_files[static_cast<size_t>(rng.uniform_int(
                            0, static_cast<int64_t>(corpus.noise_files.size()) - 1))],
                        rate);
  const Eigen::Index need =
      static_cast<Eigen::Index>(std::llround(duration_s * rate));
  if (w.length() < need)
    throw std::runtime_error("noise clip shorter than scene duration");
  Eigen::Index start = rng.uniform_int(0, w.length() - need);
  Waveform out;
  out.sample_rate = rate;
  out.samples = w.samples.row(0).segment(start, need);
  return out;
}

json entry_to_json(const ManifestEntry& e) {
  return json{{"id", e.id},
              {"split", e.split},
              {"mixture", e.mixture_path},
              {"target_left", e.target_left_path},
              {"target_right", e.target_right_path},
              {"seed", e.metadata.seed},
              {"t60", e.metadata.t60},
              {"snr_db", e.metadata.snr_db},
              {"distance_left", e.metadata.distance_left},
              {"distance_right", e.metadata.distance_right},
              {"distance_noise", e.metadata.distance_noise},
              {"noise_azimuth_deg", e.metadata.noise_azimuth_deg},
              {"speaker_left", e.metadata.speaker_left},
              {"speaker_right", e.metadata.speaker_right},
              {"normalization_gain", e.metadata.normalization_gain}};
}

ManifestEntry entry_from_json(const json& j) {
  ManifestEntry e;
  e.id = j.at("id");
  e.split = j.at("split");
  e.mixture_path = j.at("mixture");
  e.target_left_path = j.at("target_left");
  e.target_right_path = j.at("target_right");
  e.metadata.id = e.id;
  e.metadata.seed = j.at("seed");
  e.metadata.t60 = j.at("t60");
  e.metadata.snr_db = j.at("snr_db");
  e.metadata.distance_left = j.at("distance_left");
  e.metadata.distance_right = j.at("distance_right");
  e.metadata.distance_noise = j.at("distance_noise");
  e.metadata.noise_azimuth_deg = j.at("noise_azimuth_deg");
  e.metadata.speaker_left = j.at("speaker_left");
  e.metadata.speaker_right = j.at("speaker_right");
  e.metadata.normalization_gain = j.at("normalization_gain");
  return e;
}

}  // namespace

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path);
  for (const auto& e : entries) out << entry_to_json(e).dump() << "\n";
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    entries.push_back(entry_from_json(json::parse(line)));
  }
  return entries;
}

LoadedExample load_example(const ManifestEntry& e,
                           const std::string& manifest_dir) {
  LoadedExample ex;
  fs::path base(manifest_dir);
  ex.mixture = read_wav((base / e.mixture_path).string());
  ex.target_left = read_wav((base / e.target_left_path).string());
  ex.target_right = read_wav((base / e.target_right_path).string());
  ex.metadata = e.metadata;
  return ex;
}

DatasetSummary build_dataset(const DatasetConfig& cfg,
                             const std::string& out_dir) {
  const Corpus corpus = load_corpus(cfg.corpus);
  const int n_speakers = static_cast<int>(corpus.speakers.size());
  if (n_speakers < 2)
    throw std::invalid_argument("build_dataset: need at least 2 speakers");

  // Disjoint speaker subsets per split: val and test take the minimum head
  // count whose unique-pair supply covers their example counts, train keeps
  // the rest.
  struct Split {
    std::string name;
    int count;
    std::vector<int> speakers;
  };
  std::vector<Split> splits{{"train", cfg.grid.train, {}},
                            {"val", cfg.grid.val, {}},
                            {"test", cfg.grid.test, {}}};
  auto speakers_needed = [](int count) {
    if (count <= 0) return 0;
    int n = 2;
    while (n * (n - 1) / 2 < count) ++n;
    return n;
  };
  const int need_val = speakers_needed(cfg.grid.val);
  const int need_test = speakers_needed(cfg.grid.test);
  const int need_train = speakers_needed(cfg.grid.train);
  if (need_val + need_test + need_train <= n_speakers) {
    for (int s = 0; s < n_speakers; ++s) {
      if (s < need_val)
        splits[1].speakers.push_back(s);
      else if (s < need_val + need_test)
        splits[2].speakers.push_back(s);
      else
        splits[0].speakers.push_back(s);
    }
  } else if (cfg.allow_repeated_pairs) {
    // Scarce-corpus fallback: splits share the full speaker set.
    for (auto& split : splits)
      for (int s = 0; s < n_speakers; ++s) split.speakers.push_back(s);
  } else {
    throw std::invalid_argument(
        "build_dataset: " + std::to_string(need_val + need_test + need_train) +
        " distinct speakers needed for disjoint splits with unique pairs, "
        "got " + std::to_string(n_speakers) +
        "; add speakers or set allow_repeated_pairs");
  }

  fs::create_directories(fs::path(out_dir) / "audio");

  DatasetSummary summary;
  summary.out_dir = out_dir;

  for (size_t si = 0; si < splits.size(); ++si) {
    auto& split = splits[si];
    // Unique unordered pairs, order shuffled from a split-level stream.
    std::vector<std::pair<int, int>> pairs;
    for (size_t a = 0; a < split.speakers.size(); ++a)
      for (size_t b = a + 1; b < split.speakers.size(); ++b)
        pairs.push_back({split.speakers[a], split.speakers[b]});
    if (static_cast<int>(pairs.size()) < split.count &&
        !cfg.allow_repeated_pairs)
      throw std::invalid_argument(
          "build_dataset: split '" + split.name + "' needs " +
          std::to_string(split.count) + " unique speaker pairs but only " +
          std::to_string(pairs.size()) +
          " are possible; add speakers or set allow_repeated_pairs");
    Rng pair_rng(derive_seed(cfg.seed, si, 0x70616972ULL));
    for (size_t i = pairs.size(); i > 1; --i)
      std::swap(pairs[i - 1],
                pairs[static_cast<size_t>(pair_rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);

    for (int i = 0; i < split.count; ++i) {
      Rng rng(derive_seed(cfg.seed, si, static_cast<uint64_t>(i) + 1));
      auto [spk_a, spk_b] = pairs[static_cast<size_t>(i) % pairs.size()];
      if (rng.uniform() < 0.5) std::swap(spk_a, spk_b);  // who gets which ear

      // Grid coverage is deterministic by index so every value appears.
      const double t60 =
          cfg.grid.t60[static_cast<size_t>(i) % cfg.grid.t60.size()];
      const double snr = cfg.grid.snr_db[(static_cast<size_t>(i) /
                                          cfg.grid.t60.size()) %
                                         cfg.grid.snr_db.size()];

      SceneSpec scene;
      scene.room = cfg.room;
      scene.room.t60 = t60;
      scene.array = cfg.array;
      scene.snr_db = snr;
      scene.seed = derive_seed(cfg.seed, si, static_cast<uint64_t>(i) + 1);
      scene.duration_s = cfg.duration_s;
      scene.sample_rate = cfg.sample_rate;

      scene.talker_left.kind = SourceSpec::Kind::Speech;
      scene.talker_left.azimuth_deg = -60.0;
      scene.talker_left.distance_m = rng.uniform(1.0, 2.0);
      scene.talker_left.signal =
          fetch_speech(corpus, spk_a, rng, cfg.duration_s, cfg.sample_rate);

      scene.talker_right.kind = SourceSpec::Kind::Speech;
      scene.talker_right.azimuth_deg = 60.0;
      scene.talker_right.distance_m = rng.uniform(1.0, 2.0);
      scene.talker_right.signal =
          fetch_speech(corpus, spk_b, rng, cfg.duration_s, cfg.sample_rate);

      // Noise azimuth avoids the talker cones (+-60 within 5 degrees).
      double naz;
      do {
        naz = rng.uniform(-180.0, 180.0);
      } while (std::abs(std::abs(naz) - 60.0) < 5.0);
      scene.noise.kind = SourceSpec::Kind::Noise;
      scene.noise.azimuth_deg = naz;
      scene.noise.distance_m = rng.uniform(2.0, 5.0);
      scene.noise.signal = fetch_noise(corpus, rng, cfg.duration_s, cfg.sample_rate);

      MixtureExample ex = render_scene(scene);
      ex.metadata.speaker_left = corpus.speakers[static_cast<size_t>(spk_a)].first;
      ex.metadata.speaker_right = corpus.speakers[static_cast<size_t>(spk_b)].first;

      ManifestEntry entry;
      entry.id = split.name + "_" + std::to_string(i);
      entry.split = split.name;
      ex.metadata.id = entry.id;
      entry.mixture_path = "audio/" + entry.id + "_mix.wav";
      entry.target_left_path = "audio/" + entry.id + "_left.wav";
      entry.target_right_path = "audio/" + entry.id + "_right.wav";
      entry.metadata = ex.metadata;

      write_wav((fs::path(out_dir) / entry.mixture_path).string(), ex.mixture);
      write_wav((fs::path(out_dir) / entry.target_left_path).string(),
                ex.target_left);
      write_wav((fs::path(out_dir) / entry.target_right_path).string(),
                ex.target_right);
      summary.entries.push_back(entry);
    }
  }

  for (const auto& split : splits) {
    std::vector<ManifestEntry> part;
    for (const auto& e : summary.entries)
      if (e.split == split.name) part.push_back(e);
    write_manifest((fs::path(out_dir) / (split.name + ".jsonl")).string(), part);
  }
  summary.train = cfg.grid.train;
  summary.val = cfg.grid.val;
  summary.test = cfg.grid.test;
  return summary;
}

}  // namespace pease
