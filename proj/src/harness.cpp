#include "pease/harness.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "pease/checkpoint.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pease {

namespace {

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  }
}

// j.at with a readable field path in errors.
template <typename T>
T field(const json& j, const std::string& path_desc, const std::string& key,
        T fallback, bool required = false) {
  if (!j.contains(key)) {
    if (required)
      throw std::runtime_error("config: missing field " + path_desc + "." + key);
    return fallback;
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::runtime_error("config: bad field " + path_desc + "." + key +
                             ": " + e.what());
  }
}

}  // namespace

DatasetConfig parse_dataset_config(const std::string& path,
                                   std::optional<uint64_t> seed_override) {
  json j = load_json(path);
  DatasetConfig cfg;
  if (j.contains("room")) {
    const json& r = j["room"];
    auto dims = field<std::vector<double>>(r, "room", "dimensions",
                                           {12.0, 12.5, 3.0});
    if (dims.size() != 3)
      throw std::runtime_error("config: room.dimensions needs 3 values");
    cfg.room.dimensions = Eigen::Vector3d(dims[0], dims[1], dims[2]);
    cfg.room.speed_of_sound = field<double>(r, "room", "speed_of_sound", 343.0);
  }
  if (j.contains("array")) {
    const json& a = j["array"];
    auto pos = field<std::vector<double>>(a, "array", "listener_position",
                                          {5.6, 6.5, 1.5});
    if (pos.size() != 3)
      throw std::runtime_error("config: array.listener_position needs 3 values");
    cfg.array.listener_position = Eigen::Vector3d(pos[0], pos[1], pos[2]);
    cfg.array.head_radius = field<double>(a, "array", "head_radius", 0.0875);
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    cfg.grid.t60 = field<std::vector<double>>(g, "grid", "t60", cfg.grid.t60);
    cfg.grid.snr_db =
        field<std::vector<double>>(g, "grid", "snr_db", cfg.grid.snr_db);
    cfg.grid.train = field<int>(g, "grid", "train", cfg.grid.train);
    cfg.grid.val = field<int>(g, "grid", "val", cfg.grid.val);
    cfg.grid.test = field<int>(g, "grid", "test", cfg.grid.test);
  }
  if (j.contains("corpus")) {
    const json& c = j["corpus"];
    cfg.corpus.builtin_speakers =
        field<int>(c, "corpus", "builtin_speakers", 8);
    cfg.corpus.speech_dir = field<std::string>(c, "corpus", "speech_dir", "");
    cfg.corpus.noise_dir = field<std::string>(c, "corpus", "noise_dir", "");
  }
  cfg.seed = field<uint64_t>(j, "", "seed", 17);
  cfg.duration_s = field<double>(j, "", "duration_s", 3.0);
  cfg.sample_rate = field<int>(j, "", "sample_rate", 16000);
  cfg.allow_repeated_pairs = field<bool>(j, "", "allow_repeated_pairs", false);
  if (seed_override) cfg.seed = *seed_override;
  return cfg;
}

TrainRunConfig parse_train_config(const std::string& path,
                                  std::optional<uint64_t> seed_override) {
  json j = load_json(path);
  TrainRunConfig cfg;
  if (j.contains("model")) {
    const json& m = j["model"];
    cfg.model.tau = field<int>(m, "model", "tau", cfg.model.tau);
    cfg.model.bins = field<int>(m, "model", "bins", cfg.model.bins);
    cfg.model.encoder_channels = field<std::vector<int>>(
        m, "model", "encoder_channels", cfg.model.encoder_channels);
    cfg.model.n_residual_blocks =
        field<int>(m, "model", "n_residual_blocks", cfg.model.n_residual_blocks);
    cfg.model.attention_heads =
        field<int>(m, "model", "attention_heads", cfg.model.attention_heads);
    cfg.model.embed_dim = field<int>(m, "model", "embed_dim", cfg.model.embed_dim);
    cfg.model.decoder_layers =
        field<int>(m, "model", "decoder_layers",
                   static_cast<int>(cfg.model.encoder_channels.size()));
    cfg.model.skip_proj_dim =
        field<int>(m, "model", "skip_proj_dim", cfg.model.embed_dim);
    cfg.model.dropout = field<double>(m, "model", "dropout", cfg.model.dropout);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    cfg.train.learning_rate =
        field<double>(t, "train", "learning_rate", cfg.train.learning_rate);
    cfg.train.lr_halving_patience = field<int>(t, "train", "lr_halving_patience",
                                               cfg.train.lr_halving_patience);
    cfg.train.early_stop_patience = field<int>(t, "train", "early_stop_patience",
                                               cfg.train.early_stop_patience);
    cfg.train.max_epochs = field<int>(t, "train", "max_epochs", cfg.train.max_epochs);
    cfg.train.batch_size = field<int>(t, "train", "batch_size", cfg.train.batch_size);
    cfg.train.seed = field<uint64_t>(t, "train", "seed", 0);
  }
  if (!j.contains("data"))
    throw std::runtime_error("config: missing field data");
  const json& d = j["data"];
  cfg.manifest_dir =
      field<std::string>(d, "data", "manifest_dir", "", true);
  cfg.train_manifest =
      field<std::string>(d, "data", "train_manifest", cfg.train_manifest);
  cfg.val_manifest =
      field<std::string>(d, "data", "val_manifest", cfg.val_manifest);
  if (seed_override) cfg.train.seed = *seed_override;
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

MetricReport evaluate_dataset(const std::vector<ManifestEntry>& manifest,
                              const std::string& manifest_dir,
                              const Params* params,
                              const ModelConfig* model_cfg, bool quiet) {
  if (manifest.empty())
    throw std::invalid_argument("evaluate_dataset: empty manifest");
  if (params && !model_cfg)
    throw std::invalid_argument("evaluate_dataset: params without config");

  MetricReport report;
  report.processed = params != nullptr;
  ArrayGeometry geometry;  // in-ear channel indices

  for (const auto& entry : manifest) {
    ExampleMetrics m;
    m.id = entry.id;
    m.t60 = entry.metadata.t60;
    m.snr_db = entry.metadata.snr_db;
    try {
      LoadedExample ex = load_example(entry, manifest_dir);
      Waveform ear_left = ex.mixture.channel(geometry.in_ear_left);
      Waveform ear_right = ex.mixture.channel(geometry.in_ear_right);
      m.baseline_si_sdr_left = si_sdr(ear_left, ex.target_left);
      m.baseline_si_sdr_right = si_sdr(ear_right, ex.target_right);
      m.baseline_stoi_left = stoi(ear_left, ex.target_left);
      m.baseline_stoi_right = stoi(ear_right, ex.target_right);
      if (params) {
        const StftConfig sc = stft_config_for(*model_cfg);
        ComplexSpectrogram mix = stft(ex.mixture, sc);
        auto [sl, sr] = separate(mix, *params, *model_cfg);
        Waveform wl = istft(sl), wr = istft(sr);
        m.si_sdr_left = si_sdr(wl, ex.target_left);
        m.si_sdr_right = si_sdr(wr, ex.target_right);
        m.stoi_left = stoi(wl, ex.target_left);
        m.stoi_right = stoi(wr, ex.target_right);
        m.processed = true;
      } else {
        m.si_sdr_left = m.baseline_si_sdr_left;
        m.si_sdr_right = m.baseline_si_sdr_right;
        m.stoi_left = m.baseline_stoi_left;
        m.stoi_right = m.baseline_stoi_right;
      }
    } catch (const std::exception& e) {
      m.error = e.what();
      if (!quiet)
        std::cerr << "eval: example " << entry.id << " failed: " << e.what()
                  << "\n";
    }
    report.examples.push_back(std::move(m));
  }
  report.aggregate();
  return report;
}

namespace {

void ensure_writable_dir(const std::string& out_dir, bool overwrite,
                         const std::string& sentinel) {
  fs::create_directories(out_dir);
  if (!overwrite && fs::exists(fs::path(out_dir) / sentinel))
    throw std::runtime_error("output " + out_dir + " already contains " +
                             sentinel + "; pass --overwrite to replace it");
}

}  // namespace

CommandResult cmd_synth(const std::string& config_path,
                        const std::string& out_dir,
                        std::optional<uint64_t> seed, bool overwrite,
                        bool quiet) {
  DatasetConfig cfg = parse_dataset_config(config_path, seed);
  ensure_writable_dir(out_dir, overwrite, "train.jsonl");
  DatasetSummary summary = build_dataset(cfg, out_dir);

  std::ostringstream msg;
  msg << "synthesized " << summary.entries.size() << " examples (train "
      << summary.train << ", val " << summary.val << ", test " << summary.test
      << ") into " << out_dir << "\n";
  msg << "grid: t60 {";
  for (double v : cfg.grid.t60) msg << " " << v;
  msg << " } x snr_db {";
  for (double v : cfg.grid.snr_db) msg << " " << v;
  msg << " }, seed " << cfg.seed;
  if (!quiet) std::cout << msg.str() << "\n";
  return {out_dir, msg.str()};
}

CommandResult cmd_train(const std::string& config_path,
                        const std::string& out_dir,
                        std::optional<std::string> resume_checkpoint,
                        bool quiet) {
  TrainRunConfig cfg = parse_train_config(config_path, std::nullopt);
  auto train_m = read_manifest(
      (fs::path(cfg.manifest_dir) / cfg.train_manifest).string());
  auto val_m =
      read_manifest((fs::path(cfg.manifest_dir) / cfg.val_manifest).string());

  FitOptions opts;
  opts.out_dir = out_dir;
  opts.quiet = quiet;
  if (resume_checkpoint) opts.resume_from = resume_checkpoint;
  FitResult res =
      fit(train_m, val_m, cfg.manifest_dir, cfg.model, cfg.train, opts);

  std::ostringstream msg;
  msg << "trained " << res.history.size() << " epochs"
      << (res.early_stopped ? " (early stop)" : "") << "; best checkpoint "
      << res.best_checkpoint;
  if (!quiet) std::cout << msg.str() << "\n";
  return {out_dir, msg.str()};
}

CommandResult cmd_eval(const std::string& checkpoint_path,
                       const std::string& manifest_path,
                       const std::string& out_dir, bool overwrite, bool quiet) {
  auto manifest = read_manifest(manifest_path);
  const std::string manifest_dir = fs::path(manifest_path).parent_path().string();
  ensure_writable_dir(out_dir, overwrite, "report.json");

  MetricReport report;
  if (checkpoint_path.empty()) {
    report = evaluate_dataset(manifest, manifest_dir, nullptr, nullptr, quiet);
  } else {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    report = evaluate_dataset(manifest, manifest_dir, &ckpt.params, &ckpt.model,
                              quiet);
  }
  write_report_json((fs::path(out_dir) / "report.json").string(), report);
  std::string table = render_table(report);
  std::ofstream((fs::path(out_dir) / "table.txt").string()) << table;
  if (!quiet) std::cout << table;
  return {out_dir, table};
}

CommandResult cmd_report(const std::string& report_path,
                         const std::string& out_dir, bool quiet) {
  MetricReport report = read_report_json(report_path);
  if (report.examples.empty())
    throw std::runtime_error("cmd_report: empty report");
  fs::create_directories(out_dir);
  write_snr_plot((fs::path(out_dir) / "snr.svg").string(), report);
  write_t60_plot((fs::path(out_dir) / "t60.svg").string(), report);
  std::string table = render_table(report);
  std::ofstream((fs::path(out_dir) / "table.txt").string()) << table;
  if (!quiet) std::cout << table;
  return {out_dir, "wrote plots and tables to " + out_dir};
}

}  // namespace pease
