#include "pease/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>
#include <stdexcept>

namespace fs = std::filesystem;

namespace pease {

void TrainConfig::validate() const {
  if (learning_rate <= 0.0)
    throw std::invalid_argument("TrainConfig: learning_rate must be positive");
  if (lr_halving_patience <= 0 || early_stop_patience <= 0)
    throw std::invalid_argument("TrainConfig: patiences must be positive");
  if (max_epochs <= 0 || batch_size <= 0)
    throw std::invalid_argument("TrainConfig: max_epochs/batch_size positive");
  if (lr_halving_patience >= early_stop_patience)
    throw std::invalid_argument(
        "TrainConfig: lr halving must come before early stopping");
}

StftConfig stft_config_for(const ModelConfig& cfg) {
  const int fft = (cfg.bins - 1) * 2;
  if (fft < 4 || (fft & (fft - 1)) != 0)
    throw std::invalid_argument(
        "stft_config_for: bins must be fft/2+1 for a power-of-two fft");
  StftConfig sc;
  sc.window_length = fft;
  sc.fft_size = fft;
  sc.hop = fft / 2;
  return sc;
}

namespace {

struct ExampleGrads {
  std::map<std::string, Eigen::MatrixXd> grads;
  double loss = 0.0;
};

ExampleGrads backprop_example(const TrainBatchExample& ex, const Params& params,
                              const ModelConfig& model_cfg, Rng& dropout_rng) {
  const StftConfig sc = stft_config_for(model_cfg);
  ComplexSpectrogram mix = stft(ex.mixture, sc);

  ForwardPass fp = forward(pack_input(mix), params, model_cfg, Mode::Train,
                           &dropout_rng, true);

  auto wrap = [&](const Eigen::MatrixXd& out) {
    ComplexSpectrogram s;
    s.config = sc;
    s.sample_rate = mix.sample_rate;
    s.num_samples = mix.num_samples;
    s.values = {output_to_complex(out, model_cfg.bins)};
    return s;
  };
  ComplexSpectrogram est_l = wrap(fp.out_left->value);
  ComplexSpectrogram est_r = wrap(fp.out_right->value);
  Waveform wl = istft(est_l);
  Waveform wr = istft(est_r);

  Eigen::VectorXd gl, gr;
  double loss = separation_loss_smooth(
      wl.samples.row(0).transpose(), wr.samples.row(0).transpose(),
      ex.target_left.samples.row(0).transpose(),
      ex.target_right.samples.row(0).transpose(), &gl, &gr);
  if (!std::isfinite(loss))
    throw std::runtime_error("train_step: non-finite loss on example " + ex.id);

  // Waveform gradients -> spectrogram gradients -> tape.
  auto seed = [&](const ad::NodePtr& node, const Eigen::VectorXd& g,
                  const ComplexSpectrogram& est) {
    Eigen::MatrixXcd gc = istft_adjoint(g.transpose(), est)[0];
    Eigen::MatrixXd gout(gc.rows(), 2 * gc.cols());
    gout.leftCols(gc.cols()) = gc.real();
    gout.rightCols(gc.cols()) = gc.imag();
    ad::Tape::seed_grad(node, gout);
  };
  seed(fp.out_left, gl, est_l);
  seed(fp.out_right, gr, est_r);
  fp.tape.backward();

  ExampleGrads out;
  out.loss = loss;
  for (const auto& [name, node] : fp.params) {
    if (node->grad.size() == 0)
      out.grads[name] = Eigen::MatrixXd::Zero(node->value.rows(), node->value.cols());
    else
      out.grads[name] = node->grad;
  }
  return out;
}

}  // namespace

double train_step(const std::vector<TrainBatchExample>& batch, Params& params,
                  AdamState& adam, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg, double lr, Rng& dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");

  std::map<std::string, Eigen::MatrixXd> grads;
  double loss = 0.0;
  for (const auto& ex : batch) {
    ExampleGrads eg = backprop_example(ex, params, model_cfg, dropout_rng);
    loss += eg.loss;
    for (auto& [name, g] : eg.grads) {
      auto it = grads.find(name);
      if (it == grads.end())
        grads[name] = std::move(g);
      else
        it->second += g;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  loss *= inv_n;

  if (adam.m.empty()) {
    for (const auto& [name, p] : params.tensors) {
      adam.m[name] = Eigen::MatrixXd::Zero(p.rows(), p.cols());
      adam.v[name] = Eigen::MatrixXd::Zero(p.rows(), p.cols());
    }
  }
  adam.step += 1;
  const double bc1 = 1.0 - std::pow(train_cfg.beta1, static_cast<double>(adam.step));
  const double bc2 = 1.0 - std::pow(train_cfg.beta2, static_cast<double>(adam.step));
  for (auto& [name, p] : params.tensors) {
    Eigen::MatrixXd g = grads.at(name) * inv_n;
    Eigen::MatrixXd& m = adam.m.at(name);
    Eigen::MatrixXd& v = adam.v.at(name);
    m = train_cfg.beta1 * m + (1.0 - train_cfg.beta1) * g;
    v = (train_cfg.beta2 * v).array() +
        (1.0 - train_cfg.beta2) * g.array().square();
    Eigen::ArrayXXd mhat = m.array() / bc1;
    Eigen::ArrayXXd vhat = v.array() / bc2;
    p.array() -= lr * mhat / (vhat.sqrt() + train_cfg.adam_eps);
  }
  if (!params.finite())
    throw std::runtime_error("train_step: parameters became non-finite");
  return loss;
}

double validate(const std::vector<ManifestEntry>& manifest,
                const std::string& manifest_dir, const Params& params,
                const ModelConfig& model_cfg) {
  if (manifest.empty()) throw std::invalid_argument("validate: empty manifest");
  const StftConfig sc = stft_config_for(model_cfg);
  double sum = 0.0;
  for (const auto& e : manifest) {
    LoadedExample ex = load_example(e, manifest_dir);
    ComplexSpectrogram mix = stft(ex.mixture, sc);
    auto [sl, sr] = separate(mix, params, model_cfg);
    sum += 0.5 * (si_sdr(istft(sl), ex.target_left) +
                  si_sdr(istft(sr), ex.target_right));
  }
  return sum / static_cast<double>(manifest.size());
}

FitResult fit(const std::vector<ManifestEntry>& train_manifest,
              const std::vector<ManifestEntry>& val_manifest,
              const std::string& manifest_dir, const ModelConfig& model_cfg,
              const TrainConfig& train_cfg, const FitOptions& opts) {
  train_cfg.validate();
  model_cfg.validate();
  if (train_manifest.empty() || val_manifest.empty())
    throw std::invalid_argument("fit: empty manifest");

  {  // Disjointness is a data-hygiene contract; warn, don't fail.
    std::set<std::string> train_spk, val_spk;
    for (const auto& e : train_manifest) {
      train_spk.insert(e.metadata.speaker_left);
      train_spk.insert(e.metadata.speaker_right);
    }
    for (const auto& e : val_manifest) {
      val_spk.insert(e.metadata.speaker_left);
      val_spk.insert(e.metadata.speaker_right);
    }
    for (const auto& s : val_spk)
      if (train_spk.count(s) && !opts.quiet)
        std::cerr << "warning: speaker " << s
                  << " appears in both train and val splits\n";
  }

  fs::create_directories(opts.out_dir);
  Checkpoint ckpt;
  ckpt.model = model_cfg;
  ckpt.train = train_cfg;
  if (opts.resume_from) {
    ckpt = load_checkpoint(*opts.resume_from);
  } else {
    ckpt.params = init_params(model_cfg, train_cfg.seed);
    ckpt.state.lr = train_cfg.learning_rate;
  }

  const std::string best_path = (fs::path(opts.out_dir) / "best.ckpt").string();
  const std::string last_path = (fs::path(opts.out_dir) / "last.ckpt").string();
  std::ofstream log((fs::path(opts.out_dir) / "train_log.jsonl").string(),
                    opts.resume_from ? std::ios::app : std::ios::out);

  FitResult result;
  result.history = ckpt.state.history;

  for (int epoch = ckpt.state.epoch + 1; epoch <= train_cfg.max_epochs;
       ++epoch) {
    // Epoch-scoped streams make runs resumable at any checkpoint boundary.
    Rng shuffle_rng(derive_seed(train_cfg.seed, 0x65706f63ULL, epoch));
    Rng dropout_rng(derive_seed(train_cfg.seed, 0x64726f70ULL, epoch));

    std::vector<size_t> order(train_manifest.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.uniform_int(
                                  0, static_cast<int64_t>(i) - 1))]);

    double epoch_loss = 0.0;
    int steps = 0;
    for (size_t at = 0; at < order.size();
         at += static_cast<size_t>(train_cfg.batch_size)) {
      std::vector<TrainBatchExample> batch;
      for (size_t i = at;
           i < std::min(order.size(), at + static_cast<size_t>(train_cfg.batch_size));
           ++i) {
        LoadedExample le = load_example(train_manifest[order[i]], manifest_dir);
        batch.push_back({std::move(le.mixture), std::move(le.target_left),
                         std::move(le.target_right),
                         train_manifest[order[i]].id});
      }
      epoch_loss += train_step(batch, ckpt.params, ckpt.adam, model_cfg,
                               train_cfg, ckpt.state.lr, dropout_rng);
      steps += 1;
    }
    epoch_loss /= steps;

    const double val =
        opts.validator
            ? opts.validator(ckpt.params, epoch)
            : validate(val_manifest, manifest_dir, ckpt.params, model_cfg);

    EpochRecord rec{epoch, ckpt.state.lr, epoch_loss, val};
    ckpt.state.history.push_back(rec);
    result.history.push_back(rec);
    log << nlohmann::json{{"epoch", epoch},
                          {"lr", rec.lr},
                          {"train_loss", rec.train_loss},
                          {"val_si_sdr", rec.val_si_sdr}}
            .dump()
        << "\n"
        << std::flush;
    if (!opts.quiet)
      std::cerr << "epoch " << epoch << " lr " << rec.lr << " train_loss "
                << rec.train_loss << " val_si_sdr " << rec.val_si_sdr << "\n";
    if (opts.on_epoch) opts.on_epoch(rec);

    // Strict improvement resets both counters (zero tolerance).
    if (val > ckpt.state.best_val_si_sdr) {
      ckpt.state.best_val_si_sdr = val;
      ckpt.state.stale_lr = 0;
      ckpt.state.stale_stop = 0;
      Checkpoint best = ckpt;
      best.state.epoch = epoch;
      save_checkpoint(best_path, best);
      result.best_checkpoint = best_path;
    } else {
      ckpt.state.stale_lr += 1;
      ckpt.state.stale_stop += 1;
    }
    // Halving is skipped on the epoch that triggers early stopping.
    if (ckpt.state.stale_stop < train_cfg.early_stop_patience &&
        ckpt.state.stale_lr >= train_cfg.lr_halving_patience) {
      ckpt.state.lr *= 0.5;
      ckpt.state.stale_lr = 0;
    }

    ckpt.state.epoch = epoch;
    save_checkpoint(last_path, ckpt);
    result.last_checkpoint = last_path;

    if (ckpt.state.stale_stop >= train_cfg.early_stop_patience) {
      result.early_stopped = true;
      break;
    }
  }
  if (result.best_checkpoint.empty()) result.best_checkpoint = best_path;
  return result;
}

}  // namespace pease
