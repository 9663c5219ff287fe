#include "pease/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

using nlohmann::json;

namespace pease {

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  const auto* bytes = reinterpret_cast<const uint8_t*>(m.data());
  return json{{"rows", m.rows()},
              {"cols", m.cols()},
              {"data", json::binary(std::vector<uint8_t>(
                           bytes, bytes + sizeof(double) * m.size()))}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  Eigen::MatrixXd m(j.at("rows").get<Eigen::Index>(),
                    j.at("cols").get<Eigen::Index>());
  const auto& bin = j.at("data").get_binary();
  if (bin.size() != sizeof(double) * static_cast<size_t>(m.size()))
    throw std::runtime_error("checkpoint: tensor byte count mismatch");
  std::memcpy(m.data(), bin.data(), bin.size());
  return m;
}

json tensors_to_json(const std::map<std::string, Eigen::MatrixXd>& t) {
  json j = json::object();
  for (const auto& [name, m] : t) j[name] = matrix_to_json(m);
  return j;
}

std::map<std::string, Eigen::MatrixXd> tensors_from_json(const json& j) {
  std::map<std::string, Eigen::MatrixXd> t;
  for (auto it = j.begin(); it != j.end(); ++it)
    t[it.key()] = matrix_from_json(it.value());
  return t;
}

json model_cfg_to_json(const ModelConfig& c) {
  return json{{"tau", c.tau},
              {"bins", c.bins},
              {"encoder_channels", c.encoder_channels},
              {"n_residual_blocks", c.n_residual_blocks},
              {"attention_heads", c.attention_heads},
              {"embed_dim", c.embed_dim},
              {"decoder_layers", c.decoder_layers},
              {"skip_proj_dim", c.skip_proj_dim},
              {"dropout", c.dropout}};
}

ModelConfig model_cfg_from_json(const json& j) {
  ModelConfig c;
  c.tau = j.at("tau");
  c.bins = j.at("bins");
  c.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
  c.n_residual_blocks = j.at("n_residual_blocks");
  c.attention_heads = j.at("attention_heads");
  c.embed_dim = j.at("embed_dim");
  c.decoder_layers = j.at("decoder_layers");
  c.skip_proj_dim = j.at("skip_proj_dim");
  c.dropout = j.at("dropout");
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json j;
  j["format"] = "pease8-checkpoint";
  j["version"] = ckpt.version;
  j["model"] = model_cfg_to_json(ckpt.model);
  j["params"] = tensors_to_json(ckpt.params.tensors);
  j["train"] = {{"learning_rate", ckpt.train.learning_rate},
                {"lr_halving_patience", ckpt.train.lr_halving_patience},
                {"early_stop_patience", ckpt.train.early_stop_patience},
                {"max_epochs", ckpt.train.max_epochs},
                {"batch_size", ckpt.train.batch_size},
                {"seed", ckpt.train.seed},
                {"beta1", ckpt.train.beta1},
                {"beta2", ckpt.train.beta2},
                {"adam_eps", ckpt.train.adam_eps}};
  json hist = json::array();
  for (const auto& r : ckpt.state.history)
    hist.push_back({{"epoch", r.epoch},
                    {"lr", r.lr},
                    {"train_loss", r.train_loss},
                    {"val_si_sdr", r.val_si_sdr}});
  j["state"] = {{"epoch", ckpt.state.epoch},
                {"lr", ckpt.state.lr},
                {"best_val_si_sdr", ckpt.state.best_val_si_sdr},
                {"stale_lr", ckpt.state.stale_lr},
                {"stale_stop", ckpt.state.stale_stop},
                {"history", hist}};
  j["adam"] = {{"step", ckpt.adam.step},
               {"m", tensors_to_json(ckpt.adam.m)},
               {"v", tensors_to_json(ckpt.adam.v)}};

  std::vector<uint8_t> cbor = json::to_cbor(j);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(cbor.data()),
            static_cast<std::streamsize>(cbor.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  std::vector<uint8_t> cbor((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
  json j = json::from_cbor(cbor);
  if (j.value("format", "") != "pease8-checkpoint")
    throw std::runtime_error("not a checkpoint file: " + path);

  Checkpoint c;
  c.version = j.at("version");
  c.model = model_cfg_from_json(j.at("model"));
  c.params.tensors = tensors_from_json(j.at("params"));
  const json& t = j.at("train");
  c.train.learning_rate = t.at("learning_rate");
  c.train.lr_halving_patience = t.at("lr_halving_patience");
  c.train.early_stop_patience = t.at("early_stop_patience");
  c.train.max_epochs = t.at("max_epochs");
  c.train.batch_size = t.at("batch_size");
  c.train.seed = t.at("seed");
  c.train.beta1 = t.at("beta1");
  c.train.beta2 = t.at("beta2");
  c.train.adam_eps = t.at("adam_eps");
  const json& s = j.at("state");
  c.state.epoch = s.at("epoch");
  c.state.lr = s.at("lr");
  c.state.best_val_si_sdr = s.at("best_val_si_sdr");
  c.state.stale_lr = s.at("stale_lr");
  c.state.stale_stop = s.at("stale_stop");
  for (const auto& r : s.at("history")) {
    EpochRecord rec;
    rec.epoch = r.at("epoch");
    rec.lr = r.at("lr");
    rec.train_loss = r.at("train_loss");
    rec.val_si_sdr = r.at("val_si_sdr");
    c.state.history.push_back(rec);
  }
  c.adam.step = j.at("adam").at("step");
  c.adam.m = tensors_from_json(j.at("adam").at("m"));
  c.adam.v = tensors_from_json(j.at("adam").at("v"));
  return c;
}

}  // namespace pease
