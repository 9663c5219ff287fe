#include "pease/model.hpp"

#include <cmath>
#include <stdexcept>

namespace pease {

void ModelConfig::validate() const {
  if (tau < 0) throw std::invalid_argument("ModelConfig: tau must be >= 0");
  if (bins < 2) throw std::invalid_argument("ModelConfig: bins too small");
  if (embed_dim <= 0 || attention_heads <= 0 || skip_proj_dim <= 0)
    throw std::invalid_argument("ModelConfig: dims must be positive");
  if (embed_dim % attention_heads != 0)
    throw std::invalid_argument(
        "ModelConfig: embed_dim must be divisible by attention_heads");
  if (encoder_channels.empty())
    throw std::invalid_argument("ModelConfig: need at least one encoder stage");
  for (int c : encoder_channels)
    if (c <= 0) throw std::invalid_argument("ModelConfig: channels positive");
  if (decoder_layers != static_cast<int>(encoder_channels.size()))
    throw std::invalid_argument(
        "ModelConfig: decoder_layers must mirror encoder depth");
  if (n_residual_blocks < 0)
    throw std::invalid_argument("ModelConfig: negative residual blocks");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("ModelConfig: dropout in [0, 1)");
  // Each stride-2 stage needs at least 3 input bins.
  for (int f : freq_grid())
    if (f < 1) throw std::invalid_argument("ModelConfig: bins too small for depth");
}

std::vector<int> ModelConfig::freq_grid() const {
  std::vector<int> grid{bins};
  for (size_t i = 0; i < encoder_channels.size(); ++i)
    grid.push_back((grid.back() + 2 - 3) / 2 + 1);  // k=3, stride=2, pad=1
  return grid;
}

Eigen::Index Params::count() const {
  Eigen::Index n = 0;
  for (const auto& [name, m] : tensors) n += m.size();
  return n;
}

bool Params::finite() const {
  for (const auto& [name, m] : tensors)
    if (!m.allFinite()) return false;
  return true;
}

Eigen::MatrixXd& Params::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end())
    throw std::out_of_range("Params: missing tensor " + name);
  return it->second;
}

const Eigen::MatrixXd& Params::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end())
    throw std::out_of_range("Params: missing tensor " + name);
  return it->second;
}

uint64_t params_digest(const Params& p) {
  uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const void* data, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, m] : p.tensors) {
    feed(name.data(), name.size());
    feed(m.data(), sizeof(double) * m.size());
  }
  return h;
}

namespace {

Eigen::MatrixXd uniform_init(Eigen::Index rows, Eigen::Index cols,
                             Eigen::Index fan_in, Rng& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-limit, limit);
  return m;
}

constexpr int kK = 3;  // frequency kernel width for all conv stages

}  // namespace

Params init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0x70656173ULL));  // independent init stream
  Params p;
  auto add_w = [&](const std::string& name, Eigen::Index rows,
                   Eigen::Index cols, Eigen::Index fan_in) {
    p.tensors[name] = uniform_init(rows, cols, fan_in, rng);
  };
  auto add_zero = [&](const std::string& name, Eigen::Index cols) {
    p.tensors[name] = Eigen::MatrixXd::Zero(1, cols);
  };
  auto add_one = [&](const std::string& name, Eigen::Index cols) {
    p.tensors[name] = Eigen::MatrixXd::Ones(1, cols);
  };

  const auto grid = cfg.freq_grid();
  const int depth = static_cast<int>(cfg.encoder_channels.size());

  // Encoder: stride-2 frequency convs with per-channel norm.
  int c_prev = 16;
  for (int i = 0; i < depth; ++i) {
    int c = cfg.encoder_channels[i];
    std::string base = "enc.conv" + std::to_string(i);
    add_w(base + ".w", c, static_cast<Eigen::Index>(c_prev) * kK,
          static_cast<Eigen::Index>(c_prev) * kK);
    add_zero(base + ".b", c);
    add_one("enc.norm" + std::to_string(i) + ".gamma", c);
    add_zero("enc.norm" + std::to_string(i) + ".beta", c);
    c_prev = c;
  }
  const int c_enc = c_prev;
  const int f_enc = grid.back();

  for (int j = 0; j < cfg.n_residual_blocks; ++j) {
    std::string base = "enc.res" + std::to_string(j);
    add_w(base + ".conv1.w", c_enc, static_cast<Eigen::Index>(c_enc) * kK,
          static_cast<Eigen::Index>(c_enc) * kK);
    add_zero(base + ".conv1.b", c_enc);
    add_one(base + ".norm.gamma", c_enc);
    add_zero(base + ".norm.beta", c_enc);
    add_w(base + ".conv2.w", c_enc, static_cast<Eigen::Index>(c_enc) * kK,
          static_cast<Eigen::Index>(c_enc) * kK);
    add_zero(base + ".conv2.b", c_enc);
  }

  // Center-frame temporal conv realizing the 2*tau+1 context.
  const int width = 2 * cfg.tau + 1;
  const Eigen::Index flat = static_cast<Eigen::Index>(c_enc) * f_enc;
  add_w("enc.temporal.w", width * flat, cfg.embed_dim, width * flat);
  add_zero("enc.temporal.b", cfg.embed_dim);

  const int D = cfg.embed_dim;
  for (const char* nm : {"wq", "wk", "wv", "wo"})
    add_w(std::string("attn.") + nm, D, D, D);
  for (const char* nm : {"bq", "bk", "bv", "bo"})
    add_zero(std::string("attn.") + nm, D);

  for (const char* side : {"left", "right"}) {
    std::string s(side);
    const Eigen::Index raw = static_cast<Eigen::Index>(8) * cfg.bins;
    add_w("skip." + s + ".w", raw, cfg.skip_proj_dim, raw);
    add_zero("skip." + s + ".b", cfg.skip_proj_dim);

    add_w("dec." + s + ".fuse.w", D + cfg.skip_proj_dim, flat,
          D + cfg.skip_proj_dim);
    add_zero("dec." + s + ".fuse.b", flat);
    for (int i = depth - 1; i >= 0; --i) {
      int ci = cfg.encoder_channels[i];
      int co = i > 0 ? cfg.encoder_channels[i - 1] : 2;
      std::string base = "dec." + s + ".deconv" + std::to_string(i);
      add_w(base + ".w", co, static_cast<Eigen::Index>(ci) * kK,
            static_cast<Eigen::Index>(ci) * kK);
      add_zero(base + ".b", co);
      // Start the complex ratio mask near the identity: small mask weights
      // and a unit real-plane bias keep the untrained decoder close to a
      // pass-through of the in-ear spectrum.
      if (i == 0) {
        p.tensors[base + ".w"].setZero();
        p.tensors[base + ".b"](0, 0) = 1.0;
      }
      if (i > 0) {
        add_one("dec." + s + ".norm" + std::to_string(i) + ".gamma", co);
        add_zero("dec." + s + ".norm" + std::to_string(i) + ".beta", co);
      }
    }
  }
  return p;
}

Eigen::MatrixXd pack_input(const ComplexSpectrogram& mix) {
  if (mix.channels() != 8)
    throw std::invalid_argument("pack_input: expected 8 channels, got " +
                                std::to_string(mix.channels()));
  const Eigen::Index T = mix.frames();
  const Eigen::Index F = mix.bins();
  Eigen::MatrixXd x(T, 16 * F);
  for (int c = 0; c < 8; ++c) {
    x.middleCols(static_cast<Eigen::Index>(2 * c) * F, F) = mix.values[c].real();
    x.middleCols(static_cast<Eigen::Index>(2 * c + 1) * F, F) =
        mix.values[c].imag();
  }
  return x;
}

Eigen::MatrixXcd output_to_complex(const Eigen::MatrixXd& out, int bins) {
  if (out.cols() != 2 * bins)
    throw std::invalid_argument("output_to_complex: width mismatch");
  Eigen::MatrixXcd s(out.rows(), bins);
  s.real() = out.leftCols(bins);
  s.imag() = out.rightCols(bins);
  return s;
}

Eigen::MatrixXd complex_to_output(const Eigen::MatrixXcd& spec) {
  Eigen::MatrixXd out(spec.rows(), 2 * spec.cols());
  out.leftCols(spec.cols()) = spec.real();
  out.rightCols(spec.cols()) = spec.imag();
  return out;
}

namespace {

ad::NodePtr pnode(const ParamNodes& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw std::out_of_range("missing param node " + name);
  return it->second;
}

}  // namespace

ad::NodePtr encode(ad::Tape& t, ad::NodePtr x, const ParamNodes& p,
                   const ModelConfig& cfg) {
  const auto grid = cfg.freq_grid();
  const int depth = static_cast<int>(cfg.encoder_channels.size());
  int c_prev = 16;
  ad::NodePtr h = x;
  for (int i = 0; i < depth; ++i) {
    int c = cfg.encoder_channels[i];
    std::string idx = std::to_string(i);
    h = ad::conv_freq(t, h, pnode(p, "enc.conv" + idx + ".w"),
                      pnode(p, "enc.conv" + idx + ".b"), c_prev, grid[i], kK, 2,
                      1);
    h = ad::channel_norm(t, h, pnode(p, "enc.norm" + idx + ".gamma"),
                         pnode(p, "enc.norm" + idx + ".beta"), c);
    h = ad::relu(t, h);
    c_prev = c;
  }
  const int c_enc = c_prev;
  const int f_enc = grid.back();
  for (int j = 0; j < cfg.n_residual_blocks; ++j) {
    std::string base = "enc.res" + std::to_string(j);
    ad::NodePtr r = ad::conv_freq(t, h, pnode(p, base + ".conv1.w"),
                                  pnode(p, base + ".conv1.b"), c_enc, f_enc, kK,
                                  1, 1);
    r = ad::channel_norm(t, r, pnode(p, base + ".norm.gamma"),
                         pnode(p, base + ".norm.beta"), c_enc);
    r = ad::relu(t, r);
    r = ad::conv_freq(t, r, pnode(p, base + ".conv2.w"),
                      pnode(p, base + ".conv2.b"), c_enc, f_enc, kK, 1, 1);
    h = ad::relu(t, ad::add(t, h, r));
  }
  return ad::temporal_conv(t, h, pnode(p, "enc.temporal.w"),
                           pnode(p, "enc.temporal.b"), 2 * cfg.tau + 1);
}

ad::NodePtr attend(ad::Tape& t, ad::NodePtr features, const ParamNodes& p,
                   const ModelConfig& cfg) {
  const int D = cfg.embed_dim;
  if (features->value.cols() != D)
    throw std::invalid_argument("attend: feature width != embed_dim");
  const int h = cfg.attention_heads;
  const int dk = D / h;

  auto q = ad::add_row(t, ad::matmul(t, features, pnode(p, "attn.wq")),
                       pnode(p, "attn.bq"));
  auto k = ad::add_row(t, ad::matmul(t, features, pnode(p, "attn.wk")),
                       pnode(p, "attn.bk"));
  auto v = ad::add_row(t, ad::matmul(t, features, pnode(p, "attn.wv")),
                       pnode(p, "attn.bv"));

  std::vector<ad::NodePtr> heads;
  for (int i = 0; i < h; ++i) {
    auto qi = ad::slice_cols(t, q, static_cast<Eigen::Index>(i) * dk, dk);
    auto ki = ad::slice_cols(t, k, static_cast<Eigen::Index>(i) * dk, dk);
    auto vi = ad::slice_cols(t, v, static_cast<Eigen::Index>(i) * dk, dk);
    auto kt = t.record(ki->value.transpose(), ki->needs_grad, [ki](ad::Node& n) {
      if (!ki->needs_grad) return;
      ki->ensure_grad();
      ki->grad += n.grad.transpose();
    });
    auto scores = ad::scale(t, ad::matmul(t, qi, kt), 1.0 / std::sqrt(dk));
    auto attn = ad::softmax_rows(t, scores);
    heads.push_back(ad::matmul(t, attn, vi));
  }
  auto cat = ad::concat_cols(t, heads);
  auto out = ad::add_row(t, ad::matmul(t, cat, pnode(p, "attn.wo")),
                         pnode(p, "attn.bo"));
  return ad::add(t, features, out);
}

ad::NodePtr ear_skip_project(ad::Tape& t, ad::NodePtr x, Side side,
                             const ParamNodes& p, const ModelConfig& cfg) {
  const Eigen::Index F = cfg.bins;
  const Eigen::Index half = 8 * F;  // 4 channels x {re, im} planes
  auto group = ad::slice_cols(t, x, side == Side::Left ? 0 : half, half);
  std::string s = side == Side::Left ? "left" : "right";
  return ad::add_row(t, ad::matmul(t, group, pnode(p, "skip." + s + ".w")),
                     pnode(p, "skip." + s + ".b"));
}

ad::NodePtr decode(ad::Tape& t, ad::NodePtr features, ad::NodePtr skip,
                   ad::NodePtr raw, Side side, const ParamNodes& p,
                   const ModelConfig& cfg, Mode mode, Rng* dropout_rng) {
  const std::string s = side == Side::Left ? "left" : "right";
  const auto grid = cfg.freq_grid();
  const int depth = static_cast<int>(cfg.encoder_channels.size());
  const bool drop = mode == Mode::Train && cfg.dropout > 0.0;
  if (drop && !dropout_rng)
    throw std::invalid_argument("decode: train-mode dropout needs an rng");

  auto z = ad::concat_cols(t, {features, skip});
  auto h = ad::add_row(t, ad::matmul(t, z, pnode(p, "dec." + s + ".fuse.w")),
                       pnode(p, "dec." + s + ".fuse.b"));
  h = ad::relu(t, h);
  if (drop) h = ad::dropout(t, h, cfg.dropout, *dropout_rng, true);

  for (int i = depth - 1; i >= 0; --i) {
    const int ci = cfg.encoder_channels[i];
    const int co = i > 0 ? cfg.encoder_channels[i - 1] : 2;
    const int f_in = grid[i + 1];
    const int f_target = grid[i];
    const int out_pad = f_target - ((f_in - 1) * 2 + kK - 2);
    std::string base = "dec." + s + ".deconv" + std::to_string(i);
    h = ad::deconv_freq(t, h, pnode(p, base + ".w"), pnode(p, base + ".b"), ci,
                        f_in, kK, 2, 1, out_pad);
    if (i > 0) {
      std::string nidx = std::to_string(i);
      h = ad::channel_norm(t, h, pnode(p, "dec." + s + ".norm" + nidx + ".gamma"),
                           pnode(p, "dec." + s + ".norm" + nidx + ".beta"), co);
      h = ad::relu(t, h);
      if (drop) h = ad::dropout(t, h, cfg.dropout, *dropout_rng, true);
    }
  }
  // The two output channels form a complex ratio mask (real plane, then
  // imaginary) applied to the same-side in-ear spectrum, whose planes sit
  // contiguously in the packed input. An untrained decoder starts near the
  // identity mask and passes the raw ear signal through.
  const Eigen::Index F = cfg.bins;
  const Eigen::Index off = (side == Side::Left ? 0 : 8) * F;
  auto mask_re = ad::slice_cols(t, h, 0, F);
  auto mask_im = ad::slice_cols(t, h, F, F);
  auto x_re = ad::slice_cols(t, raw, off, F);
  auto x_im = ad::slice_cols(t, raw, off + F, F);
  auto out_re = ad::sub(t, ad::hadamard(t, mask_re, x_re),
                        ad::hadamard(t, mask_im, x_im));
  auto out_im = ad::add(t, ad::hadamard(t, mask_re, x_im),
                        ad::hadamard(t, mask_im, x_re));
  return ad::concat_cols(t, {out_re, out_im});
}

ForwardPass forward(const Eigen::MatrixXd& input, const Params& params,
                    const ModelConfig& cfg, Mode mode, Rng* dropout_rng,
                    bool with_grad) {
  cfg.validate();
  if (!input.allFinite())
    throw std::invalid_argument("forward: non-finite input");
  if (input.cols() != static_cast<Eigen::Index>(16) * cfg.bins)
    throw std::invalid_argument("forward: input width != 16*bins");

  ForwardPass fp;
  fp.input = fp.tape.leaf(input, with_grad);
  for (const auto& [name, m] : params.tensors)
    fp.params[name] = fp.tape.leaf(m, with_grad);

  auto feats = encode(fp.tape, fp.input, fp.params, cfg);
  feats = attend(fp.tape, feats, fp.params, cfg);
  auto skip_l = ear_skip_project(fp.tape, fp.input, Side::Left, fp.params, cfg);
  auto skip_r = ear_skip_project(fp.tape, fp.input, Side::Right, fp.params, cfg);
  fp.out_left = decode(fp.tape, feats, skip_l, fp.input, Side::Left, fp.params,
                       cfg, mode, dropout_rng);
  fp.out_right = decode(fp.tape, feats, skip_r, fp.input, Side::Right,
                        fp.params, cfg, mode, dropout_rng);
  return fp;
}

std::pair<ComplexSpectrogram, ComplexSpectrogram> separate(
    const ComplexSpectrogram& mix, const Params& params,
    const ModelConfig& cfg) {
  if (mix.bins() != cfg.bins)
    throw std::invalid_argument("separate: spectrogram has " +
                                std::to_string(mix.bins()) + " bins, model " +
                                std::to_string(cfg.bins));
  auto fp = forward(pack_input(mix), params, cfg, Mode::Eval, nullptr, false);
  auto wrap = [&](const Eigen::MatrixXd& out) {
    ComplexSpectrogram s;
    s.config = mix.config;
    s.sample_rate = mix.sample_rate;
    s.num_samples = mix.num_samples;
    s.values = {output_to_complex(out, cfg.bins)};
    return s;
  };
  return {wrap(fp.out_left->value), wrap(fp.out_right->value)};
}

}  // namespace pease
