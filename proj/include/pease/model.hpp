#pragma once

#include <map>
#include <string>
#include <vector>

#include "pease/stft.hpp"
#include "pease/tape.hpp"

namespace pease {

struct ModelConfig {
  int tau = 2;                              // temporal context half-width
  int bins = 257;                           // F = fft_size/2 + 1
  std::vector<int> encoder_channels = {32, 64, 128};
  int n_residual_blocks = 4;
  int attention_heads = 4;
  int embed_dim = 128;
  int decoder_layers = 3;                   // must mirror encoder depth
  int skip_proj_dim = 128;
  double dropout = 0.1;                     // decoder only, train mode

  void validate() const;

  // Frequency grid after each encoder stage (index 0 = input bins).
  std::vector<int> freq_grid() const;
};

// Named learnable tensors. std::map keeps a deterministic order for the
// optimizer and checkpoints.
struct Params {
  std::map<std::string, Eigen::MatrixXd> tensors;

  Eigen::Index count() const;
  bool finite() const;
  Eigen::MatrixXd& at(const std::string& name);
  const Eigen::MatrixXd& at(const std::string& name) const;
};

// FNV-1a over the raw tensor bytes, for determinism checks.
uint64_t params_digest(const Params& p);

Params init_params(const ModelConfig& cfg, uint64_t seed);

enum class Mode { Train, Eval };
enum class Side { Left, Right };

// Mixture STFT flattened to T x 16F reals. Column layout is channel-major:
// channel c real plane at cols [2c*F, 2c*F+F), imaginary at [(2c+1)*F, ...).
// Channels 0-3 are the left group, 4-7 the right group.
Eigen::MatrixXd pack_input(const ComplexSpectrogram& mix);

// Reads a decoder output block (T x 2F, real plane then imaginary) as a
// complex spectrogram matrix.
Eigen::MatrixXcd output_to_complex(const Eigen::MatrixXd& out, int bins);
Eigen::MatrixXd complex_to_output(const Eigen::MatrixXcd& spec);

using ParamNodes = std::map<std::string, ad::NodePtr>;

struct ForwardPass {
  ad::Tape tape;
  ParamNodes params;
  ad::NodePtr input;      // T x 16F
  ad::NodePtr out_left;   // T x 2F
  ad::NodePtr out_right;  // T x 2F
};

// Individual stages, exposed for tests. All operate on one tape.
ad::NodePtr encode(ad::Tape& t, ad::NodePtr x, const ParamNodes& p,
                   const ModelConfig& cfg);
ad::NodePtr attend(ad::Tape& t, ad::NodePtr features, const ParamNodes& p,
                   const ModelConfig& cfg);
ad::NodePtr ear_skip_project(ad::Tape& t, ad::NodePtr x, Side side,
                             const ParamNodes& p, const ModelConfig& cfg);
// The decoder predicts a complex ratio mask that is applied to the same-side
// in-ear spectrum taken from `raw`; near-identity initialization makes an
// untrained network pass the unprocessed ear signal through.
ad::NodePtr decode(ad::Tape& t, ad::NodePtr features, ad::NodePtr skip,
                   ad::NodePtr raw, Side side, const ParamNodes& p,
                   const ModelConfig& cfg, Mode mode, Rng* dropout_rng);

// Full network. `dropout_rng` may be null in eval mode. When `with_grad`
// is false the pass only carries values (no gradients tracked).
ForwardPass forward(const Eigen::MatrixXd& input, const Params& params,
                    const ModelConfig& cfg, Mode mode,
                    Rng* dropout_rng = nullptr, bool with_grad = true);

// Convenience: run eval-mode forward on a mixture spectrogram and return the
// two estimated complex spectrograms (left, right), sharing the mixture's
// framing so istft recovers the original length.
std::pair<ComplexSpectrogram, ComplexSpectrogram> separate(
    const ComplexSpectrogram& mix, const Params& params,
    const ModelConfig& cfg);

}  // namespace pease
