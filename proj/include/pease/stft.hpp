#pragma once

#include <complex>
#include <string>
#include <vector>

#include "pease/waveform.hpp"

namespace pease {

struct StftConfig {
  int window_length = 512;  // 32 ms at 16 kHz
  int hop = 256;            // 50% overlap
  int fft_size = 512;       // == window_length
  std::string window = "hann";

  int bins() const { return fft_size / 2 + 1; }

  // Hann at 50% overlap is the only supported COLA pair.
  bool satisfies_cola() const {
    return window == "hann" && fft_size == window_length &&
           hop * 2 == window_length;
  }
};

// One-sided complex spectrogram per channel, frames x bins.
struct ComplexSpectrogram {
  std::vector<Eigen::MatrixXcd> values;  // [channel](T x F)
  StftConfig config;
  int sample_rate = 16000;
  Eigen::Index num_samples = 0;  // analysis length, for exact resynthesis

  Eigen::Index channels() const { return static_cast<Eigen::Index>(values.size()); }
  Eigen::Index frames() const { return values.empty() ? 0 : values[0].rows(); }
  Eigen::Index bins() const { return values.empty() ? 0 : values[0].cols(); }

  bool finite() const {
    for (const auto& m : values)
      if (!m.allFinite()) return false;
    return true;
  }
};

// Context slab of 2*tau+1 frames centered on one frame, per channel.
struct ContextWindow {
  int tau = 0;
  std::vector<Eigen::MatrixXcd> values;  // [channel]((2*tau+1) x F)
};

// Periodic (DFT-even) Hann window.
Eigen::VectorXd hann_window(int length);

// Forward transform. The tail is zero-padded so every sample is covered:
// T = max(1, ceil((length - window) / hop) + 1). Throws if the signal is
// shorter than one window.
ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg = {});

// Weighted overlap-add inverse; exact on the fully overlapped interior for
// COLA configs. Output length equals the recorded analysis length.
Waveform istft(const ComplexSpectrogram& S);

// Adjoint of the linear map (one-sided spectra -> istft waveform), per
// channel. Used to backpropagate waveform-domain losses into spectra.
// grad_wave rows must match S.channels().
std::vector<Eigen::MatrixXcd> istft_adjoint(const Eigen::MatrixXd& grad_wave,
                                            const ComplexSpectrogram& S);

// Frames t-tau .. t+tau with zero padding outside [0, T).
ContextWindow frame_context(const ComplexSpectrogram& S, Eigen::Index t,
                            int tau);

// Unnormalized one-sided real FFT helpers (length must be even).
Eigen::VectorXcd rfft(const Eigen::VectorXd& x, int n);
Eigen::VectorXd irfft(const Eigen::VectorXcd& spec, int n);

}  // namespace pease
