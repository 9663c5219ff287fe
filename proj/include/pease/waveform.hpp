#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <utility>

namespace pease {

// Multichannel sample block, rows = channels.
struct Waveform {
  Eigen::MatrixXd samples;  // channels x length
  int sample_rate = 16000;

  Waveform() = default;
  Waveform(Eigen::MatrixXd s, int rate)
      : samples(std::move(s)), sample_rate(rate) {}

  Eigen::Index channels() const { return samples.rows(); }
  Eigen::Index length() const { return samples.cols(); }

  bool finite() const { return samples.allFinite(); }

  Waveform channel(Eigen::Index c) const {
    return Waveform(samples.row(c), sample_rate);
  }

  double duration_s() const {
    return static_cast<double>(length()) / sample_rate;
  }
};

// Scales so the maximum absolute sample across all channels equals `peak`.
// Returns the scaled waveform and the applied gain.
inline std::pair<Waveform, double> peak_normalize(const Waveform& w,
                                                  double peak = 0.99) {
  double m = w.samples.cwiseAbs().maxCoeff();
  if (m <= 0.0)
    throw std::invalid_argument("peak_normalize: all-zero input");
  double gain = peak / m;
  Waveform out = w;
  out.samples *= gain;
  return {out, gain};
}

}  // namespace pease
