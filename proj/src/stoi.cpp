#include <cmath>
#include <stdexcept>
#include <vector>

#include "pease/metrics.hpp"
#include "pease/stft.hpp"

namespace pease {

namespace {

// STOI operates at 10 kHz internally.
constexpr int kStoiRate = 10000;
constexpr int kFrameLen = 256;
constexpr int kHop = 128;
constexpr int kFft = 512;
constexpr int kBands = 15;
constexpr double kFirstBandHz = 150.0;
constexpr int kSegFrames = 30;        // 384 ms
constexpr double kSilenceRangeDb = 40.0;
constexpr double kBetaDb = -15.0;     // lower SDR clipping bound

// Polyphase-style rational resampler (upsample L, FIR low-pass, downsample M)
// with a Hann-windowed sinc kernel.
Eigen::VectorXd resample(const Eigen::VectorXd& x, int up, int down) {
  const int half = 80;
  const int taps = 2 * half * up + 1;
  const double fc = 0.5 / std::max(up, down);  // cycles/sample at rate*up
  Eigen::VectorXd h(taps);
  for (int n = 0; n < taps; ++n) {
    double m = n - (taps - 1) / 2.0;
    double sinc = m == 0.0 ? 2.0 * fc : std::sin(2.0 * M_PI * fc * m) / (M_PI * m);
    double w = 0.5 * (1.0 - std::cos(2.0 * M_PI * n / (taps - 1)));
    h[n] = up * sinc * w;
  }
  const Eigen::Index n_up = x.size() * up;
  const Eigen::Index n_out = n_up / down;
  const int center = (taps - 1) / 2;
  Eigen::VectorXd y(n_out);
  for (Eigen::Index i = 0; i < n_out; ++i) {
    // y[i] = sum_j x[j] * h[center + i*down - j*up]
    const Eigen::Index pos = center + i * down;
    Eigen::Index j_lo = (pos - (taps - 1) + up - 1) / up;
    Eigen::Index j_hi = pos / up;
    j_lo = std::max<Eigen::Index>(j_lo, 0);
    j_hi = std::min<Eigen::Index>(j_hi, x.size() - 1);
    double acc = 0.0;
    for (Eigen::Index j = j_lo; j <= j_hi; ++j) acc += x[j] * h[pos - j * up];
    y[i] = acc;
  }
  return y;
}

std::vector<Eigen::VectorXd> make_frames(const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& win) {
  std::vector<Eigen::VectorXd> frames;
  for (Eigen::Index start = 0; start + kFrameLen <= x.size(); start += kHop)
    frames.push_back(x.segment(start, kFrameLen).cwiseProduct(win));
  return frames;
}

// One-third-octave band edges mapped onto FFT bins; returns per-band bin
// index lists.
std::vector<std::vector<int>> band_bins() {
  std::vector<std::vector<int>> bands(kBands);
  for (int j = 0; j < kBands; ++j) {
    double cf = kFirstBandHz * std::pow(2.0, j / 3.0);
    double flo = cf / std::pow(2.0, 1.0 / 6.0);
    double fhi = cf * std::pow(2.0, 1.0 / 6.0);
    for (int k = 0; k <= kFft / 2; ++k) {
      double f = static_cast<double>(k) * kStoiRate / kFft;
      if (f >= flo && f < fhi) bands[j].push_back(k);
    }
  }
  return bands;
}

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd az = a.array() - a.mean();
  Eigen::VectorXd bz = b.array() - b.mean();
  double na = az.norm(), nb = bz.norm();
  if (na <= 0.0 || nb <= 0.0) return 0.0;  // zero-variance convention
  return az.dot(bz) / (na * nb);
}

}  // namespace

double stoi(const Waveform& estimate, const Waveform& reference) {
  if (estimate.channels() != 1 || reference.channels() != 1)
    throw std::invalid_argument("stoi: single-channel signals required");
  if (estimate.length() != reference.length())
    throw std::invalid_argument("stoi: length mismatch");
  if (estimate.sample_rate != 16000 || reference.sample_rate != 16000)
    throw std::invalid_argument("stoi: expected 16 kHz input");

  Eigen::VectorXd x = resample(reference.samples.row(0).transpose(), 5, 8);
  Eigen::VectorXd y = resample(estimate.samples.row(0).transpose(), 5, 8);

  // Silent-frame removal driven by reference energy.
  Eigen::VectorXd win = hann_window(kFrameLen);
  auto xf = make_frames(x, win);
  auto yf = make_frames(y, win);
  double max_e = 0.0;
  for (const auto& f : xf) max_e = std::max(max_e, f.squaredNorm());
  if (max_e <= 0.0) throw std::invalid_argument("stoi: silent reference");
  const double thresh = max_e * std::pow(10.0, -kSilenceRangeDb / 10.0);
  std::vector<Eigen::VectorXd> xk, yk;
  for (size_t i = 0; i < xf.size(); ++i)
    if (xf[i].squaredNorm() > thresh) {
      xk.push_back(xf[i]);
      yk.push_back(yf[i]);
    }
  if (static_cast<int>(xk.size()) < kSegFrames)
    throw std::invalid_argument(
        "stoi: too short, need at least " + std::to_string(kSegFrames) +
        " active frames (~" + std::to_string(kSegFrames * kHop + kFrameLen) +
        " samples at 10 kHz) after silence removal");

  // Third-octave band envelopes per frame.
  const auto bands = band_bins();
  const int T = static_cast<int>(xk.size());
  Eigen::MatrixXd Xb(kBands, T), Yb(kBands, T);
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd fx = Eigen::VectorXd::Zero(kFft);
    Eigen::VectorXd fy = Eigen::VectorXd::Zero(kFft);
    fx.head(kFrameLen) = xk[t];
    fy.head(kFrameLen) = yk[t];
    Eigen::VectorXcd Sx = rfft(fx, kFft);
    Eigen::VectorXcd Sy = rfft(fy, kFft);
    for (int j = 0; j < kBands; ++j) {
      double ex = 0.0, ey = 0.0;
      for (int k : bands[j]) {
        ex += std::norm(Sx[k]);
        ey += std::norm(Sy[k]);
      }
      Xb(j, t) = std::sqrt(ex);
      Yb(j, t) = std::sqrt(ey);
    }
  }

  // Clipped, normalized correlation over 30-frame segments.
  const double clip_gain = std::pow(10.0, -kBetaDb / 20.0);
  double sum = 0.0;
  int n = 0;
  for (int m = kSegFrames; m <= T; ++m) {
    for (int j = 0; j < kBands; ++j) {
      Eigen::VectorXd xs = Xb.row(j).segment(m - kSegFrames, kSegFrames);
      Eigen::VectorXd ys = Yb.row(j).segment(m - kSegFrames, kSegFrames);
      double ny = ys.norm();
      if (ny > 0.0) ys *= xs.norm() / ny;
      Eigen::VectorXd yc =
          ys.cwiseMin(xs * (1.0 + clip_gain));
      sum += correlation(xs, yc);
      n += 1;
    }
  }
  return sum / n;
}

}  // namespace pease
