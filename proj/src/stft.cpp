#include "pease/stft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace pease {

namespace {

// FFTW plan cache. Plan creation is not thread safe; execution via the
// new-array interface is.
struct PlanCache {
  std::mutex mu;
  std::map<int, fftw_plan> fwd;  // r2c
  std::map<int, fftw_plan> bwd;  // c2r

  fftw_plan get(int n, bool forward) {
    std::lock_guard<std::mutex> lock(mu);
    auto& table = forward ? fwd : bwd;
    auto it = table.find(n);
    if (it != table.end()) return it->second;
    std::vector<double> re(n);
    std::vector<fftw_complex> cx(n / 2 + 1);
    fftw_plan p =
        forward ? fftw_plan_dft_r2c_1d(n, re.data(), cx.data(), FFTW_ESTIMATE)
                : fftw_plan_dft_c2r_1d(n, cx.data(), re.data(), FFTW_ESTIMATE);
    table[n] = p;
    return p;
  }
};

PlanCache& plans() {
  static PlanCache cache;
  return cache;
}

}  // namespace

Eigen::VectorXcd rfft(const Eigen::VectorXd& x, int n) {
  if (x.size() != n) throw std::invalid_argument("rfft: length mismatch");
  fftw_plan p = plans().get(n, true);
  std::vector<double> in(x.data(), x.data() + n);
  std::vector<fftw_complex> out(n / 2 + 1);
  fftw_execute_dft_r2c(p, in.data(), out.data());
  Eigen::VectorXcd spec(n / 2 + 1);
  for (int k = 0; k <= n / 2; ++k) spec[k] = {out[k][0], out[k][1]};
  return spec;
}

Eigen::VectorXd irfft(const Eigen::VectorXcd& spec, int n) {
  if (spec.size() != n / 2 + 1)
    throw std::invalid_argument("irfft: bin count mismatch");
  fftw_plan p = plans().get(n, false);
  std::vector<fftw_complex> in(n / 2 + 1);
  for (int k = 0; k <= n / 2; ++k) {
    in[k][0] = spec[k].real();
    in[k][1] = spec[k].imag();
  }
  std::vector<double> out(n);
  fftw_execute_dft_c2r(p, in.data(), out.data());
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = out[i] / n;
  return x;
}

Eigen::VectorXd hann_window(int length) {
  Eigen::VectorXd w(length);
  for (int i = 0; i < length; ++i)
    w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / length));
  return w;
}

static Eigen::VectorXd make_window(const StftConfig& cfg) {
  if (cfg.window == "hann") return hann_window(cfg.window_length);
  if (cfg.window == "rect") return Eigen::VectorXd::Ones(cfg.window_length);
  throw std::invalid_argument("unknown window: " + cfg.window);
}

static Eigen::Index frame_count(Eigen::Index length, const StftConfig& cfg) {
  Eigen::Index usable = length - cfg.window_length;
  return usable / cfg.hop + (usable % cfg.hop ? 2 : 1);
}

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  if (!w.finite()) throw std::invalid_argument("stft: non-finite input");
  if (cfg.fft_size != cfg.window_length)
    throw std::invalid_argument("stft: fft_size must equal window_length");
  if (w.length() < cfg.window_length)
    throw std::invalid_argument(
        "stft: signal too short, need at least " +
        std::to_string(cfg.window_length) + " samples, got " +
        std::to_string(w.length()));

  const Eigen::VectorXd win = make_window(cfg);
  const Eigen::Index T = frame_count(w.length(), cfg);
  const int F = cfg.bins();
  const int N = cfg.fft_size;

  ComplexSpectrogram S;
  S.config = cfg;
  S.sample_rate = w.sample_rate;
  S.num_samples = w.length();
  S.values.reserve(w.channels());

  Eigen::VectorXd frame(N);
  for (Eigen::Index c = 0; c < w.channels(); ++c) {
    Eigen::MatrixXcd M(T, F);
    for (Eigen::Index t = 0; t < T; ++t) {
      const Eigen::Index start = t * cfg.hop;
      frame.setZero();
      const Eigen::Index n = std::min<Eigen::Index>(N, w.length() - start);
      frame.head(n) = w.samples.row(c).segment(start, n).transpose();
      frame.array() *= win.array();
      M.row(t) = rfft(frame, N).transpose();
    }
    S.values.push_back(std::move(M));
  }
  return S;
}

// Per-sample squared-window normalization for weighted overlap-add.
static Eigen::VectorXd window_norm(const StftConfig& cfg, Eigen::Index T,
                                   const Eigen::VectorXd& win) {
  Eigen::VectorXd norm =
      Eigen::VectorXd::Zero((T - 1) * cfg.hop + cfg.window_length);
  for (Eigen::Index t = 0; t < T; ++t)
    norm.segment(t * cfg.hop, cfg.window_length).array() +=
        win.array().square();
  return norm;
}

Waveform istft(const ComplexSpectrogram& S) {
  if (!S.config.satisfies_cola())
    throw std::invalid_argument(
        "istft: config does not satisfy constant overlap-add (need Hann with "
        "hop = window/2)");
  if (S.channels() == 0 || S.frames() == 0)
    throw std::invalid_argument("istft: empty spectrogram");

  const StftConfig& cfg = S.config;
  const Eigen::VectorXd win = make_window(cfg);
  const Eigen::Index T = S.frames();
  const int N = cfg.fft_size;
  const Eigen::Index full = (T - 1) * cfg.hop + cfg.window_length;
  const Eigen::Index out_len = S.num_samples > 0 ? S.num_samples : full;
  const Eigen::VectorXd norm = window_norm(cfg, T, win);

  Waveform w;
  w.sample_rate = S.sample_rate;
  w.samples.setZero(S.channels(), out_len);

  for (Eigen::Index c = 0; c < S.channels(); ++c) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(full);
    for (Eigen::Index t = 0; t < T; ++t) {
      Eigen::VectorXd frame = irfft(S.values[c].row(t).transpose(), N);
      acc.segment(t * cfg.hop, N).array() += frame.array() * win.array();
    }
    for (Eigen::Index i = 0; i < out_len; ++i)
      w.samples(c, i) = norm[i] > 1e-12 ? acc[i] / norm[i] : 0.0;
  }
  return w;
}

std::vector<Eigen::MatrixXcd> istft_adjoint(const Eigen::MatrixXd& grad_wave,
                                            const ComplexSpectrogram& S) {
  const StftConfig& cfg = S.config;
  const Eigen::VectorXd win = make_window(cfg);
  const Eigen::Index T = S.frames();
  const int N = cfg.fft_size;
  const int F = cfg.bins();
  const Eigen::Index full = (T - 1) * cfg.hop + cfg.window_length;
  const Eigen::Index out_len = S.num_samples > 0 ? S.num_samples : full;
  if (grad_wave.rows() != S.channels() || grad_wave.cols() != out_len)
    throw std::invalid_argument("istft_adjoint: gradient shape mismatch");
  const Eigen::VectorXd norm = window_norm(cfg, T, win);

  std::vector<Eigen::MatrixXcd> grads;
  grads.reserve(S.channels());
  for (Eigen::Index c = 0; c < S.channels(); ++c) {
    // Adjoint of the normalization + truncation.
    Eigen::VectorXd g = Eigen::VectorXd::Zero(full);
    for (Eigen::Index i = 0; i < out_len; ++i)
      g[i] = norm[i] > 1e-12 ? grad_wave(c, i) / norm[i] : 0.0;

    Eigen::MatrixXcd G(T, F);
    Eigen::VectorXd gframe(N);
    for (Eigen::Index t = 0; t < T; ++t) {
      gframe = g.segment(t * cfg.hop, N).cwiseProduct(win);
      // Adjoint of the unitary-unnormalized irfft: rfft scaled by the
      // one-sided bin multiplicity over N.
      Eigen::VectorXcd spec = rfft(gframe, N);
      for (int f = 0; f < F; ++f) {
        double mult = (f == 0 || f == N / 2) ? 1.0 : 2.0;
        G(t, f) = spec[f] * (mult / N);
      }
    }
    grads.push_back(std::move(G));
  }
  return grads;
}

ContextWindow frame_context(const ComplexSpectrogram& S, Eigen::Index t,
                            int tau) {
  if (t < 0 || t >= S.frames())
    throw std::out_of_range("frame_context: frame index " + std::to_string(t) +
                            " outside [0, " + std::to_string(S.frames()) + ")");
  if (tau < 0) throw std::invalid_argument("frame_context: negative tau");

  ContextWindow cw;
  cw.tau = tau;
  const int width = 2 * tau + 1;
  for (Eigen::Index c = 0; c < S.channels(); ++c) {
    Eigen::MatrixXcd slab = Eigen::MatrixXcd::Zero(width, S.bins());
    for (int d = -tau; d <= tau; ++d) {
      Eigen::Index src = t + d;
      if (src >= 0 && src < S.frames()) slab.row(d + tau) = S.values[c].row(src);
    }
    cw.values.push_back(std::move(slab));
  }
  return cw;
}

}  // namespace pease
