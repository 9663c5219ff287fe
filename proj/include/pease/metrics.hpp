#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pease/waveform.hpp"

namespace pease {

inline constexpr double kSiSdrClipDb = 100.0;

// Reporting SI-SDR, clipped to [-100, 100] dB for degenerate cases.
// Throws on zero reference or length mismatch.
double si_sdr(const Waveform& estimate, const Waveform& reference);

// Smooth (unclipped, eps-stabilized) SI-SDR used inside the training loss.
// Returns the value and, when grad != nullptr, d(si_sdr)/d(estimate).
double si_sdr_smooth(const Eigen::VectorXd& estimate,
                     const Eigen::VectorXd& reference,
                     Eigen::VectorXd* grad = nullptr);

// Fixed-pairing loss: -(si_sdr(L) + si_sdr(R)) / 2, clipped form for
// reporting. No permutation search.
double separation_loss(const Waveform& est_left, const Waveform& est_right,
                       const Waveform& tgt_left, const Waveform& tgt_right);

// Smooth form with gradients w.r.t. both estimates, for training.
double separation_loss_smooth(const Eigen::VectorXd& est_left,
                              const Eigen::VectorXd& est_right,
                              const Eigen::VectorXd& tgt_left,
                              const Eigen::VectorXd& tgt_right,
                              Eigen::VectorXd* grad_left = nullptr,
                              Eigen::VectorXd* grad_right = nullptr);

// Short-time objective intelligibility; both signals must be 16 kHz mono.
double stoi(const Waveform& estimate, const Waveform& reference);

struct ExampleMetrics {
  std::string id;
  double t60 = 0.0;
  double snr_db = 0.0;
  double si_sdr_left = 0.0, si_sdr_right = 0.0;
  double stoi_left = 0.0, stoi_right = 0.0;
  double baseline_si_sdr_left = 0.0, baseline_si_sdr_right = 0.0;
  double baseline_stoi_left = 0.0, baseline_stoi_right = 0.0;
  bool processed = false;  // false => baseline-only (passthrough)
  std::optional<std::string> error;

  double mean_si_sdr() const { return 0.5 * (si_sdr_left + si_sdr_right); }
  double mean_stoi() const { return 0.5 * (stoi_left + stoi_right); }
  double baseline_mean_si_sdr() const {
    return 0.5 * (baseline_si_sdr_left + baseline_si_sdr_right);
  }
  double baseline_mean_stoi() const {
    return 0.5 * (baseline_stoi_left + baseline_stoi_right);
  }
};

struct StratumStats {
  double key = 0.0;  // bin value (snr dB or t60 s)
  int count = 0;
  double si_sdr = 0.0, stoi = 0.0;
  double baseline_si_sdr = 0.0, baseline_stoi = 0.0;
};

struct MetricReport {
  std::vector<ExampleMetrics> examples;
  std::vector<StratumStats> by_snr;
  std::vector<StratumStats> by_t60;
  StratumStats overall;
  bool processed = false;

  // Recomputes all aggregates from the per-example records.
  void aggregate();
};

}  // namespace pease
