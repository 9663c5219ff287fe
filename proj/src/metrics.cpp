#include "pease/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace pease {

namespace {

void check_pair(const Waveform& estimate, const Waveform& reference) {
  if (estimate.channels() != 1 || reference.channels() != 1)
    throw std::invalid_argument("si_sdr: single-channel signals required");
  if (estimate.length() != reference.length())
    throw std::invalid_argument("si_sdr: length mismatch (" +
                                std::to_string(estimate.length()) + " vs " +
                                std::to_string(reference.length()) + ")");
}

}  // namespace

double si_sdr(const Waveform& estimate, const Waveform& reference) {
  check_pair(estimate, reference);
  Eigen::VectorXd s = reference.samples.row(0).transpose();
  Eigen::VectorXd sh = estimate.samples.row(0).transpose();
  const double s_energy = s.squaredNorm();
  if (s_energy <= 0.0) throw std::invalid_argument("si_sdr: zero reference");

  const double alpha = sh.dot(s) / s_energy;
  const double target = alpha * alpha * s_energy;
  const double error = (sh - alpha * s).squaredNorm();
  if (target <= 0.0) return -kSiSdrClipDb;  // zero projection
  if (error <= 0.0) return kSiSdrClipDb;    // exact up to scale
  double db = 10.0 * std::log10(target / error);
  return std::clamp(db, -kSiSdrClipDb, kSiSdrClipDb);
}

double si_sdr_smooth(const Eigen::VectorXd& estimate,
                     const Eigen::VectorXd& reference, Eigen::VectorXd* grad) {
  if (estimate.size() != reference.size())
    throw std::invalid_argument("si_sdr_smooth: length mismatch");
  const double eps = 1e-8;
  const double s_energy = reference.squaredNorm();
  if (s_energy <= 0.0)
    throw std::invalid_argument("si_sdr_smooth: zero reference");

  const double alpha = estimate.dot(reference) / s_energy;
  Eigen::VectorXd err = estimate - alpha * reference;
  const double num = alpha * alpha * s_energy + eps;
  const double den = err.squaredNorm() + eps;
  const double value = 10.0 * std::log10(num / den);
  if (grad) {
    // d num/d est = 2*alpha*s; d den/d est = 2*err (err is orthogonal to s).
    const double c = 10.0 / std::log(10.0);
    *grad = c * (2.0 * alpha / num * reference - 2.0 / den * err);
  }
  return value;
}

double separation_loss(const Waveform& est_left, const Waveform& est_right,
                       const Waveform& tgt_left, const Waveform& tgt_right) {
  return -0.5 * (si_sdr(est_left, tgt_left) + si_sdr(est_right, tgt_right));
}

double separation_loss_smooth(const Eigen::VectorXd& est_left,
                              const Eigen::VectorXd& est_right,
                              const Eigen::VectorXd& tgt_left,
                              const Eigen::VectorXd& tgt_right,
                              Eigen::VectorXd* grad_left,
                              Eigen::VectorXd* grad_right) {
  double l = si_sdr_smooth(est_left, tgt_left, grad_left);
  double r = si_sdr_smooth(est_right, tgt_right, grad_right);
  if (grad_left) *grad_left *= -0.5;
  if (grad_right) *grad_right *= -0.5;
  return -0.5 * (l + r);
}

void MetricReport::aggregate() {
  auto collect = [this](auto key_of) {
    std::map<double, StratumStats> bins;
    for (const auto& e : examples) {
      if (e.error) continue;
      auto& b = bins[key_of(e)];
      b.key = key_of(e);
      b.count += 1;
      b.si_sdr += e.mean_si_sdr();
      b.stoi += e.mean_stoi();
      b.baseline_si_sdr += e.baseline_mean_si_sdr();
      b.baseline_stoi += e.baseline_mean_stoi();
    }
    std::vector<StratumStats> out;
    for (auto& [k, b] : bins) {
      b.si_sdr /= b.count;
      b.stoi /= b.count;
      b.baseline_si_sdr /= b.count;
      b.baseline_stoi /= b.count;
      out.push_back(b);
    }
    return out;
  };
  by_snr = collect([](const ExampleMetrics& e) { return e.snr_db; });
  by_t60 = collect([](const ExampleMetrics& e) { return e.t60; });

  overall = StratumStats{};
  for (const auto& e : examples) {
    if (e.error) continue;
    overall.count += 1;
    overall.si_sdr += e.mean_si_sdr();
    overall.stoi += e.mean_stoi();
    overall.baseline_si_sdr += e.baseline_mean_si_sdr();
    overall.baseline_stoi += e.baseline_mean_stoi();
  }
  if (overall.count == 0)
    throw std::runtime_error("MetricReport: no successful examples");
  overall.si_sdr /= overall.count;
  overall.stoi /= overall.count;
  overall.baseline_si_sdr /= overall.count;
  overall.baseline_stoi /= overall.count;
}

}  // namespace pease
