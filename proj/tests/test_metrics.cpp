#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "pease/metrics.hpp"

using namespace pease;

namespace {

Waveform mono(std::initializer_list<double> v) {
  Waveform w;
  w.samples.resize(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) w.samples(0, i++) = x;
  return w;
}

Eigen::VectorXd random_vec(Rng& rng, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(-1, 1);
  return v;
}

}  // namespace

TEST_CASE("si_sdr worked example: half signal, half orthogonal error") {
  auto ref = mono({1, 0, 0, 0});
  auto est = mono({1, 1, 0, 0});
  // projection = ref, error = [0,1,0,0]: equal powers -> 0 dB
  CHECK(si_sdr(est, ref) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("si_sdr is invariant to estimate scaling") {
  Rng rng(11);
  Waveform ref, est;
  ref.samples = random_vec(rng, 1000).transpose();
  est.samples =
      (0.8 * ref.samples.array() + 0.05 * random_vec(rng, 1000).transpose().array())
          .matrix();
  double base = si_sdr(est, ref);
  for (double a : {10.0, 0.1, 100.0, 0.01, -10.0, -0.1, -100.0, -0.01}) {
    Waveform scaled = est;
    scaled.samples *= a;
    CHECK(si_sdr(scaled, ref) == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("si_sdr clipping and degenerate inputs") {
  Rng rng(12);
  Waveform ref;
  ref.samples = random_vec(rng, 500).transpose();
  CHECK(si_sdr(ref, ref) == doctest::Approx(kSiSdrClipDb));  // perfect -> +100
  Waveform ortho = ref;
  // orthogonal estimate: projection zero -> -inf, clipped to -100
  ortho.samples.setZero();
  ortho.samples(0, 0) = ref.samples(0, 1);
  ortho.samples(0, 1) = -ref.samples(0, 0);
  double perp = si_sdr(ortho, ref);
  CHECK(perp >= -kSiSdrClipDb);
  CHECK(perp <= doctest::Approx(-kSiSdrClipDb + 1e-6));

  Waveform zero_ref;
  zero_ref.samples = Eigen::MatrixXd::Zero(1, 500);
  CHECK_THROWS_AS(si_sdr(ref, zero_ref), std::invalid_argument);
  Waveform shorter;
  shorter.samples = random_vec(rng, 400).transpose();
  CHECK_THROWS_AS(si_sdr(shorter, ref), std::invalid_argument);
}

TEST_CASE("smooth si_sdr tracks the clipped version away from extremes") {
  Rng rng(13);
  Eigen::VectorXd ref = random_vec(rng, 800);
  Eigen::VectorXd est = ref + 0.1 * random_vec(rng, 800);
  Waveform rw, ew;
  rw.samples = ref.transpose();
  ew.samples = est.transpose();
  CHECK(si_sdr_smooth(est, ref) == doctest::Approx(si_sdr(ew, rw)).epsilon(1e-9));
}

TEST_CASE("smooth si_sdr gradient matches finite differences") {
  Rng rng(14);
  Eigen::VectorXd ref = random_vec(rng, 64);
  Eigen::VectorXd est = 0.7 * ref + 0.3 * random_vec(rng, 64);
  Eigen::VectorXd grad;
  si_sdr_smooth(est, ref, &grad);
  REQUIRE(grad.size() == 64);
  for (int i = 0; i < 64; ++i) {
    double fd = oracles::central_difference(
        [&] { return si_sdr_smooth(est, ref); }, est[i], 1e-6);
    CHECK(std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]),
                                             1e-3}) < 1e-6);
  }
}

TEST_CASE("separation loss is the fixed-pairing average, negated") {
  Rng rng(15);
  Waveform tl, tr, el, er;
  tl.samples = random_vec(rng, 600).transpose();
  tr.samples = random_vec(rng, 600).transpose();
  el.samples = tl.samples + 0.2 * random_vec(rng, 600).transpose();
  er.samples = tr.samples + 0.4 * random_vec(rng, 600).transpose();
  double loss = separation_loss(el, er, tl, tr);
  CHECK(loss == doctest::Approx(-0.5 * (si_sdr(el, tl) + si_sdr(er, tr)))
                    .epsilon(1e-12));
  // no permutation search: a swapped estimate must score differently
  CHECK(separation_loss(er, el, tl, tr) != doctest::Approx(loss));
}

TEST_CASE("smooth separation loss gradients") {
  Rng rng(16);
  Eigen::VectorXd tl = random_vec(rng, 48), tr = random_vec(rng, 48);
  Eigen::VectorXd el = tl + 0.3 * random_vec(rng, 48);
  Eigen::VectorXd er = tr + 0.3 * random_vec(rng, 48);
  Eigen::VectorXd gl, gr;
  separation_loss_smooth(el, er, tl, tr, &gl, &gr);
  for (int i = 0; i < 48; ++i) {
    double fdl = oracles::central_difference(
        [&] { return separation_loss_smooth(el, er, tl, tr); }, el[i], 1e-6);
    double fdr = oracles::central_difference(
        [&] { return separation_loss_smooth(el, er, tl, tr); }, er[i], 1e-6);
    CHECK(std::abs(fdl - gl[i]) < 1e-6 + 1e-5 * std::abs(fdl));
    CHECK(std::abs(fdr - gr[i]) < 1e-6 + 1e-5 * std::abs(fdr));
  }
}

TEST_CASE("stoi of a signal with itself is 1") {
  Rng rng(17);
  // modulated tone bursts so silent-frame removal has something to do
  const int n = 16000 * 2;
  Waveform w;
  w.samples.resize(1, n);
  for (int i = 0; i < n; ++i) {
    double env = 0.5 + 0.5 * std::sin(2 * M_PI * 3.0 * i / 16000.0);
    w.samples(0, i) = env * std::sin(2 * M_PI * 440.0 * i / 16000.0) +
                      0.1 * rng.normal();
  }
  CHECK(stoi(w, w) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("stoi decreases monotonically with added noise") {
  Rng rng(18);
  const int n = 16000 * 2;
  Waveform ref;
  ref.samples.resize(1, n);
  for (int i = 0; i < n; ++i) {
    double env = 0.6 + 0.4 * std::sin(2 * M_PI * 4.0 * i / 16000.0);
    ref.samples(0, i) = env * (std::sin(2 * M_PI * 300.0 * i / 16000.0) +
                               0.5 * std::sin(2 * M_PI * 1200.0 * i / 16000.0));
  }
  Eigen::VectorXd noise = random_vec(rng, n);
  double prev = 2.0;
  for (double snr : {20.0, 10.0, 0.0, -10.0}) {
    double g = std::sqrt(ref.samples.squaredNorm() /
                         (noise.squaredNorm() * std::pow(10.0, snr / 10.0)));
    Waveform noisy = ref;
    noisy.samples += (g * noise).transpose();
    double s = stoi(noisy, ref);
    CHECK(s < prev);
    prev = s;
  }
}

TEST_CASE("stoi input validation") {
  Rng rng(19);
  Waveform ref;
  ref.samples = random_vec(rng, 32000).transpose();
  Waveform wrong_rate = ref;
  wrong_rate.sample_rate = 8000;
  CHECK_THROWS(stoi(wrong_rate, wrong_rate));
  Waveform shorter;
  shorter.samples = random_vec(rng, 16000).transpose();
  CHECK_THROWS(stoi(shorter, ref));
}

TEST_CASE("metric report aggregation bins by snr and t60") {
  MetricReport rep;
  auto make = [](double t60, double snr, double si, double st) {
    ExampleMetrics m;
    m.t60 = t60;
    m.snr_db = snr;
    m.si_sdr_left = m.si_sdr_right = si;
    m.stoi_left = m.stoi_right = st;
    m.baseline_si_sdr_left = m.baseline_si_sdr_right = si - 3.0;
    m.baseline_stoi_left = m.baseline_stoi_right = st - 0.1;
    m.processed = true;
    return m;
  };
  rep.examples = {make(0.0, 0.0, 10.0, 0.9), make(0.0, 5.0, 8.0, 0.8),
                  make(0.3, 0.0, 6.0, 0.7)};
  ExampleMetrics failed;
  failed.error = "bad example";
  rep.examples.push_back(failed);
  rep.processed = true;
  rep.aggregate();
  CHECK(rep.overall.count == 3);
  CHECK(rep.overall.si_sdr == doctest::Approx(8.0));
  REQUIRE(rep.by_t60.size() == 2);
  CHECK(rep.by_t60[0].key == 0.0);
  CHECK(rep.by_t60[0].count == 2);
  CHECK(rep.by_t60[0].si_sdr == doctest::Approx(9.0));
  CHECK(rep.by_t60[1].si_sdr == doctest::Approx(6.0));
  REQUIRE(rep.by_snr.size() == 2);
  CHECK(rep.by_snr[0].key == 0.0);
  CHECK(rep.by_snr[0].count == 2);
  CHECK(rep.overall.baseline_si_sdr == doctest::Approx(5.0));

  MetricReport empty;
  empty.examples = {failed};
  CHECK_THROWS(empty.aggregate());
}
