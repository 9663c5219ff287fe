#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <complex>
#include <cstdio>
#include <filesystem>

#include "oracles.hpp"
#include "pease/stft.hpp"
#include "pease/wav_io.hpp"
#include "pease/waveform.hpp"

using namespace pease;

TEST_CASE("hann window is periodic and satisfies COLA at 50% overlap") {
  auto w = hann_window(512);
  REQUIRE(w.size() == 512);
  CHECK(w[0] == doctest::Approx(0.0));
  // periodic (DFT-even): w[k] + w[k + hop] == 1 identically
  for (int k = 0; k < 256; ++k)
    CHECK(w[k] + w[k + 256] == doctest::Approx(1.0).epsilon(1e-12));
  // symmetric about N/2
  for (int k = 1; k < 256; ++k)
    CHECK(w[k] == doctest::Approx(w[512 - k]).epsilon(1e-12));
}

TEST_CASE("rfft/irfft round trip") {
  Rng rng(11);
  Eigen::VectorXd x(64);
  for (int i = 0; i < 64; ++i) x[i] = rng.uniform(-1, 1);
  auto spec = rfft(x, 64);
  REQUIRE(spec.size() == 33);
  CHECK(std::abs(spec[0].imag()) < 1e-12);
  CHECK(std::abs(spec[32].imag()) < 1e-12);
  auto back = irfft(spec, 64);
  CHECK((back - x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rfft matches a direct DFT") {
  Rng rng(5);
  Eigen::VectorXd x(32);
  for (int i = 0; i < 32; ++i) x[i] = rng.uniform(-1, 1);
  auto spec = rfft(x, 32);
  for (int f = 0; f <= 16; ++f) {
    std::complex<double> acc(0, 0);
    for (int n = 0; n < 32; ++n)
      acc += x[n] * std::exp(std::complex<double>(0, -2.0 * M_PI * f * n / 32));
    CHECK(std::abs(spec[f] - acc) < 1e-10);
  }
}

TEST_CASE("stft frame count covers the whole signal") {
  Rng rng(1);
  // exactly window-length input -> single frame
  auto w1 = oracles::random_waveform(rng, 1, 512);
  CHECK(stft(w1).frames() == 1);
  // one extra sample forces a padded extra frame
  auto w2 = oracles::random_waveform(rng, 1, 513);
  CHECK(stft(w2).frames() == 2);
  auto w3 = oracles::random_waveform(rng, 2, 16000);
  auto S = stft(w3);
  CHECK(S.channels() == 2);
  CHECK(S.bins() == 257);
  CHECK(S.num_samples == 16000);
  // every sample index is under some frame
  CHECK((S.frames() - 1) * 256 + 512 >= 16000);
}

TEST_CASE("stft rejects signals shorter than one window") {
  Rng rng(2);
  auto w = oracles::random_waveform(rng, 1, 511);
  CHECK_THROWS_AS(stft(w), std::invalid_argument);
}

TEST_CASE("istft round trip is exact on the interior") {
  Rng rng(3);
  for (int trial = 0; trial < 4; ++trial) {
    auto w = oracles::random_waveform(rng, 2, 16000);
    auto back = istft(stft(w));
    REQUIRE(back.length() == w.length());
    // interior: skip one window at each edge
    auto diff = (back.samples - w.samples).cwiseAbs();
    CHECK(diff.middleCols(512, 16000 - 1024).maxCoeff() < 1e-10);
  }
}

TEST_CASE("istft rejects non-COLA configs") {
  Rng rng(4);
  auto w = oracles::random_waveform(rng, 1, 4096);
  auto S = stft(w);
  S.config.hop = 200;
  CHECK_THROWS_AS(istft(S), std::invalid_argument);
}

TEST_CASE("istft_adjoint satisfies the dot-product identity") {
  // <istft(S), g> == <S, adjoint(g)> with the one-sided real inner product
  // Re sum_f mult(f) * conj(S) .* G ... the adjoint already folds the
  // multiplicities, so the right side is the plain real dot over planes.
  Rng rng(7);
  auto w = oracles::random_waveform(rng, 2, 3000);
  auto S = stft(w);
  // random spectra, not necessarily consistent
  for (auto& m : S.values)
    for (Eigen::Index t = 0; t < m.rows(); ++t)
      for (Eigen::Index f = 0; f < m.cols(); ++f)
        m(t, f) = std::complex<double>(rng.uniform(-1, 1), rng.uniform(-1, 1));
  auto y = istft(S);
  Eigen::MatrixXd g(2, y.length());
  for (int c = 0; c < 2; ++c)
    for (Eigen::Index i = 0; i < y.length(); ++i)
      g(c, i) = rng.uniform(-1, 1);

  double lhs = (y.samples.array() * g.array()).sum();
  auto G = istft_adjoint(g, S);
  double rhs = 0.0;
  for (size_t c = 0; c < G.size(); ++c)
    rhs += (S.values[c].real().array() * G[c].real().array()).sum() +
           (S.values[c].imag().array() * G[c].imag().array()).sum();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
}

TEST_CASE("frame_context pads with zeros at the edges") {
  Rng rng(9);
  auto S = stft(oracles::random_waveform(rng, 1, 2048));
  auto ctx = frame_context(S, 0, 2);
  REQUIRE(ctx.values.size() == 1);
  CHECK(ctx.values[0].rows() == 5);
  CHECK(ctx.values[0].row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(ctx.values[0].row(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ctx.values[0].row(2) - S.values[0].row(0)).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK_THROWS_AS(frame_context(S, S.frames(), 1), std::out_of_range);
}

TEST_CASE("peak_normalize scales to the requested peak") {
  Waveform w;
  w.samples.resize(2, 4);
  w.samples << 0.1, -0.5, 0.2, 0.0, 0.3, 0.1, -0.25, 0.0;
  auto [out, gain] = peak_normalize(w, 0.99);
  CHECK(out.samples.cwiseAbs().maxCoeff() == doctest::Approx(0.99));
  CHECK(gain == doctest::Approx(0.99 / 0.5));
  Waveform z;
  z.samples = Eigen::MatrixXd::Zero(1, 8);
  CHECK_THROWS_AS(peak_normalize(z), std::invalid_argument);
}

TEST_CASE("wav io round trips float32 and pcm16") {
  namespace fs = std::filesystem;
  Rng rng(21);
  auto w = oracles::random_waveform(rng, 2, 1000);
  auto dir = fs::temp_directory_path() / "pease_wav_test";
  fs::create_directories(dir);
  auto f32 = (dir / "a.wav").string();
  auto p16 = (dir / "b.wav").string();
  write_wav(f32, w, WavFormat::Float32);
  write_wav(p16, w, WavFormat::Pcm16);
  auto r32 = read_wav(f32, 16000);
  auto r16 = read_wav(p16);
  CHECK(r32.sample_rate == 16000);
  CHECK(r32.channels() == 2);
  CHECK((r32.samples - w.samples).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((r16.samples - w.samples).cwiseAbs().maxCoeff() < 1.0 / 32000.0);
  CHECK_THROWS(read_wav(f32, 44100));
  fs::remove_all(dir);
}

TEST_CASE("rng streams are deterministic and well distributed") {
  Rng a(123), b(123), c(124);
  CHECK(a.next_u64() == b.next_u64());
  CHECK(a.uniform() == b.uniform());
  CHECK(a.normal() == b.normal());
  CHECK(Rng(123).next_u64() != c.next_u64());
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));

  Rng r(77);
  double mean = 0, var = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    mean += x;
    var += x * x;
  }
  mean /= n;
  var = var / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));

  Rng u(78);
  for (int i = 0; i < 1000; ++i) {
    auto v = u.uniform_int(-3, 3);
    CHECK(v >= -3);
    CHECK(v <= 3);
  }
}
