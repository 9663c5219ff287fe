#include "pease/scene.hpp"

#include <cmath>
#include <stdexcept>

namespace pease {

ShadowFilter head_shadow_filter(double azimuth_deg, MicSide side,
                                int sample_rate) {
  if (azimuth_deg < -180.0 || azimuth_deg > 180.0)
    throw std::invalid_argument("head_shadow_filter: azimuth out of range");
  const double az = azimuth_deg * M_PI / 180.0;
  // Contralateral amount: a left mic is shadowed by sources on the right
  // (positive azimuth) and vice versa; 0 at the median plane.
  const double amount =
      std::max(0.0, side == MicSide::Left ? std::sin(az) : -std::sin(az));
  // treat the median plane (0 or +-180 deg, up to rounding) as unshadowed
  if (amount < 1e-12) return ShadowFilter{0.0};
  const double fc_max = 8000.0, fc_min = 1200.0;
  const double fc = fc_max * std::pow(fc_min / fc_max, amount);
  return ShadowFilter{std::exp(-2.0 * M_PI * fc / sample_rate)};
}

Eigen::Vector3d source_position(const ArrayGeometry& array, double azimuth_deg,
                                double distance_m) {
  const double az = azimuth_deg * M_PI / 180.0;
  return array.listener_position +
         distance_m * Eigen::Vector3d(std::cos(az), -std::sin(az), 0.0);
}

Waveform render_source(const SceneSpec& spec, const SourceSpec& src,
                       Eigen::Index length, bool direct_path_only) {
  if (src.signal.channels() != 1)
    throw std::invalid_argument("render_source: source signal must be mono");
  if (src.signal.sample_rate != spec.sample_rate)
    throw std::invalid_argument("render_source: sample rate mismatch");
  if (src.signal.length() < length)
    throw std::invalid_argument("render_source: source signal too short");
  if (src.signal.samples.cwiseAbs().maxCoeff() <= 0.0)
    throw std::invalid_argument("render_source: silent source signal");

  const Eigen::Vector3d pos =
      source_position(spec.array, src.azimuth_deg, src.distance_m);
  Eigen::VectorXd dry = src.signal.samples.row(0).head(length).transpose();

  Waveform out;
  out.sample_rate = spec.sample_rate;
  out.samples.resize(8, length);
  for (int c = 0; c < 8; ++c) {
    const Eigen::Vector3d mic = spec.array.mic_position(c);
    Eigen::VectorXd rir =
        direct_path_only
            ? direct_path_rir(pos, mic, spec.sample_rate,
                              spec.room.speed_of_sound)
            : image_source_rir(spec.room, pos, mic, spec.sample_rate);
    Eigen::VectorXd wet = fft_convolve(dry, rir).head(length);
    const ShadowFilter shadow = head_shadow_filter(
        src.azimuth_deg, c < 4 ? MicSide::Left : MicSide::Right,
        spec.sample_rate);
    out.samples.row(c) = shadow.apply(wet).transpose();
  }
  return out;
}

double scale_noise_to_snr(const Waveform& speech_mix, const Waveform& noise,
                          double snr_db) {
  const double p_speech = speech_mix.samples.array().square().mean();
  const double p_noise = noise.samples.array().square().mean();
  if (p_speech <= 0.0 || p_noise <= 0.0)
    throw std::invalid_argument("scale_noise_to_snr: zero-power input");
  return std::sqrt(p_speech / (p_noise * std::pow(10.0, snr_db / 10.0)));
}

MixtureExample render_scene(const SceneSpec& spec) {
  const Eigen::Index length =
      static_cast<Eigen::Index>(std::llround(spec.duration_s * spec.sample_rate));

  Waveform left_render = render_source(spec, spec.talker_left, length);
  Waveform right_render = render_source(spec, spec.talker_right, length);
  Waveform speech_sum;
  speech_sum.sample_rate = spec.sample_rate;
  speech_sum.samples = left_render.samples + right_render.samples;

  Waveform mixture = speech_sum;
  if (spec.noise.signal.length() > 0) {
    Waveform noise_render = render_source(spec, spec.noise, length);
    const double g = scale_noise_to_snr(speech_sum, noise_render, spec.snr_db);
    mixture.samples += g * noise_render.samples;
  }

  // Direct-path in-ear targets; the mixture normalization gain carries over
  // so the mixture/target relationship stays linear.
  Waveform tl_all = render_source(spec, spec.talker_left, length, true);
  Waveform tr_all = render_source(spec, spec.talker_right, length, true);

  auto [normalized, gain] = peak_normalize(mixture, 0.99);

  MixtureExample ex;
  ex.mixture = std::move(normalized);
  ex.target_left = Waveform(
      tl_all.samples.row(spec.array.in_ear_left) * gain, spec.sample_rate);
  ex.target_right = Waveform(
      tr_all.samples.row(spec.array.in_ear_right) * gain, spec.sample_rate);
  ex.metadata.seed = spec.seed;
  ex.metadata.t60 = spec.room.t60;
  ex.metadata.snr_db = spec.snr_db;
  ex.metadata.distance_left = spec.talker_left.distance_m;
  ex.metadata.distance_right = spec.talker_right.distance_m;
  ex.metadata.distance_noise = spec.noise.distance_m;
  ex.metadata.noise_azimuth_deg = spec.noise.azimuth_deg;
  ex.metadata.normalization_gain = gain;
  return ex;
}

}  // namespace pease
