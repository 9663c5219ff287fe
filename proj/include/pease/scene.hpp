#pragma once

#include <array>
#include <string>

#include "pease/rir.hpp"
#include "pease/waveform.hpp"

namespace pease {

// Coordinate frame: x forward, y to the listener's left, z up. Azimuth in
// degrees, positive to the right; +60 deg is the right-ear talker.
struct ArrayGeometry {
  Eigen::Vector3d listener_position{5.6, 6.5, 1.5};
  double head_radius = 0.0875;
  int in_ear_left = 0;   // channel index of the left in-ear mic
  int in_ear_right = 4;  // channel index of the right in-ear mic

  // Channels 0-3 left group, 4-7 right group: in-ear at the interaural axis,
  // three external mics 1 cm above the ear spaced 1 cm front-to-back.
  std::array<Eigen::Vector3d, 8> mic_offsets() const {
    std::array<Eigen::Vector3d, 8> m;
    for (int side = 0; side < 2; ++side) {
      const double y = side == 0 ? head_radius : -head_radius;
      m[4 * side + 0] = {0.0, y, 0.0};
      m[4 * side + 1] = {0.01, y, 0.01};
      m[4 * side + 2] = {0.0, y, 0.01};
      m[4 * side + 3] = {-0.01, y, 0.01};
    }
    return m;
  }

  Eigen::Vector3d mic_position(int channel) const {
    return listener_position + mic_offsets()[static_cast<size_t>(channel)];
  }
};

enum class MicSide { Left, Right };

// Single-pole low-pass standing in for the head-shadow ILD. Identity for
// ipsilateral and median-plane sources; the cutoff falls smoothly with
// contralateral angle (8 kHz down to 1.2 kHz at 90 deg).
struct ShadowFilter {
  double pole = 0.0;  // y[n] = (1-pole)*x[n] + pole*y[n-1]; 0 = identity

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    if (pole == 0.0) return x;
    Eigen::VectorXd y(x.size());
    double state = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      state = (1.0 - pole) * x[i] + pole * state;
      y[i] = state;
    }
    return y;
  }
};

ShadowFilter head_shadow_filter(double azimuth_deg, MicSide side,
                                int sample_rate = 16000);

struct SourceSpec {
  enum class Kind { Speech, Noise };
  Kind kind = Kind::Speech;
  double azimuth_deg = 60.0;  // speech fixed at +60 or -60
  double distance_m = 1.5;    // speech in [1,2], noise in [2,5]
  Waveform signal;            // mono, at the scene rate
};

struct SceneSpec {
  RoomSpec room;
  ArrayGeometry array;
  SourceSpec talker_left;   // -60 deg, scored at the left ear
  SourceSpec talker_right;  // +60 deg, scored at the right ear
  SourceSpec noise;
  double snr_db = 10.0;
  uint64_t seed = 0;  // recorded for reproducibility bookkeeping
  double duration_s = 3.0;
  int sample_rate = 16000;
};

struct MixtureMetadata {
  std::string id;
  uint64_t seed = 0;
  double t60 = 0.0;
  double snr_db = 0.0;
  double distance_left = 0.0, distance_right = 0.0, distance_noise = 0.0;
  double noise_azimuth_deg = 0.0;
  std::string speaker_left, speaker_right;
  double normalization_gain = 1.0;
};

struct MixtureExample {
  Waveform mixture;       // 8 channels
  Waveform target_left;   // direct-path render of the -60 talker, left ear
  Waveform target_right;  // +60 talker, right ear
  MixtureMetadata metadata;
};

// Renders one source through its 8-mic image-source RIR set plus head-shadow
// filters. Output has exactly `length` samples per channel.
Waveform render_source(const SceneSpec& spec, const SourceSpec& src,
                       Eigen::Index length, bool direct_path_only = false);

// Gain g such that 10*log10(P_speech / (g^2 * P_noise)) == snr_db, powers
// averaged over all channels.
double scale_noise_to_snr(const Waveform& speech_mix, const Waveform& noise,
                          double snr_db);

MixtureExample render_scene(const SceneSpec& spec);

// Source position for an azimuth/distance pair relative to the listener.
Eigen::Vector3d source_position(const ArrayGeometry& array, double azimuth_deg,
                                double distance_m);

}  // namespace pease
