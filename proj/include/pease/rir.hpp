#pragma once

#include <Eigen/Dense>

namespace pease {

struct RoomSpec {
  Eigen::Vector3d dimensions{12.0, 12.5, 3.0};
  double t60 = 0.0;  // seconds, 0 = anechoic
  double speed_of_sound = 343.0;
};

// Shoebox image-source impulse response from src to mic. Per-axis wall
// reflectivity is inverted from t60 so the Schroeder-measured decay of the
// realized response matches the request even in non-cubic rooms. Fractional
// delays use an 81-tap Hann-windowed sinc; amplitudes follow 1/r spreading.
// t60 = 0 keeps only the direct path.
Eigen::VectorXd image_source_rir(const RoomSpec& room,
                                 const Eigen::Vector3d& src,
                                 const Eigen::Vector3d& mic, int sample_rate);

// Direct path only: a single fractional-delay pulse with 1/r amplitude.
// Positions need not lie in any room.
Eigen::VectorXd direct_path_rir(const Eigen::Vector3d& src,
                                const Eigen::Vector3d& mic, int sample_rate,
                                double speed_of_sound = 343.0);

// FFT convolution, output trimmed to x.size() + h.size() - 1.
Eigen::VectorXd fft_convolve(const Eigen::VectorXd& x,
                             const Eigen::VectorXd& h);

}  // namespace pease
