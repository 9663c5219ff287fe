#pragma once

#include <string>

#include "pease/waveform.hpp"

namespace pease {

enum class WavFormat { Pcm16, Float32 };

void write_wav(const std::string& path, const Waveform& w,
               WavFormat fmt = WavFormat::Float32);

Waveform read_wav(const std::string& path);

// Reads and checks the header rate against `expected_rate` (throws on
// mismatch); pass 0 to accept any rate.
Waveform read_wav(const std::string& path, int expected_rate);

}  // namespace pease
