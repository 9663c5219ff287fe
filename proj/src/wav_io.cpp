#include "pease/wav_io.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace pease {

namespace {

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}
void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
}
uint32_t get_u32(const uint8_t* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (uint32_t(p[3]) << 24);
}
uint16_t get_u16(const uint8_t* p) { return p[0] | (p[1] << 8); }

}  // namespace

void write_wav(const std::string& path, const Waveform& w, WavFormat fmt) {
  if (w.channels() < 1 || w.length() < 1)
    throw std::invalid_argument("write_wav: empty waveform");
  const int nch = static_cast<int>(w.channels());
  const int64_t nframes = w.length();
  const int bytes_per = fmt == WavFormat::Pcm16 ? 2 : 4;
  const uint32_t data_size = static_cast<uint32_t>(nframes * nch * bytes_per);

  std::vector<uint8_t> b;
  b.reserve(44 + data_size);
  const char* riff = "RIFF";
  b.insert(b.end(), riff, riff + 4);
  put_u32(b, 36 + data_size);
  const char* wavefmt = "WAVEfmt ";
  b.insert(b.end(), wavefmt, wavefmt + 8);
  put_u32(b, 16);
  put_u16(b, fmt == WavFormat::Pcm16 ? 1 : 3);  // PCM / IEEE float
  put_u16(b, static_cast<uint16_t>(nch));
  put_u32(b, static_cast<uint32_t>(w.sample_rate));
  put_u32(b, static_cast<uint32_t>(w.sample_rate * nch * bytes_per));
  put_u16(b, static_cast<uint16_t>(nch * bytes_per));
  put_u16(b, static_cast<uint16_t>(8 * bytes_per));
  const char* data = "data";
  b.insert(b.end(), data, data + 4);
  put_u32(b, data_size);

  for (int64_t i = 0; i < nframes; ++i) {
    for (int c = 0; c < nch; ++c) {
      double v = w.samples(c, i);
      if (fmt == WavFormat::Pcm16) {
        double clamped = std::clamp(v, -1.0, 1.0);
        int16_t q = static_cast<int16_t>(std::lrint(clamped * 32767.0));
        put_u16(b, static_cast<uint16_t>(q));
      } else {
        float f = static_cast<float>(v);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(b, bits);
      }
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_wav: cannot open " + path);
  out.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
  if (!out) throw std::runtime_error("write_wav: write failed for " + path);
}

Waveform read_wav(const std::string& path) { return read_wav(path, 0); }

Waveform read_wav(const std::string& path, int expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_wav: cannot open " + path);
  std::vector<uint8_t> b((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  if (b.size() < 44 || std::memcmp(b.data(), "RIFF", 4) != 0 ||
      std::memcmp(b.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("read_wav: not a RIFF/WAVE file: " + path);

  size_t pos = 12;
  uint16_t format = 0, nch = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* data_ptr = nullptr;
  uint32_t data_size = 0;
  while (pos + 8 <= b.size()) {
    uint32_t chunk_size = get_u32(b.data() + pos + 4);
    if (std::memcmp(b.data() + pos, "fmt ", 4) == 0 && chunk_size >= 16) {
      format = get_u16(b.data() + pos + 8);
      nch = get_u16(b.data() + pos + 10);
      rate = get_u32(b.data() + pos + 12);
      bits = get_u16(b.data() + pos + 22);
    } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
      data_ptr = b.data() + pos + 8;
      data_size = std::min<uint32_t>(chunk_size,
                                     static_cast<uint32_t>(b.size() - pos - 8));
    }
    pos += 8 + chunk_size + (chunk_size & 1);
  }
  if (!data_ptr || nch == 0) throw std::runtime_error("read_wav: malformed " + path);
  if (expected_rate > 0 && rate != static_cast<uint32_t>(expected_rate))
    throw std::runtime_error("read_wav: " + path + " is " +
                             std::to_string(rate) + " Hz, expected " +
                             std::to_string(expected_rate));

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    int64_t nframes = data_size / (2 * nch);
    w.samples.resize(nch, nframes);
    for (int64_t i = 0; i < nframes; ++i)
      for (int c = 0; c < nch; ++c) {
        int16_t q = static_cast<int16_t>(get_u16(data_ptr + (i * nch + c) * 2));
        w.samples(c, i) = q / 32767.0;
      }
  } else if (format == 3 && bits == 32) {
    int64_t nframes = data_size / (4 * nch);
    w.samples.resize(nch, nframes);
    for (int64_t i = 0; i < nframes; ++i)
      for (int c = 0; c < nch; ++c) {
        uint32_t raw = get_u32(data_ptr + (i * nch + c) * 4);
        float f;
        std::memcpy(&f, &raw, 4);
        w.samples(c, i) = f;
      }
  } else {
    throw std::runtime_error("read_wav: unsupported format in " + path +
                             " (need PCM16 or float32)");
  }
  return w;
}

}  // namespace pease
