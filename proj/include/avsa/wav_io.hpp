#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "avsa/ambisonics.hpp"
#include "avsa/equirect_io.hpp"
#include "avsa/error.hpp"

namespace avsa {

// Minimal RIFF/WAVE reader and writer for interleaved multichannel PCM16
// or float32. Four-channel files are interpreted as ACN order (W, Y, Z, X).

struct WavData {
  int channels = 0;
  double sample_rate = 0.0;
  std::vector<std::vector<double>> samples;  // per channel
};

inline void write_wav_pcm16(const std::string& path,
                            const std::vector<const std::vector<double>*>& channels,
                            double sample_rate) {
  if (channels.empty()) throw DataError("write_wav: no channels");
  const size_t n = channels[0]->size();
  for (const auto* c : channels)
    if (c->size() != n) throw ShapeError("write_wav: channel length mismatch");
  const uint32_t nch = static_cast<uint32_t>(channels.size());
  const uint32_t byte_rate = static_cast<uint32_t>(sample_rate) * nch * 2;
  const uint32_t data_bytes = static_cast<uint32_t>(n * nch * 2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("write_wav: cannot open " + path);
  os.write("RIFF", 4);
  detail::write_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  detail::write_u32(os, 16);
  const uint16_t fmt = 1, block = static_cast<uint16_t>(nch * 2), bits = 16;
  os.write(reinterpret_cast<const char*>(&fmt), 2);
  const uint16_t nch16 = static_cast<uint16_t>(nch);
  os.write(reinterpret_cast<const char*>(&nch16), 2);
  detail::write_u32(os, static_cast<uint32_t>(sample_rate));
  detail::write_u32(os, byte_rate);
  os.write(reinterpret_cast<const char*>(&block), 2);
  os.write(reinterpret_cast<const char*>(&bits), 2);
  os.write("data", 4);
  detail::write_u32(os, data_bytes);
  std::vector<int16_t> frame(nch);
  for (size_t i = 0; i < n; ++i) {
    for (uint32_t c = 0; c < nch; ++c) {
      double v = (*channels[c])[i];
      v = v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
      frame[c] = static_cast<int16_t>(v >= 0 ? v * 32767.0 + 0.5 : v * 32768.0 - 0.5);
    }
    os.write(reinterpret_cast<const char*>(frame.data()), nch * 2);
  }
  if (!os) throw DataError("write_wav: write failed for " + path);
}

inline WavData read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_wav: cannot open " + path);
  char tag[4];
  is.read(tag, 4);
  if (std::memcmp(tag, "RIFF", 4) != 0) throw DataError("read_wav: not RIFF: " + path);
  detail::read_u32(is);
  is.read(tag, 4);
  if (std::memcmp(tag, "WAVE", 4) != 0) throw DataError("read_wav: not WAVE: " + path);
  uint16_t fmt = 0, nch = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  WavData out;
  while (is.read(tag, 4)) {
    uint32_t size = detail::read_u32(is);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      is.read(reinterpret_cast<char*>(&fmt), 2);
      is.read(reinterpret_cast<char*>(&nch), 2);
      rate = detail::read_u32(is);
      detail::read_u32(is);  // byte rate
      uint16_t block;
      is.read(reinterpret_cast<char*>(&block), 2);
      is.read(reinterpret_cast<char*>(&bits), 2);
      if (size > 16) is.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw DataError("read_wav: data before fmt in " + path);
      if (!((fmt == 1 && bits == 16) || (fmt == 3 && bits == 32)))
        throw DataError("read_wav: only PCM16 and float32 supported: " + path);
      const uint32_t bytes_per = bits / 8;
      const size_t frames = size / (nch * bytes_per);
      out.channels = nch;
      out.sample_rate = rate;
      out.samples.assign(nch, std::vector<double>(frames));
      std::vector<char> buf(nch * bytes_per);
      for (size_t i = 0; i < frames; ++i) {
        is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        for (int c = 0; c < nch; ++c) {
          if (fmt == 1) {
            int16_t v;
            std::memcpy(&v, buf.data() + c * 2, 2);
            out.samples[c][i] = v >= 0 ? v / 32767.0 : v / 32768.0;
          } else {
            float v;
            std::memcpy(&v, buf.data() + c * 4, 4);
            out.samples[c][i] = v;
          }
        }
      }
      if (!is) throw DataError("read_wav: truncated data in " + path);
      return out;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
    }
  }
  throw DataError("read_wav: no data chunk in " + path);
}

inline void write_foa_wav(const std::string& path, const AmbisonicClip& clip) {
  write_wav_pcm16(path, {&clip.w, &clip.y, &clip.z, &clip.x}, clip.sample_rate);
}

inline AmbisonicClip read_foa_wav(const std::string& path) {
  WavData w = read_wav(path);
  if (w.channels != 4) throw DataError("read_foa_wav: expected 4 channels in " + path);
  AmbisonicClip c;
  c.sample_rate = w.sample_rate;
  c.w = std::move(w.samples[0]);
  c.y = std::move(w.samples[1]);
  c.z = std::move(w.samples[2]);
  c.x = std::move(w.samples[3]);
  return c;
}

}  // namespace avsa
